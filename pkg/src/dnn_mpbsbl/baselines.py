"""Genie-aided MMSE bound and block orthogonal matching pursuit."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, SingularityError
from .mpbsbl import Estimate
from .pilots import ExpandedPilot

COND_LIMIT = 1e13


@dataclass(frozen=True)
class GenieInfo:
    active_set: np.ndarray
    noise_var: float


def _columns(active_set, dc: int) -> np.ndarray:
    active_set = np.asarray(active_set, dtype=int)
    return (active_set[:, None] * dc + np.arange(dc)).ravel()


def _estimate(h_hat, active_set, K, dc) -> Estimate:
    active = np.zeros(K, bool)
    active[np.asarray(active_set, dtype=int)] = True
    energy = (np.abs(h_hat) ** 2).reshape(K, dc).mean(axis=1)
    return Estimate(h_hat, active, energy)


def _normal_matrix(P_A: np.ndarray, noise_var: float) -> np.ndarray:
    G = P_A.conj().T @ P_A + noise_var * np.eye(P_A.shape[1])
    if np.linalg.cond(G) > COND_LIMIT:
        raise SingularityError(
            f"normal matrix is numerically singular (noise_var={noise_var})"
        )
    return G


def ga_mmse(y, pilot: ExpandedPilot, genie: GenieInfo, K: int) -> Estimate:
    """MMSE estimate of the active blocks under a unit-variance Gaussian prior."""
    dc = pilot.n_var // K
    h_hat = np.zeros(pilot.n_var, dtype=complex)
    cols = _columns(genie.active_set, dc)
    if cols.size:
        P_A = pilot.dense[:, cols]
        G = _normal_matrix(P_A, genie.noise_var)
        h_hat[cols] = sla.solve(G, P_A.conj().T @ np.asarray(y), assume_a="her")
    return _estimate(h_hat, genie.active_set, K, dc)


def posterior_mse_oracle(pilot: ExpandedPilot, active_set, noise_var: float, K: int) -> float:
    """Trace of the posterior covariance, the expected squared error of :func:`ga_mmse`."""
    dc = pilot.n_var // K
    cols = _columns(active_set, dc)
    if cols.size == 0:
        return 0.0
    if noise_var == 0:
        _normal_matrix(pilot.dense[:, cols], 0.0)
        return 0.0
    G = _normal_matrix(pilot.dense[:, cols], noise_var)
    return float(noise_var * np.trace(np.linalg.inv(G)).real)


def bomp(y, pilot: ExpandedPilot, Ka: int, K: int, residuals: list | None = None,
         rank_deficient: str = "raise") -> Estimate:
    """Greedy block support of size ``Ka`` with a least-squares refit after each pick.

    If ``residuals`` is a list, the residual norm after every pick is appended.
    A rank-deficient support raises, or with ``rank_deficient="min-norm"``
    keeps the minimum-norm least-squares fit (used by sweeps, where a few
    such supports are expected once many users share a subcarrier).
    """
    if rank_deficient not in ("raise", "min-norm"):
        raise ValueError(f"unknown rank_deficient policy {rank_deficient!r}")
    if not 0 <= Ka <= K:
        raise DimensionError(f"Ka={Ka} outside [0, K={K}]")
    dc = pilot.n_var // K
    P = pilot.dense
    y = np.asarray(y)
    r = y.copy()
    chosen: list[int] = []
    coef = np.zeros(0, dtype=complex)
    for _ in range(Ka):
        corr = (P.conj().T @ r).reshape(K, dc)
        score = np.linalg.norm(corr, axis=1)
        score[chosen] = -np.inf
        chosen.append(int(np.argmax(score)))
        cols = _columns(chosen, dc)
        P_S = P[:, cols]
        coef, _, rank, _ = np.linalg.lstsq(P_S, y, rcond=None)
        if rank < cols.size and rank_deficient == "raise":
            raise SingularityError(f"selected support {chosen} is rank deficient")
        r = y - P_S @ coef
        if residuals is not None:
            residuals.append(float(np.linalg.norm(r)))
    h_hat = np.zeros(pilot.n_var, dtype=complex)
    if chosen:
        h_hat[_columns(chosen, dc)] = coef
    return _estimate(h_hat, sorted(chosen), K, dc)
