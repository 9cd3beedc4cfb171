"""Message-passing block sparse Bayesian learning (unweighted reference).

All routines accept a single observation ``y`` of shape ``(N*Lt,)`` or a
batch of shape ``(B, N*Lt)``; state arrays then carry the same leading axis.
The reduced pilot matrix is applied through its scipy sparse form, which
keeps this implementation independent of the edge gather/scatter used by the
unfolded network.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .config import SystemConfig
from .errors import NumericalError
from .pilots import ExpandedPilot

LAMBDA_MIN = 1e-6
LAMBDA_MAX = 1e9


@dataclass
class MessageState:
    lambda_hat: np.ndarray  # (B,)
    gamma_hat: np.ndarray  # (B, K)
    v_dz: np.ndarray  # (B, n_obs)
    m_dz: np.ndarray
    m_h: np.ndarray  # (B, K*dc)
    v_h: np.ndarray | None = None
    v_Q: np.ndarray | None = None
    m_Q: np.ndarray | None = None
    v_z: np.ndarray | None = None
    m_z: np.ndarray | None = None

    def copy(self) -> "MessageState":
        return MessageState(**{
            f.name: None if getattr(self, f.name) is None else getattr(self, f.name).copy()
            for f in fields(self)
        })

    def check_finite(self) -> None:
        for f in fields(self):
            val = getattr(self, f.name)
            if val is not None and not np.all(np.isfinite(val)):
                raise NumericalError(f"non-finite values in {f.name}")


@dataclass
class Estimate:
    h_hat: np.ndarray
    active: np.ndarray  # boolean activity decision per user
    gamma_inv: np.ndarray

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.active)


def floor(x, eps):
    return np.maximum(x, eps)


def init_state(cfg: SystemConfig, pilot: ExpandedPilot, batch: int = 1) -> MessageState:
    n, J = pilot.n_obs, pilot.n_var
    return MessageState(
        lambda_hat=np.full(batch, cfg.lambda0),
        gamma_hat=np.ones((batch, cfg.K)),
        v_dz=np.ones((batch, n)),
        m_dz=np.zeros((batch, n), dtype=complex),
        m_h=np.zeros((batch, J), dtype=complex),
    )


def _rmul(M, X):
    """Row-batched ``M @ x`` for a sparse ``M`` and ``X`` of shape (B, cols)."""
    return np.asarray((M @ X.T).T)


def update_gamma(m_h, v_h, cfg: SystemConfig):
    """Mean-field precision update, summing the block energy over ``dc`` slots."""
    m_h, v_h = np.atleast_2d(m_h), np.atleast_2d(v_h)
    B = m_h.shape[0]
    energy = (np.abs(m_h) ** 2 + v_h).reshape(B, cfg.K, cfg.dc).sum(axis=2)
    return (cfg.a + cfg.dc + 1) / floor(cfg.b + energy, cfg.eps_v)


def update_lambda(m_z, v_z, y, cfg: SystemConfig):
    m_z, v_z, y = np.atleast_2d(m_z), np.atleast_2d(v_z), np.atleast_2d(y)
    n_obs = y.shape[1]
    dev = (np.abs(m_z - y) ** 2).sum(axis=1) + v_z.sum(axis=1)
    return np.clip(n_obs / floor(dev, cfg.eps_v), LAMBDA_MIN, LAMBDA_MAX)


def iterate(state: MessageState, y, pilot: ExpandedPilot, cfg: SystemConfig) -> MessageState:
    """One sweep in the order Q -> h -> gamma -> delta-to-z -> z -> lambda."""
    eps = cfg.eps_v
    y = np.atleast_2d(y)
    A = pilot.sparse
    A2 = abs(A).power(2)
    lam = state.lambda_hat[:, None]
    v_dz, m_dz = state.v_dz, state.m_dz

    # extrinsic information on every channel coefficient
    denom = floor(1.0 / lam + v_dz, eps)
    prec = _rmul(A2.T, 1.0 / denom)
    v_Q = floor(1.0 / floor(prec, eps), eps)
    m_Q = v_Q * _rmul(A.conj().T, (y - m_dz) / denom) + state.m_h

    gam = np.repeat(state.gamma_hat, cfg.dc, axis=1)
    v_h = floor(1.0 / floor(1.0 / v_Q + gam, eps), eps)
    m_h = m_Q / floor(1.0 + v_Q * gam, eps)

    gamma_hat = update_gamma(m_h, v_h, cfg)

    v_dz_new = floor(_rmul(A2, v_h), eps)
    m_dz_new = _rmul(A, m_h) - v_dz_new * (y - m_dz) / denom

    v_z = floor(1.0 / floor(lam + 1.0 / v_dz_new, eps), eps)
    m_z = v_z * (y * lam + m_dz_new / v_dz_new)

    out = MessageState(
        lambda_hat=update_lambda(m_z, v_z, y, cfg),
        gamma_hat=gamma_hat,
        v_dz=v_dz_new,
        m_dz=m_dz_new,
        m_h=m_h,
        v_h=v_h,
        v_Q=v_Q,
        m_Q=m_Q,
        v_z=v_z,
        m_z=m_z,
    )
    out.check_finite()
    return out


def decide(m_h, gamma_hat, cfg: SystemConfig) -> Estimate:
    """Declare user ``k`` active iff ``1/gamma_k > gamma_th`` and zero the rest."""
    gamma_inv = 1.0 / gamma_hat
    active = gamma_inv > cfg.gamma_th
    mask = np.repeat(active, cfg.dc, axis=-1)
    return Estimate(np.where(mask, m_h, 0.0), active, gamma_inv)


def run(y, pilot: ExpandedPilot, cfg: SystemConfig, n_iter: int | None = None,
        history: list | None = None) -> Estimate:
    """Run ``n_iter`` (default ``cfg.Nit``) sweeps and threshold the result.

    A single observation yields unbatched arrays in the returned estimate. If
    ``history`` is a list, every intermediate state is appended to it.
    """
    single = np.ndim(y) == 1
    y = np.atleast_2d(y)
    state = init_state(cfg, pilot, y.shape[0])
    for _ in range(cfg.Nit if n_iter is None else n_iter):
        state = iterate(state, y, pilot, cfg)
        if history is not None:
            history.append(state)
    est = decide(state.m_h, state.gamma_hat, cfg)
    if single:
        est = Estimate(est.h_hat[0], est.active[0], est.gamma_inv[0])
    return est
