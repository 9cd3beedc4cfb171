"""Estimation and detection metrics."""
from __future__ import annotations

import numpy as np

from .errors import DegenerateSampleError, DimensionError


def nmse(h_hat, h_true) -> float:
    h_hat, h_true = np.asarray(h_hat), np.asarray(h_true)
    if h_hat.shape != h_true.shape:
        raise DimensionError(f"shape mismatch {h_hat.shape} vs {h_true.shape}")
    energy = float(np.sum(np.abs(h_true) ** 2))
    if energy == 0.0:
        raise DegenerateSampleError("NMSE undefined for an all-zero channel")
    return float(np.sum(np.abs(h_hat - h_true) ** 2)) / energy


def batch_nmse(h_hat, h_true) -> tuple[float, int]:
    """Mean per-sample NMSE over samples with a nonzero channel, and their count."""
    h_hat, h_true = np.atleast_2d(h_hat), np.atleast_2d(h_true)
    energy = np.sum(np.abs(h_true) ** 2, axis=1)
    keep = energy > 0
    if not keep.any():
        return float("nan"), 0
    err = np.sum(np.abs(h_hat[keep] - h_true[keep]) ** 2, axis=1)
    return float(np.mean(err / energy[keep])), int(keep.sum())


def uad_metrics(active_hat, alpha_true, K: int | None = None) -> tuple[float, float]:
    """Miss and false-alarm rates for one sample.

    ``active_hat`` and ``alpha_true`` are either boolean/0-1 vectors of length
    ``K`` or collections of user indices (then ``K`` is required).
    """
    if K is None:
        det = np.asarray(active_hat, dtype=bool)
        truth = np.asarray(alpha_true, dtype=bool)
        K = truth.size
    else:
        det = np.zeros(K, bool)
        truth = np.zeros(K, bool)
        det[list(active_hat)] = True
        truth[list(alpha_true)] = True
    n_true = int(truth.sum())
    miss = np.count_nonzero(truth & ~det) / max(1, n_true)
    fa = np.count_nonzero(det & ~truth) / max(1, K - n_true)
    return miss, fa


def pooled_uad(active_hat, alpha_true) -> tuple[float, float]:
    """Miss / false-alarm rates pooled over a batch (ratio of total counts)."""
    det = np.atleast_2d(np.asarray(active_hat, dtype=bool))
    truth = np.atleast_2d(np.asarray(alpha_true, dtype=bool))
    n_act = int(truth.sum())
    n_inact = truth.size - n_act
    miss = np.count_nonzero(truth & ~det) / max(1, n_act)
    fa = np.count_nonzero(det & ~truth) / max(1, n_inact)
    return miss, fa
