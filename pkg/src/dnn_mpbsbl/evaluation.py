"""SNR sweeps over all estimators and the result CSV."""
from __future__ import annotations

import csv
import io
import math
import sys
from dataclasses import astuple, dataclass, fields

import numpy as np

from .baselines import GenieInfo, bomp, ga_mmse
from .config import SystemConfig
from .errors import DimensionError
from .metrics import batch_nmse, pooled_uad
from .mpbsbl import Estimate, run
from .pilots import ExpandedPilot
from .scenario import Dataset, generate_dataset
from .unfolded import WeightSet, infer

ESTIMATORS = ("mp-bsbl", "dnn", "bomp", "ga-mmse")
CHUNK = 2000


@dataclass(frozen=True)
class EvalRow:
    snr_db: float
    estimator: str
    nit: int
    nmse: float
    uad_miss: float
    uad_fa: float
    n: int
    seed: int

    def __post_init__(self):
        for rate in (self.uad_miss, self.uad_fa):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"rate {rate} outside [0, 1]")
        if self.nmse < 0:
            raise ValueError(f"negative nmse {self.nmse}")


HEADER = [f.name for f in fields(EvalRow)]


def _stack(parts: list[Estimate]) -> tuple[np.ndarray, np.ndarray]:
    return (np.concatenate([np.atleast_2d(p.h_hat) for p in parts]),
            np.concatenate([np.atleast_2d(p.active) for p in parts]))


def estimate(name: str, ds: Dataset, cfg: SystemConfig, pilot: ExpandedPilot,
             weights: WeightSet | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Channel estimates ``(S, K*dc)`` and activity decisions ``(S, K)``."""
    S = len(ds)
    if S == 0:
        return np.zeros((0, pilot.n_var), complex), np.zeros((0, cfg.K), bool)
    if name == "mp-bsbl":
        parts = [run(ds.y[i:i + CHUNK], pilot, cfg) for i in range(0, S, CHUNK)]
    elif name == "dnn":
        if weights is None:
            raise DimensionError("the dnn estimator needs a weight set")
        parts = [infer(ds.y[i:i + CHUNK], pilot, weights, cfg) for i in range(0, S, CHUNK)]
    elif name == "bomp":
        parts = [bomp(ds.y[i], pilot, int(ds.alpha[i].sum()), cfg.K,
                       rank_deficient="min-norm") for i in range(S)]
    elif name == "ga-mmse":
        nv = ds.noise_var
        parts = [
            ga_mmse(ds.y[i], pilot, GenieInfo(np.flatnonzero(ds.alpha[i]), float(nv[i])), cfg.K)
            for i in range(S)
        ]
    else:
        raise ValueError(f"unknown estimator {name!r}")
    return _stack(parts)


def evaluate(name: str, ds: Dataset, cfg: SystemConfig, pilot: ExpandedPilot,
             weights: WeightSet | None = None, seed: int = 0) -> EvalRow:
    """One row for a single-SNR test set."""
    snrs = np.unique(ds.snr_db)
    if snrs.size > 1:
        raise DimensionError(f"test set mixes {snrs.size} SNR points")
    h_hat, active = estimate(name, ds, cfg, pilot, weights)
    val, n = batch_nmse(h_hat, ds.h_bar) if len(ds) else (math.nan, 0)
    miss, fa = pooled_uad(active, ds.alpha) if len(ds) else (0.0, 0.0)
    nit = {"mp-bsbl": cfg.Nit, "dnn": weights.n_blocks if weights else 0}.get(name, 0)
    snr = float(snrs[0]) if snrs.size else math.nan
    return EvalRow(snr, name, nit, val, miss, fa, n, seed)


def sweep_snr(cfg: SystemConfig, pilot: ExpandedPilot, estimators, snr_list=None,
              count: int = 1000, seed: int = 0, dataset: Dataset | None = None,
              weights=None, out=None) -> list[EvalRow]:
    """One :class:`EvalRow` per (SNR, estimator).

    Test sets come from ``dataset`` (grouped by SNR) or are generated with
    ``count`` samples per point from ``seed``; every SNR point reuses the same
    seed so activity patterns and channels are shared across the sweep.
    ``weights`` is a :class:`WeightSet` or a mapping from SNR to one. ``out``
    is a path, a text stream, or ``None`` for no output.
    """
    estimators = list(estimators)
    for name in estimators:
        if name not in ESTIMATORS:
            raise ValueError(f"unknown estimator {name!r}")
    if dataset is not None:
        dataset.check(cfg)
        if snr_list is None:
            snr_list = np.unique(dataset.snr_db).tolist()
    rows = []
    for snr in [float(s) for s in (snr_list or [])]:
        if dataset is not None:
            ds = dataset.subset(np.flatnonzero(dataset.snr_db == snr))
        else:
            ds = generate_dataset(cfg, pilot, [snr], count, seed)
        w = weights.get(snr) if isinstance(weights, dict) else weights
        for name in estimators:
            row = evaluate(name, ds, cfg, pilot, w, seed)
            rows.append(EvalRow(snr, *astuple(row)[1:]))
    if out is not None:
        write_rows(rows, out)
    return rows


def write_rows(rows, out) -> None:
    if isinstance(out, io.TextIOBase) or out is sys.stdout:
        _write(rows, out)
    else:
        with open(out, "w", newline="") as fh:
            _write(rows, fh)


def _write(rows, fh) -> None:
    wr = csv.writer(fh, lineterminator="\n")
    wr.writerow(HEADER)
    for r in rows:
        wr.writerow([repr(r.snr_db), r.estimator, r.nit, repr(r.nmse),
                     repr(r.uad_miss), repr(r.uad_fa), r.n, r.seed])


def read_rows(path) -> list[EvalRow]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != HEADER:
            raise ValueError(f"unexpected header {rd.fieldnames}")
        return [
            EvalRow(float(r["snr_db"]), r["estimator"], int(r["nit"]), float(r["nmse"]),
                    float(r["uad_miss"]), float(r["uad_fa"]), int(r["n"]), int(r["seed"]))
            for r in rd
        ]
