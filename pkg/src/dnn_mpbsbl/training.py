"""Optimisers, the training loop and checkpoint files."""
from __future__ import annotations

import csv
import math
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backprop import backward
from .config import SystemConfig, fingerprint
from .errors import DimensionError, FingerprintError, FormatError, NumericalError
from .metrics import batch_nmse
from .pilots import ExpandedPilot
from .scenario import Dataset
from .unfolded import WEIGHT_NAMES, WeightSet, _sizes, forward, infer, init_weights

CKPT_MAGIC = b"WSET1"
CKPT_VERSION = 1


@dataclass
class OptState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_weights(cls, weights: WeightSet, lr: float = 1e-3, **kw) -> "OptState":
        n = weights.n_params
        return cls(np.zeros(n), np.zeros(n), 0, lr, **kw)


def adam_step(weights: WeightSet, grads: WeightSet, opt: OptState) -> tuple[WeightSet, OptState]:
    g = grads.flat()
    if g.size != opt.m.size or g.size != weights.n_params:
        raise DimensionError(
            f"gradient has {g.size} entries, weights {weights.n_params}, state {opt.m.size}"
        )
    step = opt.step + 1
    m = opt.beta1 * opt.m + (1 - opt.beta1) * g
    v = opt.beta2 * opt.v + (1 - opt.beta2) * g * g
    m_hat = m / (1 - opt.beta1 ** step)
    v_hat = v / (1 - opt.beta2 ** step)
    new = weights.flat() - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return weights.with_flat(new), OptState(m, v, step, opt.lr, opt.beta1, opt.beta2, opt.eps)


def sgd_step(weights: WeightSet, grads: WeightSet, opt: OptState) -> tuple[WeightSet, OptState]:
    new = weights.flat() - opt.lr * grads.flat()
    return weights.with_flat(new), OptState(opt.m, opt.v, opt.step + 1, opt.lr,
                                            opt.beta1, opt.beta2, opt.eps)


OPTIMIZERS = {"adam": adam_step, "sgd": sgd_step}


@dataclass
class TrainHyper:
    epochs: int = 20
    batch_size: int = 200
    lr: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"
    # "masked": error of the thresholded estimate, detection mask held fixed;
    # "soft": error of the pre-threshold mean
    loss: str = "masked"


@dataclass
class TrainReport:
    epoch_loss: list = field(default_factory=list)
    holdout_nmse: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    initial_nmse: float = float("nan")
    best_epoch: int = 0  # 0 means the all-ones initialisation
    seed: int = 0
    fingerprint: int = 0
    aborted: str = ""

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["epoch", "loss", "nmse_holdout", "seconds"])
            wr.writerow([0, "", repr(self.initial_nmse), 0.0])
            for i, (loss, nm, sec) in enumerate(
                zip(self.epoch_loss, self.holdout_nmse, self.seconds), 1
            ):
                wr.writerow([i, repr(loss), repr(nm), f"{sec:.3f}"])


class TrainingAborted(NumericalError):
    """Raised when training hits non-finite values; carries the best weights so far."""

    def __init__(self, msg, weights: WeightSet, report: TrainReport):
        super().__init__(msg)
        self.weights = weights
        self.report = report


def holdout_nmse(ds: Dataset, pilot, weights: WeightSet, cfg: SystemConfig,
                 chunk: int = 2000) -> float:
    """Mean per-sample NMSE of the thresholded network estimate."""
    errs, counts = [], []
    for start in range(0, len(ds), chunk):
        part = ds.subset(slice(start, start + chunk))
        est = infer(part.y, pilot, weights, cfg)
        val, n = batch_nmse(est.h_hat, part.h_bar)
        if n:
            errs.append(val * n)
            counts.append(n)
    return math.fsum(errs) / sum(counts) if counts else float("nan")


def detection_mask(cache, cfg: SystemConfig) -> np.ndarray:
    """0/1 mask per channel coefficient from the final activity decision."""
    active = 1.0 / cache.final.gamma_hat > cfg.gamma_th
    return np.repeat(active, cfg.dc, axis=1).astype(float)


def train(train_ds: Dataset, holdout_ds: Dataset, cfg: SystemConfig, pilot: ExpandedPilot,
          hyper: TrainHyper = TrainHyper(), weights: WeightSet | None = None,
          log_path=None, checkpoint_path=None) -> tuple[WeightSet, TrainReport]:
    """Mini-batch Adam (or SGD) on the mean per-sample squared error.

    Returns the weights with the lowest held-out NMSE seen after any epoch
    (or the initial weights if no epoch improved on them).
    """
    train_ds.check(cfg)
    holdout_ds.check(cfg)
    step_fn = OPTIMIZERS[hyper.optimizer]
    if hyper.loss not in ("masked", "soft"):
        raise ValueError(f"unknown loss {hyper.loss!r}")
    weights = init_weights(cfg, pilot) if weights is None else weights
    opt = OptState.for_weights(weights, hyper.lr)
    rng = np.random.default_rng(hyper.seed)
    report = TrainReport(seed=hyper.seed, fingerprint=fingerprint(cfg))
    report.initial_nmse = holdout_nmse(holdout_ds, pilot, weights, cfg)
    best, best_nmse = weights, report.initial_nmse
    S = len(train_ds)

    def _finish(path_weights):
        if log_path is not None:
            report.write_csv(log_path)
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, path_weights, cfg, opt)

    for epoch in range(1, hyper.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(S)
        losses = []
        try:
            for start in range(0, S, hyper.batch_size):
                idx = np.sort(order[start:start + hyper.batch_size])
                y, h = train_ds.y[idx], train_ds.h_bar[idx]
                cache = forward(y, pilot, weights, cfg)
                mask = detection_mask(cache, cfg) if hyper.loss == "masked" else None
                est = cache.m_h if mask is None else mask * cache.m_h
                losses.extend(np.sum(np.abs(est - h) ** 2, axis=1))
                grads = backward(cache, weights, h, pilot, cfg, reduce="mean", mask=mask)
                new_weights, opt = step_fn(weights, grads, opt)
                if not np.all(np.isfinite(new_weights.flat())):
                    raise NumericalError(f"non-finite weights after step {opt.step}")
                weights = new_weights
            nm = holdout_nmse(holdout_ds, pilot, weights, cfg)
        except NumericalError as exc:
            report.aborted = f"epoch {epoch}: {exc}"
            _finish(best)
            raise TrainingAborted(str(exc), best, report) from exc
        report.epoch_loss.append(math.fsum(losses) / len(losses))
        report.holdout_nmse.append(nm)
        report.seconds.append(time.perf_counter() - t0)
        if nm < best_nmse:
            best, best_nmse, report.best_epoch = weights, nm, epoch
    _finish(best)
    return best, report


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(path, weights: WeightSet, cfg: SystemConfig, opt: OptState | None = None) -> None:
    parts = [CKPT_MAGIC, struct.pack("<BQI", CKPT_VERSION, fingerprint(cfg), weights.n_blocks)]
    for blk in weights.blocks:
        for name in WEIGHT_NAMES:
            arr = np.ascontiguousarray(blk[name], dtype="<f8")
            raw = name.encode()
            parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<Q", arr.size))
            parts.append(arr.tobytes())
    if opt is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01" + struct.pack(
            "<QddddQ", opt.step, opt.lr, opt.beta1, opt.beta2, opt.eps, opt.m.size
        ))
        parts.append(np.ascontiguousarray(opt.m, "<f8").tobytes())
        parts.append(np.ascontiguousarray(opt.v, "<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(float)


def load_checkpoint(path, cfg: SystemConfig, pilot: ExpandedPilot | None = None
                    ) -> tuple[WeightSet, OptState | None]:
    """Load weights (and optimiser state if present); verifies fingerprint and sizes."""
    rd = _Reader(Path(path).read_bytes(), path)
    if rd.take(len(CKPT_MAGIC)) != CKPT_MAGIC:
        raise FormatError(f"{path}: not a weight checkpoint")
    version, fp, n_blocks = rd.unpack("<BQI")
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if fp != fingerprint(cfg):
        raise FingerprintError(
            f"{path}: checkpoint fingerprint {fp:#018x} != config {fingerprint(cfg):#018x}"
        )
    sizes = _sizes(pilot) if pilot is not None else {}
    blocks = []
    for l in range(n_blocks):
        blk = {}
        for _ in WEIGHT_NAMES:
            (nlen,) = rd.unpack("<H")
            name = rd.take(nlen).decode()
            (count,) = rd.unpack("<Q")
            if name not in WEIGHT_NAMES or name in blk:
                raise FormatError(f"{path}: unexpected weight {name!r} in block {l}")
            if sizes and count != sizes[name]:
                raise FormatError(f"{path}: {name} has {count} entries, expected {sizes[name]}")
            blk[name] = rd.floats(count)
        blocks.append(blk)
    weights = WeightSet(blocks, sizes)
    (flag,) = rd.unpack("<B")
    opt = None
    if flag == 1:
        step, lr, b1, b2, eps, n = rd.unpack("<QddddQ")
        if n != weights.n_params:
            raise FormatError(f"{path}: optimiser state size {n} != {weights.n_params}")
        opt = OptState(rd.floats(n), rd.floats(n), step, lr, b1, b2, eps)
    elif flag != 0:
        raise FormatError(f"{path}: bad optimiser flag {flag}")
    if rd.pos != len(rd.data):
        raise FormatError(f"{path}: trailing bytes")
    return weights, opt
