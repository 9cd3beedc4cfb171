"""Random-access realisations and the binary dataset format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SystemConfig, fingerprint
from .errors import FingerprintError, FormatError
from .pilots import ExpandedPilot

MAGIC = b"NORA1"
VERSION = 1
_HEADER = struct.Struct("<5sBiiiiqQ")


def snr_to_noise_var(snr_db: float) -> float:
    return 10.0 ** (-snr_db / 10.0)


def crandn(rng: np.random.Generator, size, var: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples with the given variance."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


@dataclass
class Scenario:
    alpha: np.ndarray  # (K,) uint8
    h_bar: np.ndarray  # (K*dc,) complex
    noise_var: float
    y: np.ndarray  # (N*Lt,) complex
    snr_db: float = float("nan")

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.alpha)


def sample_scenario(
    cfg: SystemConfig,
    pilot: ExpandedPilot,
    snr_db: float,
    rng: np.random.Generator,
    noise_var: float | None = None,
) -> Scenario:
    if noise_var is None:
        noise_var = snr_to_noise_var(snr_db)
    alpha = (rng.random(cfg.K) < cfg.Pa).astype(np.uint8)
    h = crandn(rng, (cfg.K, cfg.dc)) * alpha[:, None]
    h_bar = h.reshape(-1)
    w = crandn(rng, pilot.n_obs, noise_var)
    y = pilot.sparse @ h_bar + w
    return Scenario(alpha, h_bar, float(noise_var), y, float(snr_db))


def child_rng(master_seed: int, index: int) -> np.random.Generator:
    """Per-sample generator; the sample index is mixed into the seed entropy."""
    return np.random.default_rng([int(master_seed), int(index)])


@dataclass
class Dataset:
    """A batch of scenarios sharing one configuration, stored column-wise."""

    fingerprint: int
    K: int
    N: int
    Lt: int
    dc: int
    snr_db: np.ndarray  # (S,)
    alpha: np.ndarray  # (S, K) uint8
    h_bar: np.ndarray  # (S, K*dc) complex
    y: np.ndarray  # (S, N*Lt) complex

    def __len__(self) -> int:
        return self.snr_db.size

    @property
    def noise_var(self) -> np.ndarray:
        return 10.0 ** (-self.snr_db / 10.0)

    def __getitem__(self, i: int) -> Scenario:
        return Scenario(
            self.alpha[i], self.h_bar[i], float(self.noise_var[i]), self.y[i],
            float(self.snr_db[i]),
        )

    def subset(self, idx) -> "Dataset":
        return Dataset(
            self.fingerprint, self.K, self.N, self.Lt, self.dc,
            self.snr_db[idx], self.alpha[idx], self.h_bar[idx], self.y[idx],
        )

    def split(self, n_first: int) -> tuple["Dataset", "Dataset"]:
        return self.subset(slice(0, n_first)), self.subset(slice(n_first, None))

    def check(self, cfg: SystemConfig) -> None:
        if self.fingerprint != fingerprint(cfg):
            raise FingerprintError(
                f"dataset fingerprint {self.fingerprint:#018x} does not match "
                f"config fingerprint {fingerprint(cfg):#018x}"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            (self.fingerprint, self.K, self.N, self.Lt, self.dc)
            == (other.fingerprint, other.K, other.N, other.Lt, other.dc)
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("snr_db", "alpha", "h_bar", "y")
            )
        )


def generate_dataset(
    cfg: SystemConfig,
    pilot: ExpandedPilot,
    snr_list,
    count: int,
    seed: int,
    mixed: bool = False,
) -> Dataset:
    """``count`` samples per SNR point, or ``count`` in total when ``mixed``.

    With ``mixed`` each sample draws its SNR uniformly from ``snr_list``.
    """
    snr_list = [float(s) for s in snr_list]
    if mixed:
        pick = np.random.default_rng([int(seed), 2**32 - 1]).integers(
            len(snr_list), size=count
        )
        snrs = np.asarray(snr_list)[pick] if count else np.zeros(0)
    else:
        snrs = np.repeat(snr_list, count)
    S = snrs.size
    alpha = np.zeros((S, cfg.K), dtype=np.uint8)
    h_bar = np.zeros((S, cfg.K * cfg.dc), dtype=complex)
    y = np.zeros((S, pilot.n_obs), dtype=complex)
    for i, snr in enumerate(snrs):
        sc = sample_scenario(cfg, pilot, snr, child_rng(seed, i))
        alpha[i], h_bar[i], y[i] = sc.alpha, sc.h_bar, sc.y
    return Dataset(
        fingerprint(cfg), cfg.K, cfg.N, cfg.Lt, cfg.dc,
        np.asarray(snrs, dtype=float), alpha, h_bar, y,
    )


def write_dataset(ds: Dataset, path) -> None:
    S = len(ds)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(
            MAGIC, VERSION, ds.K, ds.N, ds.Lt, ds.dc, S, ds.fingerprint
        ))
        # per-sample records, interleaved so a file can be streamed
        rec = np.empty(S, dtype=_record_dtype(ds.K, ds.dc, ds.N * ds.Lt))
        rec["snr"] = ds.snr_db
        rec["alpha"] = ds.alpha
        rec["h"] = ds.h_bar
        rec["y"] = ds.y
        fh.write(rec.tobytes())


def _record_dtype(K: int, dc: int, n_obs: int) -> np.dtype:
    return np.dtype([
        ("snr", "<f8"), ("alpha", "u1", (K,)),
        ("h", "<c16", (K * dc,)), ("y", "<c16", (n_obs,)),
    ])


def read_dataset(path, cfg: SystemConfig | None = None) -> Dataset:
    """Read a dataset; with ``cfg`` also verify the config fingerprint."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, K, N, Lt, dc, S, fp = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise FormatError(f"{path}: bad magic/version {magic!r}/{version}")
    dt = _record_dtype(K, dc, N * Lt)
    body = data[_HEADER.size:]
    if len(body) != S * dt.itemsize:
        raise FormatError(
            f"{path}: expected {S * dt.itemsize} payload bytes, found {len(body)}"
        )
    rec = np.frombuffer(body, dtype=dt, count=S)
    ds = Dataset(
        fp, K, N, Lt, dc,
        rec["snr"].copy(), rec["alpha"].copy(),
        rec["h"].astype(complex), rec["y"].astype(complex),
    )
    if cfg is not None:
        ds.check(cfg)
    return ds
