"""System configuration and derived dimensions.

Config files are flat ``key=value`` text whose keys are exactly the field
names of :class:`SystemConfig`. Blank lines and ``#`` comments are ignored.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, DimensionError


@dataclass(frozen=True)
class SystemConfig:
    K: int = 110
    N: int = 8
    Lt: int = 11
    dc: int = 4
    Pa: float = 0.1
    gamma_th: float = 0.1
    a: float = 1e-4
    b: float = 1e-4
    Nit: int = 10
    lambda0: float = 1e3
    eps_v: float = 1e-12
    graph_seed: int = 0

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def desk(cls, **changes) -> "SystemConfig":
        """Small configuration used for quick experiments and tests."""
        base = cls(K=20, N=4, Lt=5, dc=2, Nit=5)
        return base.replace(**changes)


@dataclass(frozen=True)
class DerivedDims:
    dr: int
    E: int
    layer_len: list = field(default_factory=list)


def validate_config(cfg: SystemConfig) -> None:
    """Raise :class:`DimensionError` naming the first violated constraint."""
    checks = [
        (cfg.K >= 1, "K >= 1"),
        (cfg.N >= 1, "N >= 1"),
        (cfg.Lt >= 1, "Lt >= 1"),
        (1 <= cfg.dc <= cfg.N, "1 <= dc <= N"),
        (0.0 <= cfg.Pa <= 1.0, "0 <= Pa <= 1"),
        (cfg.Nit >= 1, "Nit >= 1"),
        (cfg.gamma_th > 0, "gamma_th > 0"),
        (cfg.a > 0 and cfg.b > 0, "a > 0 and b > 0"),
        (cfg.lambda0 > 0, "lambda0 > 0"),
        (cfg.eps_v > 0, "eps_v > 0"),
    ]
    for ok, what in checks:
        if not ok:
            raise DimensionError(f"constraint violated: {what} ({cfg})")
    if (cfg.K * cfg.dc) % cfg.N != 0:
        raise DimensionError(
            f"constraint violated: K*dc divisible by N "
            f"(K*dc={cfg.K * cfg.dc}, N={cfg.N})"
        )


def derived_dims(cfg: SystemConfig) -> DerivedDims:
    validate_config(cfg)
    K, N, Lt, dc = cfg.K, cfg.N, cfg.Lt, cfg.dc
    E = Lt * dc * K
    n_obs = N * Lt
    layer_len = [n_obs, E, dc * K, dc * K, K, E, n_obs, n_obs, 1]
    return DerivedDims(dr=K * dc // N, E=E, layer_len=layer_len)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(SystemConfig)}
_INT_FIELDS = {"K", "N", "Lt", "dc", "Nit", "graph_seed"}


def parse_config(text: str) -> SystemConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = int(val) if key in _INT_FIELDS else float(val)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from None
    cfg = SystemConfig(**values)
    validate_config(cfg)
    return cfg


def load_config(path) -> SystemConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: SystemConfig) -> str:
    return "".join(
        f"{f.name}={getattr(cfg, f.name)!r}\n" for f in dataclasses.fields(cfg)
    )


# Fields that change the generated data; Nit, thresholds and priors do not.
_DATA_FIELDS = ("K", "N", "Lt", "dc", "Pa", "graph_seed")


def fingerprint(cfg: SystemConfig) -> int:
    """64-bit hash of the fields that determine the pilot matrix and data law."""
    text = ";".join(f"{k}={getattr(cfg, k)!r}" for k in _DATA_FIELDS)
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")
