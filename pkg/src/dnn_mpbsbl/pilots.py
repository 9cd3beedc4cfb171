"""Zadoff-Chu pilots, the regular LDS spreading graph and the reduced pilot matrix.

Index conventions used throughout the package:

* observation ``n = l * N + m`` (pilot symbol ``l``, subcarrier ``m``), i.e. the
  vectorisation of the transposed ``Lt x N`` pilot observation;
* variable ``j = k * dc + d`` (user ``k``, ``d``-th occupied subcarrier);
* edge ``e = j * Lt + l``, connecting variable ``j`` to observation
  ``l * N + m_{k,d}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .config import SystemConfig, derived_dims, validate_config
from .errors import CapacityError, ConstructionError, DimensionError, FormatError

MAX_GRAPH_ATTEMPTS = 1000


def zc_root(Lt: int, root: int) -> np.ndarray:
    n = np.arange(Lt)
    if Lt % 2:
        phase = np.pi * root * n * (n + 1) / Lt
    else:
        phase = np.pi * root * n * n / Lt
    return np.exp(-1j * phase)


def zc_capacity(Lt: int) -> int:
    return max((Lt - 1) * Lt, 1)


@dataclass(frozen=True)
class PilotBank:
    """Pilot sequences, ``seqs[k, l]`` is user ``k``'s ``l``-th pilot symbol."""

    seqs: np.ndarray

    @property
    def K(self) -> int:
        return self.seqs.shape[0]

    @property
    def Lt(self) -> int:
        return self.seqs.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        """The ``Lt x K`` pilot matrix with entries ``p_{l,k}``."""
        return self.seqs.T


def gen_zc_bank(Lt: int, K: int) -> PilotBank:
    """User ``k`` gets root ``1 + k // Lt`` cyclically shifted by ``k % Lt``."""
    if K > zc_capacity(Lt):
        raise CapacityError(f"K={K} exceeds ZC capacity {zc_capacity(Lt)} at Lt={Lt}")
    seqs = np.empty((K, Lt), dtype=complex)
    for k in range(K):
        root, shift = 1 + k // Lt, k % Lt
        seqs[k] = np.roll(zc_root(Lt, root), -shift)
    return PilotBank(seqs)


@dataclass(frozen=True)
class LdsGraph:
    N: int
    user_subs: np.ndarray  # (K, dc), sorted ascending per user

    @property
    def K(self) -> int:
        return self.user_subs.shape[0]

    @property
    def dc(self) -> int:
        return self.user_subs.shape[1]

    @cached_property
    def sub_users(self) -> list[list[tuple[int, int]]]:
        out: list[list[tuple[int, int]]] = [[] for _ in range(self.N)]
        for k, subs in enumerate(self.user_subs):
            for d, m in enumerate(subs):
                out[int(m)].append((k, d))
        return out

    def edges(self, Lt: int) -> list[tuple[int, int]]:
        """Canonical (observation, variable) list in edge order."""
        return [
            (l * self.N + int(m), k * self.dc + d)
            for k, subs in enumerate(self.user_subs)
            for d, m in enumerate(subs)
            for l in range(Lt)
        ]

    def to_text(self) -> str:
        return "".join(
            f"{k}: {' '.join(str(int(m)) for m in subs)}\n"
            for k, subs in enumerate(self.user_subs)
        )

    @classmethod
    def from_text(cls, text: str, N: int) -> "LdsGraph":
        rows = []
        for i, line in enumerate(l for l in text.splitlines() if l.strip()):
            head, _, tail = line.partition(":")
            if not _ or int(head) != i:
                raise FormatError(f"bad graph line {line!r}")
            rows.append([int(t) for t in tail.split()])
        return cls(N=N, user_subs=np.array(rows, dtype=np.int64))


def _repair(assign: np.ndarray, rng: np.random.Generator) -> bool:
    """Swap stubs until no user repeats a subcarrier; False if stuck."""
    K, dc = assign.shape
    for _ in range(10 * K * dc):
        bad = [
            (u, i)
            for u in range(K)
            for i in range(dc)
            if np.count_nonzero(assign[u] == assign[u, i]) > 1
        ]
        if not bad:
            return True
        u, i = bad[rng.integers(len(bad))]
        s = assign[u, i]
        fixed = False
        for flat in rng.permutation(K * dc):
            v, j = divmod(int(flat), dc)
            t = assign[v, j]
            if v == u or t == s or t in assign[u]:
                continue
            others = np.delete(assign[v], j)
            if s in others:
                continue
            assign[u, i], assign[v, j] = t, s
            fixed = True
            break
        if not fixed:
            return False
    return False


def build_lds_graph(N: int, K: int, dc: int, graph_seed: int) -> LdsGraph:
    """Regular bipartite graph from a seeded edge interleaver.

    ``K * dc`` user stubs are paired with a shuffled pool holding ``dr`` stubs
    of every subcarrier. Repeated subcarriers within a user are removed by
    stub swaps that keep both degree sequences fixed.
    """
    if (K * dc) % N:
        raise DimensionError(f"K*dc={K * dc} not divisible by N={N}")
    if not 1 <= dc <= N:
        raise DimensionError(f"dc={dc} outside [1, N={N}]")
    dr = K * dc // N
    rng = np.random.default_rng(graph_seed)
    for _ in range(MAX_GRAPH_ATTEMPTS):
        pool = np.repeat(np.arange(N), dr)
        rng.shuffle(pool)
        assign = pool.reshape(K, dc)
        if _repair(assign, rng):
            return LdsGraph(N=N, user_subs=np.sort(assign, axis=1))
    raise ConstructionError(
        f"no simple regular graph after {MAX_GRAPH_ATTEMPTS} attempts"
    )


@dataclass(frozen=True)
class ExpandedPilot:
    """Sparse reduced pilot matrix stored edge by edge."""

    n_obs: int
    n_var: int
    edge_obs: np.ndarray  # (E,) observation index of each edge
    edge_var: np.ndarray  # (E,) variable index of each edge
    edge_val: np.ndarray  # (E,) complex entry

    @property
    def E(self) -> int:
        return self.edge_val.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_obs, self.n_var)

    @cached_property
    def sparse(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.edge_val, (self.edge_obs, self.edge_var)), shape=self.shape
        )

    @cached_property
    def dense(self) -> np.ndarray:
        return self.to_dense()

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=complex)
        out[self.edge_obs, self.edge_var] = self.edge_val
        return out

    def block_columns(self, k: int, dc: int) -> slice:
        return slice(k * dc, (k + 1) * dc)


def assemble_expanded_pilot(bank: PilotBank, graph: LdsGraph) -> ExpandedPilot:
    if bank.K != graph.K:
        raise DimensionError(f"pilot bank has K={bank.K}, graph has K={graph.K}")
    K, dc, N, Lt = graph.K, graph.dc, graph.N, bank.Lt
    k_idx = np.repeat(np.arange(K), dc * Lt)
    d_idx = np.tile(np.repeat(np.arange(dc), Lt), K)
    l_idx = np.tile(np.arange(Lt), K * dc)
    m_idx = graph.user_subs[k_idx, d_idx]
    return ExpandedPilot(
        n_obs=N * Lt,
        n_var=K * dc,
        edge_obs=l_idx * N + m_idx,
        edge_var=k_idx * dc + d_idx,
        edge_val=bank.seqs[k_idx, l_idx],
    )


@dataclass(frozen=True)
class System:
    """Everything fixed for a configuration: pilots, graph and P-bar."""

    cfg: SystemConfig
    bank: PilotBank
    graph: LdsGraph
    pilot: ExpandedPilot


def build_system(cfg: SystemConfig) -> System:
    validate_config(cfg)
    derived_dims(cfg)
    bank = gen_zc_bank(cfg.Lt, cfg.K)
    graph = build_lds_graph(cfg.N, cfg.K, cfg.dc, cfg.graph_seed)
    return System(cfg, bank, graph, assemble_expanded_pilot(bank, graph))
