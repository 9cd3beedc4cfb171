"""Weighted message passing unrolled into a feed-forward network.

Each iteration block has nine layers (input, auxiliary A1, Q, h, gamma,
auxiliary A2, delta-to-z, z, lambda). Every weighting matrix is stored only
on its factor-graph connectivity support, so a "matrix times vector" is a
gather-multiply-scatter over one of four index kinds:

``edge``  one weight per factor-graph edge (``E`` scalars)
``var``   one weight per channel coefficient (``K*dc`` scalars)
``obs``   one weight per observation (``N*Lt`` scalars)

With every weight equal to one the network reproduces :mod:`.mpbsbl`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .config import SystemConfig
from .errors import DimensionError, MaskError, NumericalError
from .mpbsbl import LAMBDA_MAX, LAMBDA_MIN, Estimate, MessageState, decide, init_state
from .pilots import ExpandedPilot

# name -> (support kind, dense (input, output) shape kind)
WEIGHT_SPECS: dict[str, tuple[str, str]] = {
    # layer 2, variance path
    "lam_A1v": ("edge", "scalar->edge"),
    "vd_A1v": ("edge", "obs->edge"),
    # layer 2, mean path
    "y_A1m": ("edge", "obs->edge"),
    "md_A1m": ("edge", "obs->edge"),
    "lam_A1m": ("edge", "scalar->edge"),
    "vd_A1m": ("edge", "obs->edge"),
    # layer 3
    "A1v_vQ": ("edge", "edge->var"),
    "A1m_mQ": ("edge", "edge->var"),
    "h_Q": ("var", "var->var"),
    # layer 4
    "gamma": ("var", "var->var"),
    "one_h": ("var", "var->var"),
    "vg_h": ("var", "var->var"),
    # layer 5
    "mh_gamma": ("var", "var->user"),
    "vh_gamma": ("var", "var->user"),
    # layer 7
    "A2v_vd": ("edge", "edge->obs"),
    "A2m_md": ("edge", "edge->obs"),
    "y_d": ("obs", "obs->obs"),
    "md_md": ("obs", "obs->obs"),
    "lam_d": ("obs", "scalar->obs"),
    "vd_md": ("obs", "obs->obs"),
    # layer 8
    "lam_z": ("obs", "scalar->obs"),
    "vd_vz": ("obs", "obs->obs"),
    "ylam_z": ("obs", "obs->obs"),
    "mv_z": ("obs", "obs->obs"),
    # layer 9
    "mz_lam": ("obs", "obs->obs"),
    "y_lam": ("obs", "obs->obs"),
    "vz_lam": ("obs", "obs->scalar"),
}
WEIGHT_NAMES = tuple(WEIGHT_SPECS)


def support_size(kind: str, pilot: ExpandedPilot) -> int:
    return {"edge": pilot.E, "var": pilot.n_var, "obs": pilot.n_obs}[kind]


def block_param_count(pilot: ExpandedPilot) -> int:
    return sum(support_size(k, pilot) for k, _ in WEIGHT_SPECS.values())


def weight_mask(name: str, pilot: ExpandedPilot, K: int) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Dense (input, output) coordinates of the support of matrix ``name``.

    Returns ``(rows, cols, shape)``; parameter ``i`` of the compact storage
    sits at ``(rows[i], cols[i])``.
    """
    E, J, n = pilot.E, pilot.n_var, pilot.n_obs
    dc = J // K
    e, j, o = np.arange(E), np.arange(J), np.arange(n)
    shape_kind = WEIGHT_SPECS[name][1]
    if shape_kind == "scalar->edge":
        return np.zeros(E, int), e, (1, E)
    if shape_kind == "obs->edge":
        return pilot.edge_obs, e, (n, E)
    if shape_kind == "edge->var":
        return e, pilot.edge_var, (E, J)
    if shape_kind == "edge->obs":
        return e, pilot.edge_obs, (E, n)
    if shape_kind == "var->var":
        return j, j, (J, J)
    if shape_kind == "var->user":
        return j, j // dc, (J, K)
    if shape_kind == "obs->obs":
        return o, o, (n, n)
    if shape_kind == "scalar->obs":
        return np.zeros(n, int), o, (1, n)
    if shape_kind == "obs->scalar":
        return o, np.zeros(n, int), (n, 1)
    raise KeyError(shape_kind)


@dataclass
class WeightSet:
    """Trainable weights, ``blocks[l][name]`` is a 1-D float64 array."""

    blocks: list[dict[str, np.ndarray]]
    sizes: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for l, blk in enumerate(self.blocks):
            if set(blk) != set(WEIGHT_NAMES):
                missing = set(WEIGHT_NAMES) ^ set(blk)
                raise DimensionError(f"block {l}: weight names differ by {sorted(missing)}")
            for name, arr in blk.items():
                want = self.sizes.get(name)
                if arr.ndim != 1 or (want is not None and arr.size != want):
                    raise DimensionError(
                        f"block {l} weight {name}: shape {arr.shape}, expected ({want},)"
                    )

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def n_params(self) -> int:
        return sum(a.size for blk in self.blocks for a in blk.values())

    def copy(self) -> "WeightSet":
        return WeightSet([{k: v.copy() for k, v in b.items()} for b in self.blocks],
                         dict(self.sizes))

    def flat(self) -> np.ndarray:
        return np.concatenate(
            [blk[name] for blk in self.blocks for name in WEIGHT_NAMES]
        ) if self.blocks else np.zeros(0)

    def with_flat(self, vec: np.ndarray) -> "WeightSet":
        out, pos = self.copy(), 0
        for blk in out.blocks:
            for name in WEIGHT_NAMES:
                size = blk[name].size
                blk[name] = np.array(vec[pos:pos + size], dtype=float)
                pos += size
        if pos != vec.size:
            raise DimensionError(f"flat vector has {vec.size} entries, expected {pos}")
        return out

    def to_dense(self, l: int, name: str, pilot: ExpandedPilot, K: int) -> np.ndarray:
        rows, cols, shape = weight_mask(name, pilot, K)
        dense = np.zeros(shape)
        dense[rows, cols] = self.blocks[l][name]
        return dense

    @classmethod
    def from_dense(cls, dense_blocks, pilot: ExpandedPilot, K: int) -> "WeightSet":
        """Build from full matrices; nonzeros off the connectivity mask are rejected."""
        blocks = []
        for l, dense in enumerate(dense_blocks):
            blk = {}
            for name in WEIGHT_NAMES:
                rows, cols, shape = weight_mask(name, pilot, K)
                mat = np.asarray(dense[name], dtype=float)
                if mat.shape != shape:
                    raise DimensionError(f"{name}: shape {mat.shape}, expected {shape}")
                off = mat.copy()
                off[rows, cols] = 0.0
                if np.any(off != 0):
                    raise MaskError(f"block {l} weight {name} has entries outside its mask")
                blk[name] = mat[rows, cols].copy()
            blocks.append(blk)
        return cls(blocks, _sizes(pilot))


def _sizes(pilot: ExpandedPilot) -> dict[str, int]:
    return {name: support_size(kind, pilot) for name, (kind, _) in WEIGHT_SPECS.items()}


def init_weights(cfg: SystemConfig, pilot: ExpandedPilot, n_blocks: int | None = None) -> WeightSet:
    sizes = _sizes(pilot)
    nb = cfg.Nit if n_blocks is None else n_blocks
    return WeightSet([{k: np.ones(s) for k, s in sizes.items()} for _ in range(nb)], sizes)


class Graph:
    """Index helpers for gather/scatter over the factor graph."""

    def __init__(self, pilot: ExpandedPilot, K: int):
        self.pilot = pilot
        self.K = K
        self.E, self.J, self.n = pilot.E, pilot.n_var, pilot.n_obs
        self.dc = self.J // K
        self.Lt = self.E // self.J
        self.eo = pilot.edge_obs
        self.ev = pilot.edge_var
        self.p = pilot.edge_val
        self.p2 = np.abs(pilot.edge_val) ** 2
        self.user_of_var = np.arange(self.J) // self.dc
        if not np.array_equal(self.ev, np.repeat(np.arange(self.J), self.Lt)):
            raise DimensionError("edges are not in canonical variable-major order")
        # edge -> observation incidence, (E, n)
        self._inc_obs = sp.csr_matrix(
            (np.ones(self.E), (np.arange(self.E), self.eo)), shape=(self.E, self.n)
        )

    def to_obs(self, x):
        """Sum edge values into observations: (B, E) -> (B, n)."""
        return np.asarray((self._inc_obs.T @ x.T).T)

    def to_var(self, x):
        """Sum edge values into variables: (B, E) -> (B, J)."""
        x3 = x.reshape(x.shape[0], self.J, self.Lt)
        # sequential over pilot symbols, the same order as a sparse matvec
        acc = x3[:, :, 0].copy()
        for l in range(1, self.Lt):
            acc += x3[:, :, l]
        return acc

    def to_user(self, x):
        return x.reshape(x.shape[0], self.K, self.dc).sum(axis=2)

    def from_user(self, x):
        return np.repeat(x, self.dc, axis=1)


_GRAPHS: dict[int, Graph] = {}


def graph_for(pilot: ExpandedPilot, K: int) -> Graph:
    key = id(pilot)
    g = _GRAPHS.get(key)
    if g is None or g.pilot is not pilot:
        g = _GRAPHS[key] = Graph(pilot, K)
    return g


@dataclass
class BlockCache:
    """Everything the backward pass needs from one iteration block."""

    inp: MessageState
    out: MessageState
    vals: dict[str, np.ndarray]


@dataclass
class ForwardCache:
    y: np.ndarray
    init: MessageState
    blocks: list[BlockCache]
    weights_id: int = 0

    @property
    def final(self) -> MessageState:
        return self.blocks[-1].out if self.blocks else self.init

    @property
    def m_h(self) -> np.ndarray:
        return self.final.m_h

    def layer_lengths(self, l: int) -> list[int]:
        """Per-sample output length of each of the nine layers of block ``l``."""
        c = self.blocks[l]
        v, o = c.vals, c.out
        return [
            self.y.shape[1], v["OAv"].shape[1], o.v_Q.shape[1], o.v_h.shape[1],
            o.gamma_hat.shape[1], v["OA2v"].shape[1], o.v_dz.shape[1],
            o.v_z.shape[1], 1,
        ]


def forward_block(state: MessageState, y, g: Graph, w: dict, cfg: SystemConfig):
    """One weighted iteration block; returns ``(new_state, BlockCache)``."""
    eps = cfg.eps_v
    eo, ev = g.eo, g.ev
    lam = state.lambda_hat
    il = (1.0 / lam)[:, None]
    vdz, mdz, mh, gam = state.v_dz, state.m_dz, state.m_h, state.gamma_hat
    vdz_e, mdz_e, y_e = vdz[:, eo], mdz[:, eo], y[:, eo]

    # layer 2: auxiliary A1
    Dv_raw = w["lam_A1v"] * il + w["vd_A1v"] * vdz_e
    Dv = np.maximum(Dv_raw, eps)
    OAv = g.p2 / Dv
    Dm_raw = w["lam_A1m"] * il + w["vd_A1m"] * vdz_e
    Dm = np.maximum(Dm_raw, eps)
    Rm = w["y_A1m"] * y_e - w["md_A1m"] * mdz_e
    OAm = np.conj(g.p) * (Rm / Dm)

    # layer 3: Q
    Sv_raw = g.to_var(w["A1v_vQ"] * OAv)
    Sv = np.maximum(Sv_raw, eps)
    vQ_raw = 1.0 / Sv
    vQ = np.maximum(vQ_raw, eps)
    Sm = g.to_var(w["A1m_mQ"] * OAm)
    mQ = vQ * Sm + w["h_Q"] * mh

    # layer 4: h
    ge = g.from_user(gam)
    Hv_raw = 1.0 / vQ + w["gamma"] * ge
    Hv = np.maximum(Hv_raw, eps)
    vh_raw = 1.0 / Hv
    vh = np.maximum(vh_raw, eps)
    Hm_raw = w["one_h"] + w["vg_h"] * (vQ * ge)
    Hm = np.maximum(Hm_raw, eps)
    mh_new = mQ / Hm

    # layer 5: gamma
    G_raw = (cfg.b + g.to_user(w["mh_gamma"] * np.abs(mh_new) ** 2)
             + g.to_user(w["vh_gamma"] * vh))
    G = np.maximum(G_raw, eps)
    gam_new = (cfg.a + g.dc + 1) / G

    # layer 6: auxiliary A2 (no weights)
    OA2v = g.p2 * vh[:, ev]
    OA2m = g.p * mh_new[:, ev]

    # layer 7: delta -> z
    vdz_raw = g.to_obs(w["A2v_vd"] * OA2v)
    vdz_new = np.maximum(vdz_raw, eps)
    T = w["y_d"] * y - w["md_md"] * mdz
    Dd_raw = w["lam_d"] * il + w["vd_md"] * vdz
    Dd = np.maximum(Dd_raw, eps)
    Am = g.to_obs(w["A2m_md"] * OA2m)
    mdz_new = Am - vdz_new * T / Dd

    # layer 8: z
    lam_c = lam[:, None]
    Zp_raw = w["lam_z"] * lam_c + w["vd_vz"] / vdz_new
    Zp = np.maximum(Zp_raw, eps)
    vz_raw = 1.0 / Zp
    vz = np.maximum(vz_raw, eps)
    Q = mdz_new / vdz_new
    U = w["ylam_z"] * (y * lam_c) + w["mv_z"] * Q
    mz = vz * U

    # layer 9: lambda
    r = w["mz_lam"] * mz - w["y_lam"] * y
    L_raw = (np.abs(r) ** 2).sum(axis=1) + (w["vz_lam"] * vz).sum(axis=1)
    L = np.maximum(L_raw, eps)
    lam_raw = g.n / L
    lam_new = np.clip(lam_raw, LAMBDA_MIN, LAMBDA_MAX)

    out = MessageState(
        lambda_hat=lam_new, gamma_hat=gam_new, v_dz=vdz_new, m_dz=mdz_new,
        m_h=mh_new, v_h=vh, v_Q=vQ, m_Q=mQ, v_z=vz, m_z=mz,
    )
    out.check_finite()
    vals = dict(
        il=il, vdz_e=vdz_e, mdz_e=mdz_e, y_e=y_e,
        Dv_raw=Dv_raw, Dv=Dv, OAv=OAv, Dm_raw=Dm_raw, Dm=Dm, Rm=Rm, OAm=OAm,
        Sv_raw=Sv_raw, Sv=Sv, vQ_raw=vQ_raw, Sm=Sm,
        ge=ge, Hv_raw=Hv_raw, Hv=Hv, vh_raw=vh_raw, Hm_raw=Hm_raw, Hm=Hm,
        G_raw=G_raw, G=G, OA2v=OA2v, OA2m=OA2m, vdz_raw=vdz_raw,
        T=T, Dd_raw=Dd_raw, Dd=Dd, Zp_raw=Zp_raw, Zp=Zp, vz_raw=vz_raw,
        Q=Q, U=U, r=r, L_raw=L_raw, L=L, lam_raw=lam_raw,
    )
    return out, BlockCache(state, out, vals)


def forward(y, pilot: ExpandedPilot, weights: WeightSet, cfg: SystemConfig) -> ForwardCache:
    """Run every block of ``weights`` from the standard initialisation."""
    y = np.atleast_2d(np.asarray(y, dtype=complex))
    g = graph_for(pilot, cfg.K)
    state = init_state(cfg, pilot, y.shape[0])
    cache = ForwardCache(y=y, init=state, blocks=[], weights_id=id(weights))
    for w in weights.blocks:
        state, bc = forward_block(state, y, g, w, cfg)
        cache.blocks.append(bc)
    return cache


def infer(y, pilot: ExpandedPilot, weights: WeightSet, cfg: SystemConfig) -> Estimate:
    single = np.ndim(y) == 1
    final = forward(y, pilot, weights, cfg).final
    est = decide(final.m_h, final.gamma_hat, cfg)
    if single:
        est = Estimate(est.h_hat[0], est.active[0], est.gamma_inv[0])
    return est


def check_weights(weights: WeightSet, pilot: ExpandedPilot) -> None:
    sizes = _sizes(pilot)
    for l, blk in enumerate(weights.blocks):
        for name, arr in blk.items():
            if arr.size != sizes[name]:
                raise DimensionError(f"block {l} weight {name}: {arr.size} != {sizes[name]}")
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"block {l} weight {name} is not finite")
