"""Reverse-mode gradients of the squared-error loss through the unrolled network.

Complex quantities are differentiated as pairs of reals. For a real loss ``L``
and complex ``z`` the adjoint is stored as ``gz = dL/dRe(z) + 1j*dL/dIm(z)``,
which gives the rules used below:

* ``w = a*z`` (``a`` real):        ``ga += Re(conj(gw)*z)``, ``gz += a*gw``
* ``w = c*z`` (``c`` complex const): ``gz += conj(c)*gw``
* ``s = |z|**2``:                   ``gz += 2*z*gs``

Floors and clips pass the gradient through where they are inactive and block
it where they bind.
"""
from __future__ import annotations

import numpy as np

from .config import SystemConfig
from .errors import CacheMismatchError, DimensionError
from .mpbsbl import LAMBDA_MAX, LAMBDA_MIN
from .pilots import ExpandedPilot
from .unfolded import WEIGHT_NAMES, ForwardCache, Graph, WeightSet, forward, graph_for


def loss_mse(m_h, h_true) -> float:
    """Sum of squared magnitudes of ``m_h - h_true``."""
    m_h, h_true = np.asarray(m_h), np.asarray(h_true)
    if m_h.shape != h_true.shape:
        raise DimensionError(f"shape mismatch {m_h.shape} vs {h_true.shape}")
    return float(np.sum(np.abs(m_h - h_true) ** 2))


def _re(a, b):
    """Re(conj(a) * b) without forming the product."""
    return a.real * b.real + a.imag * b.imag


def ksum(x: np.ndarray) -> np.ndarray:
    """Compensated (Kahan) sum over the leading axis."""
    total = np.zeros(x.shape[1:])
    comp = np.zeros_like(total)
    for row in x:
        yv = row - comp
        t = total + yv
        comp = (t - total) - yv
        total = t
    return total


def _backward_block(bc, g: Graph, w: dict, cfg: SystemConfig, y, adj: dict):
    """Propagate ``adj`` (adjoints of the block outputs) to the block inputs.

    Returns ``(grads, adj_in)`` with per-sample weight gradients of shape
    ``(B, size)``.
    """
    eps = cfg.eps_v
    v, inp, out = bc.vals, bc.inp, bc.out
    eo = g.eo
    lam = inp.lambda_hat
    lam_c = lam[:, None]
    il = v["il"]
    vdz, mdz, mh = inp.v_dz, inp.m_dz, inp.m_h
    vdz_new, mdz_new, mh_new, vh, vQ = out.v_dz, out.m_dz, out.m_h, out.v_h, out.v_Q
    vz, mz = out.v_z, out.m_z
    gr: dict[str, np.ndarray] = {}

    g_lam_new = adj["lambda_hat"]
    g_vdz_new = adj["v_dz"].copy()
    g_mdz_new = adj["m_dz"].copy()
    g_mh_new = adj["m_h"].copy()
    g_gam_new = adj["gamma_hat"]

    g_lam = np.zeros_like(lam)
    g_il = np.zeros_like(lam)
    g_vdz = np.zeros_like(vdz)
    g_mdz = np.zeros_like(mdz)

    # layer 9
    g_lam_raw = g_lam_new * ((v["lam_raw"] >= LAMBDA_MIN) & (v["lam_raw"] <= LAMBDA_MAX))
    g_L = -g_lam_raw * g.n / v["L"] ** 2
    g_Lr = (g_L * (v["L_raw"] >= eps))[:, None]
    r = v["r"]
    g_r = 2.0 * r * g_Lr
    gr["vz_lam"] = g_Lr * vz
    g_vz = g_Lr * w["vz_lam"]
    gr["mz_lam"] = _re(g_r, mz)
    gr["y_lam"] = -_re(g_r, y)
    g_mz = w["mz_lam"] * g_r

    # layer 8
    U, Q = v["U"], v["Q"]
    g_vz = g_vz + _re(g_mz, U)
    g_U = vz * g_mz
    ylam = y * lam_c
    gr["ylam_z"] = _re(g_U, ylam)
    g_lam += (w["ylam_z"] * _re(g_U, y)).sum(axis=1)
    gr["mv_z"] = _re(g_U, Q)
    g_Q = w["mv_z"] * g_U
    g_mdz_new += g_Q / vdz_new
    g_vdz_new -= _re(g_Q, mdz_new) / vdz_new ** 2
    g_vzr = g_vz * (v["vz_raw"] >= eps)
    g_Zp = -g_vzr / v["Zp"] ** 2
    g_Zpr = g_Zp * (v["Zp_raw"] >= eps)
    gr["lam_z"] = g_Zpr * lam_c
    g_lam += (g_Zpr * w["lam_z"]).sum(axis=1)
    gr["vd_vz"] = g_Zpr / vdz_new
    g_vdz_new -= g_Zpr * w["vd_vz"] / vdz_new ** 2

    # layer 7
    T, Dd = v["T"], v["Dd"]
    g_A = g_mdz_new
    g_Ae = g_A[:, eo]
    gr["A2m_md"] = _re(g_Ae, v["OA2m"])
    g_OA2m = w["A2m_md"] * g_Ae
    g_C = -g_mdz_new
    re_CT = _re(g_C, T)
    g_vdz_new += re_CT / Dd
    g_T = vdz_new * g_C / Dd
    g_Dd = -re_CT * vdz_new / Dd ** 2
    g_Ddr = g_Dd * (v["Dd_raw"] >= eps)
    gr["lam_d"] = g_Ddr * il
    g_il += (g_Ddr * w["lam_d"]).sum(axis=1)
    gr["vd_md"] = g_Ddr * vdz
    g_vdz += g_Ddr * w["vd_md"]
    gr["y_d"] = _re(g_T, y)
    gr["md_md"] = -_re(g_T, mdz)
    g_mdz -= w["md_md"] * g_T
    g_vdzr = g_vdz_new * (v["vdz_raw"] >= eps)
    g_vdzr_e = g_vdzr[:, eo]
    gr["A2v_vd"] = g_vdzr_e * v["OA2v"]
    g_OA2v = w["A2v_vd"] * g_vdzr_e

    # layer 6
    g_vh = g.to_var(g.p2 * g_OA2v)
    g_mh_new = g_mh_new + g.to_var(np.conj(g.p) * g_OA2m)

    # layer 5
    g_G = -g_gam_new * (cfg.a + g.dc + 1) / v["G"] ** 2
    g_Gr = g.from_user(g_G * (v["G_raw"] >= eps))
    gr["mh_gamma"] = g_Gr * np.abs(mh_new) ** 2
    g_mh_new = g_mh_new + 2.0 * mh_new * (w["mh_gamma"] * g_Gr)
    gr["vh_gamma"] = g_Gr * vh
    g_vh = g_vh + w["vh_gamma"] * g_Gr

    # layer 4
    mQ, Hm, ge = out.m_Q, v["Hm"], v["ge"]
    g_mQ = g_mh_new / Hm
    g_Hm = -_re(g_mh_new, mQ) / Hm ** 2
    g_Hmr = g_Hm * (v["Hm_raw"] >= eps)
    gr["one_h"] = g_Hmr
    gr["vg_h"] = g_Hmr * vQ * ge
    g_vQ = g_Hmr * w["vg_h"] * ge
    g_ge = g_Hmr * w["vg_h"] * vQ
    g_vhr = g_vh * (v["vh_raw"] >= eps)
    g_Hv = -g_vhr / v["Hv"] ** 2
    g_Hvr = g_Hv * (v["Hv_raw"] >= eps)
    g_vQ -= g_Hvr / vQ ** 2
    gr["gamma"] = g_Hvr * ge
    g_ge += g_Hvr * w["gamma"]
    g_gam = g.to_user(g_ge)

    # layer 3
    Sm = v["Sm"]
    g_vQ += _re(g_mQ, Sm)
    g_Sm = vQ * g_mQ
    gr["h_Q"] = _re(g_mQ, mh)
    g_mh = w["h_Q"] * g_mQ
    g_Sm_e = np.repeat(g_Sm, g.Lt, axis=1)
    gr["A1m_mQ"] = _re(g_Sm_e, v["OAm"])
    g_OAm = w["A1m_mQ"] * g_Sm_e
    g_vQr = g_vQ * (v["vQ_raw"] >= eps)
    g_Sv = -g_vQr / v["Sv"] ** 2
    g_Svr = np.repeat(g_Sv * (v["Sv_raw"] >= eps), g.Lt, axis=1)
    gr["A1v_vQ"] = g_Svr * v["OAv"]
    g_OAv = w["A1v_vQ"] * g_Svr

    # layer 2
    Dm, Dv = v["Dm"], v["Dv"]
    g_Rm = g.p * g_OAm / Dm
    g_Dm = -_re(g_OAm, v["OAm"]) / Dm
    g_Dmr = g_Dm * (v["Dm_raw"] >= eps)
    vdz_e, mdz_e, y_e = v["vdz_e"], v["mdz_e"], v["y_e"]
    gr["lam_A1m"] = g_Dmr * il
    g_il += (g_Dmr * w["lam_A1m"]).sum(axis=1)
    gr["vd_A1m"] = g_Dmr * vdz_e
    g_vdz_e = g_Dmr * w["vd_A1m"]
    gr["y_A1m"] = _re(g_Rm, y_e)
    gr["md_A1m"] = -_re(g_Rm, mdz_e)
    g_mdz_e = -w["md_A1m"] * g_Rm
    g_Dv = -g_OAv * v["OAv"] / Dv
    g_Dvr = g_Dv * (v["Dv_raw"] >= eps)
    gr["lam_A1v"] = g_Dvr * il
    g_il += (g_Dvr * w["lam_A1v"]).sum(axis=1)
    gr["vd_A1v"] = g_Dvr * vdz_e
    g_vdz_e += g_Dvr * w["vd_A1v"]

    g_vdz += g.to_obs(g_vdz_e)
    g_mdz += g.to_obs(g_mdz_e)
    g_lam += -g_il / lam ** 2

    adj_in = {"lambda_hat": g_lam, "v_dz": g_vdz, "m_dz": g_mdz, "m_h": g_mh, "gamma_hat": g_gam}
    return gr, adj_in


def backward(cache: ForwardCache, weights: WeightSet, h_true, pilot: ExpandedPilot,
             cfg: SystemConfig, reduce: str = "sum", mask=None) -> WeightSet:
    """Gradient of the per-sample squared error w.r.t. every weight.

    Per-sample gradients are combined over the batch with compensated
    summation; ``reduce="mean"`` divides by the batch size. ``mask`` (0/1 per
    channel coefficient, held constant) differentiates ``|mask*m_h - h|^2``
    instead of the soft error.
    """
    if cache.weights_id != id(weights) or len(cache.blocks) != weights.n_blocks:
        raise CacheMismatchError("cache was produced with a different WeightSet")
    h_true = np.atleast_2d(h_true)
    if h_true.shape != cache.m_h.shape:
        raise CacheMismatchError(
            f"target shape {h_true.shape} does not match cache {cache.m_h.shape}"
        )
    g = graph_for(pilot, cfg.K)
    B = h_true.shape[0]
    fin = cache.final
    adj = {
        "lambda_hat": np.zeros(B),
        "v_dz": np.zeros_like(fin.v_dz),
        "m_dz": np.zeros_like(fin.m_dz),
        "m_h": 2.0 * (fin.m_h - h_true) if mask is None else 2.0 * mask * (mask * fin.m_h - h_true),
        "gamma_hat": np.zeros_like(fin.gamma_hat),
    }
    blocks = [None] * weights.n_blocks
    for l in reversed(range(weights.n_blocks)):
        gr, adj = _backward_block(cache.blocks[l], g, weights.blocks[l], cfg, cache.y, adj)
        scale = 1.0 / B if reduce == "mean" else 1.0
        blocks[l] = {name: ksum(gr[name]) * scale for name in WEIGHT_NAMES}
    return WeightSet(blocks, dict(weights.sizes))


def loss_and_grad(y, h_true, pilot, weights, cfg, reduce="mean"):
    """Batch loss (sum or mean of per-sample squared errors) and its gradient."""
    cache = forward(y, pilot, weights, cfg)
    per = np.sum(np.abs(cache.m_h - np.atleast_2d(h_true)) ** 2, axis=1)
    loss = per.sum() / (per.size if reduce == "mean" else 1)
    return float(loss), backward(cache, weights, h_true, pilot, cfg, reduce)


def batch_loss(y, h_true, pilot, weights, cfg) -> float:
    m_h = forward(y, pilot, weights, cfg).m_h
    return float(np.sum(np.abs(m_h - np.atleast_2d(h_true)) ** 2))


def grad_check(cfg: SystemConfig, trials: int = 10, n_params: int = 200, snr_db: float = 10.0,
               step: float = 1e-6, seed: int = 0, perturb: float = 0.0,
               grad_fn=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Each trial draws a fresh two-sample batch (activity probability raised to
    at least 0.3 so that several users carry signal) and ``n_params`` random
    weight coordinates. With ``perturb > 0`` the weights are drawn uniformly in
    ``[1 - perturb, 1 + perturb]``. ``grad_fn`` replaces :func:`backward`
    (used for negative controls).
    """
    from .pilots import build_system
    from .scenario import generate_dataset
    from .unfolded import init_weights

    system = build_system(cfg)
    pilot = system.pilot
    grad_fn = grad_fn or backward
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(trials):
        ds = generate_dataset(cfg.replace(Pa=max(cfg.Pa, 0.3)), pilot, [snr_db], 2,
                              seed=int(rng.integers(2**31)))
        weights = init_weights(cfg, pilot)
        if perturb:
            flat = rng.uniform(1 - perturb, 1 + perturb, weights.n_params)
            weights = weights.with_flat(flat)
        cache = forward(ds.y, pilot, weights, cfg)
        analytic = grad_fn(cache, weights, ds.h_bar, pilot, cfg).flat()
        base = weights.flat()
        floor = GRAD_FLOOR * max(1.0, batch_loss(ds.y, ds.h_bar, pilot, weights, cfg))
        idx = rng.choice(base.size, size=min(n_params, base.size), replace=False)
        for i in idx:
            hi, lo = base.copy(), base.copy()
            hi[i] += step
            lo[i] -= step
            f_hi = batch_loss(ds.y, ds.h_bar, pilot, weights.with_flat(hi), cfg)
            f_lo = batch_loss(ds.y, ds.h_bar, pilot, weights.with_flat(lo), cfg)
            worst = max(worst, rel_error(analytic[i], (f_hi - f_lo) / (2 * step), floor))
    return worst


# Central differences at step 1e-6 carry round-off of roughly 1e-16 * loss / 1e-6,
# so gradients smaller than GRAD_FLOOR * loss are compared on that absolute scale.
GRAD_FLOOR = 1e-5


def rel_error(a: float, b: float, floor: float = 0.0) -> float:
    denom = max(abs(a), abs(b), floor)
    return abs(a - b) / denom if denom > 0 else 0.0
