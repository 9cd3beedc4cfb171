import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dnn_mpbsbl.backprop import (GRAD_FLOOR, backward, batch_loss, grad_check, ksum, loss_and_grad,
                                 loss_mse, rel_error)
from dnn_mpbsbl.errors import CacheMismatchError, DimensionError
from dnn_mpbsbl.scenario import generate_dataset
from dnn_mpbsbl.unfolded import forward, init_weights


def test_loss_examples():
    x = np.array([1 + 2j, -3j])
    assert loss_mse(x, x) == 0.0
    assert loss_mse([1 + 0j], [0j]) == 1.0
    assert loss_mse([1 + 1j, 2], [0, 0]) == 6.0
    with pytest.raises(DimensionError):
        loss_mse([1, 2], [1])


def test_zero_scenario_has_zero_loss_and_gradient(desk_cfg, desk):
    w = init_weights(desk_cfg, desk.pilot)
    y, h = np.zeros((1, 20), complex), np.zeros((1, 40), complex)
    loss, g = loss_and_grad(y, h, desk.pilot, w, desk_cfg, reduce="sum")
    assert loss == 0.0
    assert np.all(g.flat() == 0.0)


def _fd_all(y, h, pilot, w, cfg, step=1e-6):
    base = w.flat()
    out = np.empty(base.size)
    for i in range(base.size):
        hi, lo = base.copy(), base.copy()
        hi[i] += step
        lo[i] -= step
        out[i] = (batch_loss(y, h, pilot, w.with_flat(hi), cfg)
                  - batch_loss(y, h, pilot, w.with_flat(lo), cfg)) / (2 * step)
    return out


@pytest.mark.parametrize("perturb", [0.0, 0.5])
def test_every_gradient_matches_finite_differences(tiny_cfg, tiny, perturb):
    rng = np.random.default_rng(3)
    ds = generate_dataset(tiny_cfg, tiny.pilot, [10.0], 2, seed=11)
    w = init_weights(tiny_cfg, tiny.pilot)
    if perturb:
        w = w.with_flat(rng.uniform(1 - perturb, 1 + perturb, w.n_params))
    assert w.n_params == 2 * (10 * 12 + 6 * 4 + 11 * 6)
    cache = forward(ds.y, tiny.pilot, w, tiny_cfg)
    analytic = backward(cache, w, ds.h_bar, tiny.pilot, tiny_cfg).flat()
    fd = _fd_all(ds.y, ds.h_bar, tiny.pilot, w, tiny_cfg)
    floor = GRAD_FLOOR * max(1.0, batch_loss(ds.y, ds.h_bar, tiny.pilot, w, tiny_cfg))
    worst = max(rel_error(a, b, floor) for a, b in zip(analytic, fd))
    assert worst < 1e-4
    assert np.count_nonzero(analytic) > w.n_params // 2


def test_masked_loss_gradient(tiny_cfg, tiny):
    """With the detection mask held fixed, the masked error is differentiated exactly."""
    ds = generate_dataset(tiny_cfg, tiny.pilot, [10.0], 2, seed=12)
    w = init_weights(tiny_cfg, tiny.pilot)
    cache = forward(ds.y, tiny.pilot, w, tiny_cfg)
    mask = np.repeat(1 / cache.final.gamma_hat > tiny_cfg.gamma_th, 1, axis=1).astype(float)
    mask[0, 0] = 0.0
    analytic = backward(cache, w, ds.h_bar, tiny.pilot, tiny_cfg, mask=mask).flat()

    def loss(flat):
        m_h = forward(ds.y, tiny.pilot, w.with_flat(flat), tiny_cfg).m_h
        return float(np.sum(np.abs(mask * m_h - ds.h_bar) ** 2))

    base, step = w.flat(), 1e-6
    floor = GRAD_FLOOR * max(1.0, loss(base))
    for i in np.random.default_rng(0).choice(base.size, 80, replace=False):
        hi, lo = base.copy(), base.copy()
        hi[i] += step
        lo[i] -= step
        assert rel_error(analytic[i], (loss(hi) - loss(lo)) / (2 * step), floor) < 1e-4


def test_grad_check_unit_and_perturbed_weights(desk_cfg):
    assert grad_check(desk_cfg, trials=3, n_params=200, seed=1) < 1e-4
    assert grad_check(desk_cfg, trials=3, n_params=200, seed=2, perturb=0.5) < 1e-4


def test_grad_check_negative_control(desk_cfg):
    def broken(cache, weights, h, pilot, cfg):
        # drops the factor 2 of the squared-error derivative
        g = backward(cache, weights, h, pilot, cfg)
        return g.with_flat(0.5 * g.flat())

    assert grad_check(desk_cfg, trials=2, n_params=50, seed=1, grad_fn=broken) > 1e-2


def test_duplicated_sample_doubles_gradient(desk_cfg, desk):
    ds = generate_dataset(desk_cfg.replace(Pa=0.4), desk.pilot, [10.0], 1, seed=5)
    w = init_weights(desk_cfg, desk.pilot)
    _, one = loss_and_grad(ds.y, ds.h_bar, desk.pilot, w, desk_cfg, reduce="sum")
    y2, h2 = np.repeat(ds.y, 2, axis=0), np.repeat(ds.h_bar, 2, axis=0)
    _, two = loss_and_grad(y2, h2, desk.pilot, w, desk_cfg, reduce="sum")
    np.testing.assert_allclose(two.flat(), 2 * one.flat(), rtol=1e-13, atol=0)
    _, mean = loss_and_grad(y2, h2, desk.pilot, w, desk_cfg, reduce="mean")
    np.testing.assert_allclose(mean.flat(), one.flat(), rtol=1e-13, atol=0)


def test_batch_order_invariance(desk_cfg, desk):
    ds = generate_dataset(desk_cfg, desk.pilot, [10.0], 40, seed=6)
    w = init_weights(desk_cfg, desk.pilot)
    _, g = loss_and_grad(ds.y, ds.h_bar, desk.pilot, w, desk_cfg, reduce="sum")
    perm = np.random.default_rng(0).permutation(40)
    _, gp = loss_and_grad(ds.y[perm], ds.h_bar[perm], desk.pilot, w, desk_cfg, reduce="sum")
    a, b = g.flat(), gp.flat()
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_cache_mismatch(desk_cfg, desk):
    ds = generate_dataset(desk_cfg, desk.pilot, [10.0], 2, seed=6)
    w = init_weights(desk_cfg, desk.pilot)
    cache = forward(ds.y, desk.pilot, w, desk_cfg)
    with pytest.raises(CacheMismatchError):
        backward(cache, w.copy(), ds.h_bar, desk.pilot, desk_cfg)
    with pytest.raises(CacheMismatchError):
        backward(cache, w, ds.h_bar[:1], desk.pilot, desk_cfg)


def test_loss_and_grad_reductions(desk_cfg, desk):
    ds = generate_dataset(desk_cfg, desk.pilot, [10.0], 4, seed=7)
    w = init_weights(desk_cfg, desk.pilot)
    s, _ = loss_and_grad(ds.y, ds.h_bar, desk.pilot, w, desk_cfg, reduce="sum")
    m, _ = loss_and_grad(ds.y, ds.h_bar, desk.pilot, w, desk_cfg, reduce="mean")
    assert s == pytest.approx(4 * m, rel=1e-14)
    assert s == pytest.approx(batch_loss(ds.y, ds.h_bar, desk.pilot, w, desk_cfg), rel=1e-14)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200))
def test_ksum_matches_exact_sum(values):
    x = np.array(values)[:, None]
    exact = math.fsum(values)
    assert abs(ksum(x)[0] - exact) <= 1e-9 * max(1.0, sum(abs(v) for v in values))


def test_ksum_recovers_cancelled_digits():
    x = np.array([1.0, 1e-16, 1e-16, 1e-16, 1e-16, -1.0])[:, None]
    assert ksum(x)[0] == pytest.approx(4e-16, rel=1e-6)


def test_rel_error_floor():
    assert rel_error(1.0, 1.0) == 0.0
    assert rel_error(0.0, 0.0) == 0.0
    assert rel_error(1e-9, 2e-9) == pytest.approx(0.5)
    assert rel_error(1e-9, 2e-9, floor=1e-5) == pytest.approx(1e-4)
