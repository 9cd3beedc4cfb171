import math
import struct

import numpy as np
import pytest

from dnn_mpbsbl.config import SystemConfig
from dnn_mpbsbl.errors import FingerprintError, FormatError
from dnn_mpbsbl.scenario import (Dataset, child_rng, generate_dataset, read_dataset,
                                 sample_scenario, snr_to_noise_var, write_dataset)


@pytest.mark.parametrize("snr, var", [(0, 1.0), (10, 0.1), (3, 0.501187233627272)])
def test_snr_to_noise_var(snr, var):
    assert snr_to_noise_var(snr) == pytest.approx(var, rel=1e-12)


def test_no_active_users_gives_pure_noise(desk_cfg, desk):
    cfg = desk_cfg.replace(Pa=0.0)
    sc = sample_scenario(cfg, desk.pilot, 5.0, child_rng(0, 0))
    assert not sc.alpha.any() and not sc.h_bar.any()
    assert np.any(sc.y != 0)
    # the noise draw is the one taken right after the (all-zero) channel draw
    rng = child_rng(0, 0)
    rng.random(cfg.K)
    rng.standard_normal((cfg.K, cfg.dc))
    rng.standard_normal((cfg.K, cfg.dc))
    s = math.sqrt(snr_to_noise_var(5.0) / 2)
    w = s * (rng.standard_normal(desk.pilot.n_obs) + 1j * rng.standard_normal(desk.pilot.n_obs))
    np.testing.assert_array_equal(sc.y, w)


def test_noiseless_limit(desk_cfg, desk):
    cfg = desk_cfg.replace(Pa=1.0)
    sc = sample_scenario(cfg, desk.pilot, 0.0, child_rng(1, 0), noise_var=1e-30)
    assert sc.alpha.all()
    np.testing.assert_allclose(sc.y, desk.pilot.dense @ sc.h_bar, atol=1e-13)


def test_inactive_blocks_are_exactly_zero(desk_cfg, desk):
    ds = generate_dataset(desk_cfg, desk.pilot, [10.0], 500, seed=4)
    blocks = ds.h_bar.reshape(len(ds), desk_cfg.K, desk_cfg.dc)
    assert np.all((blocks == 0).all(axis=2) == (ds.alpha == 0))


def test_channel_and_noise_statistics(desk_cfg, desk):
    cfg = desk_cfg.replace(Pa=0.5)
    ds = generate_dataset(cfg, desk.pilot, [7.0], 4000, seed=5)
    active = ds.h_bar.reshape(len(ds), cfg.K, cfg.dc)[ds.alpha.astype(bool)]
    assert active.size > 1e4
    assert np.mean(np.abs(active) ** 2) == pytest.approx(1.0, rel=0.02)
    w = ds.y - ds.h_bar @ desk.pilot.dense.T
    assert np.mean(np.abs(w) ** 2) == pytest.approx(snr_to_noise_var(7.0), rel=0.02)
    # circular: real and imaginary parts carry half the power each
    assert np.mean(w.real ** 2) == pytest.approx(np.mean(w.imag ** 2), rel=0.05)


def test_mean_active_count_desk(desk_cfg, desk):
    ds = generate_dataset(desk_cfg, desk.pilot, [10.0], 20000, seed=6)
    K, Pa, S = desk_cfg.K, desk_cfg.Pa, len(ds)
    sigma = math.sqrt(K * Pa * (1 - Pa) / S)
    assert abs(ds.alpha.sum(axis=1).mean() - K * Pa) < 3 * sigma


def test_per_sample_streams_are_prefix_stable(desk_cfg, desk):
    small = generate_dataset(desk_cfg, desk.pilot, [10.0], 5, seed=9)
    big = generate_dataset(desk_cfg, desk.pilot, [10.0], 12, seed=9)
    assert small == big.subset(slice(0, 5))
    other = generate_dataset(desk_cfg, desk.pilot, [10.0], 5, seed=10)
    assert not np.array_equal(small.y, other.y)


def test_snr_list_layout(desk_cfg, desk):
    ds = generate_dataset(desk_cfg, desk.pilot, [0.0, 10.0], 3, seed=1)
    np.testing.assert_array_equal(ds.snr_db, [0, 0, 0, 10, 10, 10])
    mixed = generate_dataset(desk_cfg, desk.pilot, [0.0, 5.0, 10.0], 300, seed=1, mixed=True)
    assert len(mixed) == 300
    assert set(np.unique(mixed.snr_db)) == {0.0, 5.0, 10.0}
    np.testing.assert_allclose(mixed.noise_var, 10 ** (-mixed.snr_db / 10))


def test_dataset_round_trip(desk_cfg, desk, tmp_path):
    ds = generate_dataset(desk_cfg, desk.pilot, [0.0, 15.0], 50, seed=2)
    p = tmp_path / "d.bin"
    write_dataset(ds, p)
    back = read_dataset(p, desk_cfg)
    assert back == ds
    for f in ("snr_db", "alpha", "h_bar", "y"):
        assert getattr(back, f).tobytes() == getattr(ds, f).tobytes()
    assert back[3].snr_db == 0.0 and back[70].snr_db == 15.0


def test_fixed_seed_gives_identical_bytes(desk_cfg, desk, tmp_path):
    for name in ("a.bin", "b.bin"):
        write_dataset(generate_dataset(desk_cfg, desk.pilot, [5.0], 20, seed=3), tmp_path / name)
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_header_layout(desk_cfg, desk, tmp_path):
    ds = generate_dataset(desk_cfg, desk.pilot, [5.0], 7, seed=3)
    p = tmp_path / "d.bin"
    write_dataset(ds, p)
    raw = p.read_bytes()
    magic, version, K, N, Lt, dc, S, fp = struct.unpack_from("<5sBiiiiqQ", raw)
    assert (magic, version, K, N, Lt, dc, S, fp) == (b"NORA1", 1, 20, 4, 5, 2, 7, ds.fingerprint)
    per_sample = 8 + K + 16 * K * dc + 16 * N * Lt
    assert len(raw) == struct.calcsize("<5sBiiiiqQ") + S * per_sample


def test_truncated_and_corrupt_files(desk_cfg, desk, tmp_path):
    ds = generate_dataset(desk_cfg, desk.pilot, [5.0], 10, seed=3)
    p = tmp_path / "d.bin"
    write_dataset(ds, p)
    raw = p.read_bytes()
    for bad in (raw[:-1], raw[:10], b"XORA1" + raw[5:], raw[:5] + b"\x02" + raw[6:]):
        p.write_bytes(bad)
        with pytest.raises(FormatError):
            read_dataset(p)


def test_fingerprint_mismatch(paper_cfg, paper, desk_cfg, tmp_path):
    ds = generate_dataset(paper_cfg, paper.pilot, [5.0], 3, seed=3)
    p = tmp_path / "paper.bin"
    write_dataset(ds, p)
    with pytest.raises(FingerprintError):
        read_dataset(p, desk_cfg)
    read_dataset(p, paper_cfg.replace(Nit=5))


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        read_dataset(tmp_path / "nope.bin")


def test_split_and_equality(desk_cfg, desk):
    ds = generate_dataset(desk_cfg, desk.pilot, [5.0], 10, seed=3)
    a, b = ds.split(4)
    assert len(a) == 4 and len(b) == 6
    assert a != b and ds == ds.subset(slice(None))
    assert isinstance(ds.subset([0, 2]), Dataset)
