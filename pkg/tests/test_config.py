import pytest
from hypothesis import given, strategies as st

from dnn_mpbsbl.config import (SystemConfig, derived_dims, fingerprint, format_config,
                               load_config, parse_config, validate_config)
from dnn_mpbsbl.errors import ConfigError, DimensionError


def test_paper_config_is_valid():
    validate_config(SystemConfig(K=110, N=8, Lt=11, dc=4, Pa=0.1, gamma_th=0.1))


def test_minimal_config_is_valid():
    validate_config(SystemConfig(K=1, N=1, Lt=1, dc=1, Pa=0.0))


def test_indivisible_row_degree_rejected():
    # 110 * 3 = 330 is not a multiple of 8
    with pytest.raises(DimensionError, match="divisible"):
        validate_config(SystemConfig(K=110, N=8, dc=3))


@pytest.mark.parametrize("change, what", [
    (dict(K=0), "K >= 1"), (dict(dc=9), "dc <= N"), (dict(Pa=1.5), "Pa"),
    (dict(Nit=0), "Nit"), (dict(eps_v=0.0), "eps_v"), (dict(Lt=0), "Lt"),
])
def test_each_constraint_is_named(change, what):
    with pytest.raises(DimensionError, match=what):
        validate_config(SystemConfig().replace(**change))


def test_derived_dims_paper():
    d = derived_dims(SystemConfig())
    assert d.dr == 55  # (110 / 8) * 4
    assert d.E == 4840  # 11 * 4 * 110
    assert d.layer_len == [88, 4840, 440, 440, 110, 4840, 88, 88, 1]


def test_derived_dims_orthogonal_assignment():
    assert derived_dims(SystemConfig(K=6, N=6, Lt=7, dc=1)).dr == 1


def test_derived_dims_is_pure():
    cfg = SystemConfig.desk()
    assert derived_dims(cfg) == derived_dims(cfg)


@given(st.integers(1, 12), st.integers(1, 6), st.integers(1, 13), st.data())
def test_config_text_round_trip(K, N, Lt, data):
    dc = data.draw(st.integers(1, N))
    cfg = SystemConfig(K=K * N, N=N, Lt=Lt, dc=dc,
                       Pa=data.draw(st.floats(0, 1)),
                       gamma_th=data.draw(st.floats(1e-6, 10)),
                       graph_seed=data.draw(st.integers(0, 2**31)))
    assert parse_config(format_config(cfg)) == cfg


def test_parse_ignores_comments_and_blanks():
    cfg = parse_config("# desk\n\nK=20  # users\nN=4\nLt=5\ndc=2\n")
    assert (cfg.K, cfg.N, cfg.Lt, cfg.dc) == (20, 4, 5, 2)
    assert cfg.Nit == 10


def test_unknown_key_is_an_error():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("K=20\nsnr=3\n")


def test_bad_value_and_bad_line():
    with pytest.raises(ConfigError):
        parse_config("K=twenty\n")
    with pytest.raises(ConfigError):
        parse_config("K 20\n")


def test_parse_validates():
    with pytest.raises(DimensionError):
        parse_config("K=110\nN=8\ndc=3\n")


def test_load_config_file(tmp_path):
    p = tmp_path / "desk.cfg"
    p.write_text(format_config(SystemConfig.desk()))
    assert load_config(p) == SystemConfig.desk()


def test_fingerprint_tracks_data_law_only():
    cfg = SystemConfig.desk()
    assert fingerprint(cfg) == fingerprint(cfg.replace(Nit=10, gamma_th=0.3))
    for change in (dict(K=24), dict(Pa=0.2), dict(graph_seed=1), dict(Lt=7)):
        assert fingerprint(cfg) != fingerprint(cfg.replace(**change))
