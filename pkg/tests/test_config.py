import math

import pytest

from analysis.errors import ConfigError
from data.config import (
    PRESETS,
    CsvTopologyConfig,
    DualTopologyConfig,
    EquilateralTopologyConfig,
    deep_merge,
    load_config,
    resolved,
)


def _write(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_validates(name):
    cfg = load_config(preset=name)
    assert cfg.threads == 1


def test_fig_presets_content():
    fig6 = load_config(preset="fig6")
    assert isinstance(fig6.topology, DualTopologyConfig)
    assert (fig6.topology.d, fig6.topology.x21, fig6.topology.y21) == (0.8, 0.4, 0.32)
    assert (fig6.topology.n1, fig6.topology.n2) == (50, 49)
    assert (fig6.sweep.steer_count, fig6.sweep.obs_count) == (181, 721)

    fig9 = load_config(preset="fig9")
    assert isinstance(fig9.topology, EquilateralTopologyConfig)
    assert fig9.topology.d == pytest.approx(math.sqrt(3) / 3)
    assert fig9.perturbation.sigma == 0.1
    assert fig9.perturbation.sizes == [40, 80, 160]

    desk = load_config(preset="fig10-desk").spectrum
    assert (desk.n, desk.side_m, desk.lambda_m) == (2000, 10.0, 0.3)


def test_needs_config_or_preset():
    with pytest.raises(ConfigError):
        load_config()
    with pytest.raises(ConfigError):
        load_config(preset="fig99")


def test_unknown_key_is_reported_with_its_path(tmp_path):
    path = _write(tmp_path, '[topology]\nkind = "dual"\nd = 0.8\nx21 = 0.4\ny21 = 0.32\nn1 = 2\nn2 = 2\nspacing = 3\n')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert any(p.startswith("topology.dual.spacing") for p in info.value.problems)


def test_invalid_values_rejected(tmp_path):
    path = _write(tmp_path, "[sweep]\nepsilon = 1.5\nfov_deg = [30.0, -30.0]\n")
    with pytest.raises(ConfigError) as info:
        load_config(path, preset="fig6")
    joined = "\n".join(info.value.problems)
    assert "sweep.epsilon" in joined
    assert "sweep.fov_deg" in joined


def test_perturbation_needs_one_noise_source(tmp_path):
    path = _write(tmp_path, "[perturbation]\nsigma_wavelengths = 0.1\nsigma_m = 0.03\nlambda_m = 0.3\n")
    with pytest.raises(ConfigError):
        load_config(path, preset="fig6")

    path = _write(tmp_path, "[perturbation]\nsigma_m = 0.03\n", name="meters.toml")
    with pytest.raises(ConfigError):
        load_config(path, preset="fig6")


def test_sigma_in_meters_converts(tmp_path):
    path = _write(tmp_path, "[perturbation]\nsigma_m = 0.03\nlambda_m = 0.3\n")
    cfg = load_config(path, preset="fig6")
    assert cfg.perturbation.sigma == pytest.approx(0.1)


def test_file_overrides_preset_and_merges(tmp_path):
    path = _write(tmp_path, "threads = 3\n[topology]\ny21 = 0.31\n[sweep]\nsteer_count = 19\n")
    cfg = load_config(path, preset="fig6")
    assert cfg.threads == 3
    assert cfg.topology.y21 == 0.31
    assert cfg.topology.d == 0.8
    assert cfg.sweep.steer_count == 19
    assert cfg.sweep.obs_count == 721


def test_topology_of_another_kind_replaces_preset(tmp_path):
    path = _write(tmp_path, '[topology]\nkind = "equilateral"\nd = 0.6\nn1 = 3\nn2 = 3\n')
    cfg = load_config(path, preset="fig6")
    assert isinstance(cfg.topology, EquilateralTopologyConfig)


def test_deep_merge_does_not_mutate():
    base = {"a": {"b": 1, "c": 2}}
    out = deep_merge(base, {"a": {"b": 5}})
    assert out == {"a": {"b": 5, "c": 2}}
    assert base == {"a": {"b": 1, "c": 2}}


def test_cli_overrides_win(tmp_path):
    path = _write(tmp_path, "threads = 3\n[spectrum]\nseed = 4\n")
    cfg = load_config(path, preset="fig9", seed=17, threads=2)
    assert cfg.threads == 2
    assert cfg.spectrum.seed == 17
    assert cfg.perturbation.seed == 17


def test_relative_paths_follow_the_config_file(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    path = _write(sub, '[topology]\nkind = "explicit-csv"\npath = "layout.csv"\n')
    cfg = load_config(path)
    assert isinstance(cfg.topology, CsvTopologyConfig)
    assert cfg.topology.path == str(sub / "layout.csv")


def test_meters_layout_needs_lambda(tmp_path):
    path = _write(tmp_path, '[topology]\nkind = "explicit-csv"\npath = "l.csv"\nunits = "meters"\n')
    with pytest.raises(ConfigError):
        load_config(path)


def test_malformed_toml(tmp_path):
    path = _write(tmp_path, "[topology\nkind = dual\n")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.toml"))


def test_resolved_is_plain_json():
    dumped = resolved(load_config(preset="fig7"))
    assert dumped["topology"]["kind"] == "dual"
    assert dumped["sweep"]["fov_deg"] == [-90.0, 90.0]
    assert dumped["spectrum"]["shift"] == "auto"


def test_seed_override_leaves_bad_sections_to_validation(tmp_path):
    path = _write(tmp_path, "spectrum = 5\n")
    with pytest.raises(ConfigError) as info:
        load_config(path, seed=1)
    assert any(p.startswith("spectrum") for p in info.value.problems)


def test_spectrum_defaults_to_sinc_part():
    cfg = load_config(preset="fig6")
    assert cfg.spectrum.part == "sinc"
    assert load_config(preset="fig10-desk").spectrum.part == "both"
