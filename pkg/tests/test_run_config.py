import pytest

from localization_stats import WindowSpec
from run_config import RunConfig, load_config_file, resolve_config


def test_defaults_resolve_to_window_multiples():
    config = resolve_config()
    assert config.n_max == 50
    assert config.window.as_tuple() == (250, 500)
    assert config.max_steps == 500
    assert config.ensembles == ("GOE", "GUE", "URE", "UIM", "UCP")
    assert config.reorth == "full"


@pytest.mark.parametrize("preset,n_max,window,max_steps", [
    ("correlation", 50, (250, 500), 500),
    ("distribution", 100, (500, 1000), 1000),
    ("alternate_window", 100, (1000, 1500), 1500),
    ("wishart_small", 15, (75, 149), 150),
    ("chi_square", 5, (1, 15), 15),
])
def test_presets(preset, n_max, window, max_steps):
    config = resolve_config(preset)
    assert config.preset == preset
    assert config.n_max == n_max
    assert config.window.as_tuple() == window
    assert config.max_steps == max_steps
    assert config.n_samples == 5000


def test_n_max_override_rescales_multiples_preset():
    config = resolve_config("correlation", overrides={"n_max": 20})
    assert config.window.as_tuple() == (100, 200)
    assert config.max_steps == 200


def test_absolute_window_override_replaces_preset_multiples():
    config = resolve_config("distribution", overrides={"window": (11, 31), "window_phase": 1})
    assert config.window == WindowSpec(11, 31, 1)
    assert config.max_steps == 1000


def test_config_file_layers(tmp_path):
    path = tmp_path / "run.env"
    path.write_text(
        "# chaotic stadium, two ensembles\n"
        "KIND=stadium\n"
        "a=0.5\n"
        "ENSEMBLES=goe, gue\n"
        "N_SAMPLES=300\n"
        "WINDOW_START=21\n"
        "WINDOW_END=41\n"
        "MAX_STEPS=60\n"
        "UNIT_NORM=yes\n"
        "H=auto\n",
        encoding="utf-8"
    )
    values = load_config_file(str(path))
    assert values["kind"] == "stadium"
    assert values["ensembles"] == ("goe", "gue")
    assert values["unit_norm"] is True
    assert values["h"] is None

    config = resolve_config("correlation", str(path), {"n_samples": 50, "a": None})
    assert config.kind == "stadium"
    assert config.a == 0.5
    assert config.ensembles == ("GOE", "GUE")
    assert config.n_samples == 50
    assert config.window.as_tuple() == (21, 41)
    assert config.max_steps == 60
    assert config.unit_norm


def test_config_file_errors(tmp_path):
    unknown = tmp_path / "unknown.env"
    unknown.write_text("COLOR=blue\n", encoding="utf-8")
    with pytest.raises(ValueError, match="unknown config key"):
        load_config_file(str(unknown))

    bad_bool = tmp_path / "bool.env"
    bad_bool.write_text("DUMP_BN=maybe\n", encoding="utf-8")
    with pytest.raises(ValueError, match="boolean"):
        load_config_file(str(bad_bool))

    with pytest.raises(FileNotFoundError):
        load_config_file(str(tmp_path / "missing.env"))


def test_window_start_needs_end(tmp_path):
    path = tmp_path / "half.env"
    path.write_text("WINDOW_START=11\n", encoding="utf-8")
    with pytest.raises(ValueError, match="together"):
        resolve_config(config_file=str(path))


def test_override_window_replaces_file_bounds(tmp_path):
    path = tmp_path / "bounds.env"
    path.write_text("WINDOW_START=11\nWINDOW_END=31\n", encoding="utf-8")
    assert resolve_config("correlation", str(path)).window.as_tuple() == (11, 31)

    config = resolve_config("correlation", str(path), {"window": (41, 61)})
    assert config.window.as_tuple() == (41, 61)


@pytest.mark.parametrize("changes,message", [
    ({"n_samples": 0}, "n_samples"),
    ({"n_max": 1}, "n_max"),
    ({"kind": "ellipse"}, "kind"),
    ({"a": 1.5}, "a must lie"),
    ({"ensembles": ("GOE", "XYZ")}, "Unknown ensembles"),
    ({"ensembles": ("GOE", "goe")}, "Duplicate"),
    ({"ensembles": ()}, "At least one"),
    ({"max_steps": 400}, "max_steps"),
    ({"reorth": "sometimes"}, "reorthogonalization"),
    ({"workers": 0}, "workers"),
    ({"premature_limit": 1.0}, "premature_limit"),
    ({"master_seed": -1}, "master_seed"),
    ({"ck_points": 1}, "K-complexity"),
])
def test_validation_rejects(changes, message):
    with pytest.raises(ValueError, match=message):
        RunConfig(**changes)


def test_window_must_fit_in_krylov_space():
    with pytest.raises(ValueError, match="at most 6"):
        RunConfig(n_max=3, window=WindowSpec(1, 9), max_steps=10)
    with pytest.raises(ValueError, match="fewer than 2"):
        RunConfig(n_max=3, window=WindowSpec(1, 3), max_steps=10)


def test_fixed_spectrum_skips_geometry_checks():
    config = RunConfig(kind="custom", spectrum_file="levels.txt")
    assert config.kind == "custom"


def test_manifest_round_trip():
    config = resolve_config("chi_square", overrides={"master_seed": 7, "ensembles": ("GUE",)})
    data = config.to_dict()
    assert data["window"] == {"start": 1, "end": 15, "phase": 0}
    assert data["ensembles"] == ["GUE"]
    assert RunConfig.from_dict(data) == config

    data["colour"] = "red"
    with pytest.raises(ValueError, match="Unknown manifest fields"):
        RunConfig.from_dict(data)


def test_with_changes_revalidates():
    config = resolve_config("chi_square")
    changed = config.with_changes(a=0.25, ensembles=["UCP"])
    assert changed.a == 0.25
    assert changed.ensembles == ("UCP",)
    assert changed.window == config.window
    with pytest.raises(ValueError):
        config.with_changes(n_samples=0)


def test_lanczos_config():
    cfg = resolve_config("chi_square", overrides={"reorth": "partial"}).lanczos_config()
    assert cfg.max_steps == 15
    assert cfg.reorth == "partial"
