import pytest

from spdelab.config import SCHEMA, ConfigError, ExperimentConfig, check_lambda, load, parse_text


def test_defaults_and_parsing():
    cfg = parse_text("experiment = splitup\n# comment\n[section]\ngamma = 0.5, 1 2\npath.levels = 3-5\n")
    assert cfg.experiment == "splitup"
    assert cfg["gamma"] == [0.5, 1.0, 2.0]
    assert cfg["path.levels"] == [3, 4, 5]
    assert cfg["grid.cells"] == SCHEMA["grid.cells"][1]
    assert cfg.get("model.eps", 7.0) == 7.0
    assert parse_text("experiment = lemmas\nmaster_seed = 0x10").master_seed == 16


def test_command_line_experiment_and_overrides():
    cfg = parse_text("grid.cells = 32", "lemmas", {"master_seed": "5"})
    assert cfg.experiment == "lemmas" and cfg.master_seed == 5
    with pytest.raises(ConfigError):
        parse_text("experiment = decay", "lemmas")
    with pytest.raises(ConfigError):
        parse_text("", "lemmas", {"no.such": "1"})


@pytest.mark.parametrize("text", [
    "grid.cells = 32",
    "experiment = lemmas\nbogus = 1",
    "experiment = lemmas\ngrid.cells = 32\ngrid.cells = 64",
    "experiment = lemmas\njust words",
    "experiment = lemmas\ngrid.cells = 48",
    "experiment = lemmas\ngrid.cells = many",
    "experiment = lemmas\nmodel.kind = porous",
    "experiment = lemmas\nmodel.m = 2",
    "experiment = lemmas\nmodel.flux = burgers",
    "experiment = lemmas\nmodel.kind = power",
    "experiment = lemmas\nmodel.kind = power\nmodel.p1 = 1\nmodel.p2 = 1",
    "experiment = lemmas\nmodel.eps = -1",
    "experiment = lemmas\nsolver.scheme = reference",
    "experiment = lemmas\ngrid.dim = 3",
    "experiment = lemmas\nmc_paths = 0",
    "experiment = lemmas\nsolver.t_end = 0",
    "experiment = lemmas\nalpha = 1.5",
    "experiment = lemmas\ngamma = 1, -1",
    "experiment = lemmas\nlambda = -0.1",
    "experiment = lemmas\ntheta.value = 1.5",
    "experiment = regularity\nlambda = 0.7",
    "experiment = regularity\nlambda = 0.5\ntheta.value = 0.5",
    "experiment = decay\nsolver.t_end = 2",
    "experiment = lemmas\npath.levels = 5, 4",
    "experiment = stability\nsolver.t_end = 1\npath.knots_per_unit = 512\npath.levels = 4-9",
    "experiment = lemmas\nsolver.scheme = implicit",
])
def test_invalid_configurations(text):
    with pytest.raises(ConfigError):
        parse_text(text)


def test_lambda_interval():
    check_lambda(0.5, 1.0)
    check_lambda(0.3, 0.5)
    for lam, theta in ((0.0, 1.0), (2 / 3, 1.0), (0.4, 0.5)):
        with pytest.raises(ConfigError):
            check_lambda(lam, theta)


def test_hash_ignores_output_dir_only():
    a = parse_text("experiment = lemmas\noutput_dir = a")
    b = parse_text("experiment = lemmas\noutput_dir = b")
    c = parse_text("experiment = lemmas\nmaster_seed = 1")
    assert a.config_hash == b.config_hash != c.config_hash
    assert len(a.config_hash) == 16


def test_replace():
    cfg = parse_text("experiment = lemmas")
    new = cfg.replace(grid__cells=32, master_seed="3")
    assert new["grid.cells"] == 32 and new.master_seed == 3 and cfg["grid.cells"] == 256
    assert isinstance(new, ExperimentConfig)
    with pytest.raises(ConfigError):
        cfg.replace(nothing=1)


def test_shipped_configs_load():
    import pathlib

    root = pathlib.Path(__file__).resolve().parent.parent / "configs"
    files = sorted(root.glob("*.ini"))
    assert len(files) == 8
    for f in files:
        assert load(f).experiment == f.stem
