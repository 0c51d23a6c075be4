"""Flat ``key = value`` experiment configuration with strict validation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

EXPERIMENTS = ("stability", "wongzakai", "decay", "regularity", "theta", "splitup", "lemmas", "simulate")


def _int(v):
    return int(v, 0) if isinstance(v, str) else int(v)


def _float(v):
    return float(v)


def _str(v):
    return str(v).strip()


def _float_list(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).replace(",", " ").split()]


def _int_list(v):
    """``4-9`` or ``4, 5, 6``."""
    if isinstance(v, (list, tuple)):
        return [int(x) for x in v]
    s = str(v).strip()
    if "-" in s and "," not in s:
        a, b = s.split("-")
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in s.replace(",", " ").split()]


def _choice(*options):
    def parse(v):
        v = _str(v)
        if v not in options:
            raise ValueError(f"expected one of {options}, got {v!r}")
        return v
    return parse


# key -> (parser, default); None default means "unset"
SCHEMA = {
    "experiment": (_choice(*EXPERIMENTS), None),
    "master_seed": (_int, 0),
    "mc_paths": (_int, 1),
    "output_dir": (_str, "spdelab_out"),
    "model.kind": (_choice("burgers", "porous", "power", "zero", "heat", "linear"), "burgers"),
    "model.m": (_float, None),
    "model.flux": (_choice("none", "burgers"), "none"),
    "model.eps": (_float, None),
    "model.mollifier": (_float, 0.0),
    "model.p1": (_float, None),
    "model.p2": (_float, None),
    "model.kappa": (_float, 1.0),
    "model.c": (_float, 1.0),
    "grid.dim": (_int, 1),
    "grid.cells": (_int, 256),
    "grid.refine": (_int_list, None),
    "xi.cells": (_int, None),
    "solver.scheme": (_choice("reference", "pathwise"), "pathwise"),
    "solver.t_end": (_float, 1.0),
    "solver.record_every": (_float, None),
    "solver.cfl_hyperbolic": (_float, 0.45),
    "solver.cfl_parabolic": (_float, 0.45),
    "solver.transport": (_choice("lattice", "spectral"), "lattice"),
    "solver.splitting": (_choice("lie", "strang"), "lie"),
    "solver.tolerance_c": (_float, 1.0),
    "path.kind": (_choice("brownian", "linear"), "brownian"),
    "path.knots_per_unit": (_int, 2 ** 14),
    "path.slope": (_float, 1.0),
    "path.levels": (_int_list, [4, 5, 6, 7, 8, 9]),
    "init.kind": (_choice("sine", "smooth", "step", "bump", "constant", "cosine"), "sine"),
    "init.amplitude": (_float, 1.0),
    "init.mean": (_float, 0.0),
    "init.width": (_float, 0.25),
    "theta.eps_min": (_float, 1e-4),
    "theta.eps_max": (_float, 1e-1),
    "theta.points": (_int, 7),
    "theta.value": (_float, None),
    "gamma": (_float_list, [1.0]),
    "alpha": (_float, 0.5),
    "lambda": (_float, 0.5),
    "delta": (_float, 0.5),
    "floor": (_float, 1e-10),
    "bootstrap": (_int, 200),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def experiment(self) -> str:
        return self.values["experiment"]

    @property
    def master_seed(self) -> int:
        return self.values["master_seed"]

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with keys replaced; dots in keys are written as double underscores."""
        new = dict(self.values)
        for k, v in changes.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            new[key] = SCHEMA[key][0](v) if v is not None else None
        return ExperimentConfig(new)

    def canonical(self) -> str:
        data = {k: v for k, v in sorted(self.values.items()) if k != "output_dir"}
        return json.dumps(data, sort_keys=True)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def parse_text(text: str, experiment: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    for k, v in (overrides or {}).items():
        if k not in SCHEMA:
            raise ConfigError(f"unknown key {k!r}")
        raw[k] = v
    if experiment is not None:
        if "experiment" in raw and _str(raw["experiment"]) != experiment:
            raise ConfigError(f"config names experiment {raw['experiment']!r}, command line {experiment!r}")
        raw["experiment"] = experiment
    values = {}
    for key, (parser, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parser(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        else:
            values[key] = default
    if values["experiment"] is None:
        raise ConfigError("no experiment given")
    cfg = ExperimentConfig(values)
    validate(cfg)
    return cfg


def load(filename, experiment: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    with open(filename) as fh:
        return parse_text(fh.read(), experiment, overrides)


def validate(cfg: ExperimentConfig):
    v = cfg.values
    kind = v["model.kind"]
    if kind == "porous" and v["model.m"] is None:
        raise ConfigError("model.kind = porous needs model.m")
    if kind != "porous" and v["model.m"] is not None:
        raise ConfigError("model.m only applies to model.kind = porous")
    if kind != "porous" and v["model.flux"] != "none":
        raise ConfigError("model.flux only applies to model.kind = porous")
    if kind == "power" and v["model.p1"] is None:
        raise ConfigError("model.kind = power needs model.p1")
    if kind != "power" and (v["model.p1"] is not None or v["model.p2"] is not None):
        raise ConfigError("model.p1 / model.p2 only apply to model.kind = power")
    if v["model.p2"] is not None and v["grid.dim"] != 2:
        raise ConfigError("model.p2 needs grid.dim = 2")
    if v["model.eps"] is not None and v["model.eps"] <= 0:
        raise ConfigError("model.eps must be positive")
    if v["solver.scheme"] == "reference" and v["model.eps"] is None:
        raise ConfigError("solver.scheme = reference needs model.eps")
    if v["grid.dim"] not in (1, 2):
        raise ConfigError("grid.dim must be 1 or 2")
    for key in ("grid.cells",) + tuple(("grid.refine",) if v["grid.refine"] else ()):
        cells = v[key] if isinstance(v[key], list) else [v[key]]
        for c in cells:
            if c < 4 or c & (c - 1):
                raise ConfigError(f"{key}: cells must be powers of two >= 4")
    if v["mc_paths"] < 1:
        raise ConfigError("mc_paths must be >= 1")
    if v["solver.t_end"] <= 0:
        raise ConfigError("solver.t_end must be positive")
    if not 0 < v["alpha"] <= 1:
        raise ConfigError("alpha must lie in (0, 1]")
    if any(g <= 0 for g in v["gamma"]):
        raise ConfigError("gamma values must be positive")
    if v["lambda"] < 0:
        raise ConfigError("lambda must be >= 0")
    if v["theta.value"] is not None and not 0 < v["theta.value"] <= 1:
        raise ConfigError("theta.value must lie in (0, 1]")
    if v["experiment"] == "regularity":
        # theta <= 1 always, so theta = 1 gives the widest admissible interval
        check_lambda(v["lambda"], v["theta.value"] or 1.0)
    if v["experiment"] == "decay" and v["solver.t_end"] < 4:
        raise ConfigError("the decay experiment needs solver.t_end >= 4")
    levels = v["path.levels"]
    if any(l < 0 for l in levels) or sorted(set(levels)) != levels:
        raise ConfigError("path.levels must be increasing and nonnegative")
    if v["experiment"] in ("stability", "wongzakai"):
        top = 2 ** max(levels)
        k = round(v["solver.t_end"] * v["path.knots_per_unit"])
        if k % top or k <= top:
            raise ConfigError("path.knots_per_unit * t_end must be a multiple of 2^max(level), and finer")


def check_lambda(lam: float, theta: float):
    """Admissible regularity exponents: 0 < lambda < 2 theta / (theta + 2)."""
    upper = 2 * theta / (theta + 2)
    if not 0 < lam < upper:
        raise ConfigError(f"lambda = {lam} outside the admissible interval (0, {upper:.6g}) for theta = {theta}")
