"""Driving signals z in C_0([0, T]; R^N): Brownian samples, straight lines and
nested dyadic piecewise-linear approximants."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

DEFAULT_KNOTS_PER_UNIT = 2 ** 14


@dataclass(frozen=True, eq=False)
class DrivingPath:
    """Piecewise-linear path through ``values[k]`` at ``times[k]``.

    ``past`` optionally holds the negative-time half of a two-sided sample as
    ``(times, values)`` with times decreasing from 0; solvers ignore it.
    """

    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    past: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or len(t) < 2 or len(t) != len(v):
            raise ValueError("need at least two knots with one value row each")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("knot times must start at 0 and increase strictly")
        if np.any(v[0] != 0.0):
            raise ValueError("a driving path must start at z(0) = 0")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def intervals(self) -> int:
        return len(self.times) - 1

    def __call__(self, t):
        """Evaluate at time(s) ``t``; returns shape ``t.shape + (N,)``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon * (1 + 1e-12)):
            raise ValueError(f"t outside [0, {self.horizon}]")
        cols = [np.interp(t, self.times, self.values[:, i]) for i in range(self.dim)]
        return np.stack(cols, axis=-1)

    def total_variation(self) -> float:
        return float(np.linalg.norm(np.diff(self.values, axis=0), axis=1).sum())

    def to_csv(self, filename):
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"z{i + 1}" for i in range(self.dim)])
            for t, row in zip(self.times, self.values):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, filename) -> "DrivingPath":
        with open(filename, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        if header[0] != "t" or len(header) < 2:
            raise ValueError("expected columns t, z1..zN")
        return cls(body[:, 0], body[:, 1:])


def derive_seed(master_seed: int, index: int) -> int:
    """Independent 64-bit stream seed for Monte-Carlo path ``index``."""
    ss = np.random.SeedSequence([int(master_seed) & (2 ** 64 - 1), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _knot_count(T, knots_per_unit):
    if T <= 0:
        raise ValueError("horizon must be positive")
    if knots_per_unit < 2:
        raise ValueError("need at least 2 knots per unit time")
    return max(1, int(round(T * knots_per_unit)))


def sample_brownian(dim: int, T: float, knots_per_unit: int = DEFAULT_KNOTS_PER_UNIT,
                    seed: int = 0, two_sided: bool = False) -> DrivingPath:
    """Standard Brownian motion sampled at ``round(T * knots_per_unit)`` steps."""
    k = _knot_count(T, knots_per_unit)
    times = np.linspace(0.0, T, k + 1)
    rng = np.random.default_rng(seed)
    inc = rng.standard_normal((k, dim)) * np.sqrt(T / k)
    values = np.vstack([np.zeros((1, dim)), np.cumsum(inc, axis=0)])
    past = None
    if two_sided:
        back = rng.standard_normal((k, dim)) * np.sqrt(T / k)
        past = (-times, np.vstack([np.zeros((1, dim)), np.cumsum(back, axis=0)]))
    return DrivingPath(times, values, past)


def linear_path(dim: int, T: float, slope=1.0, knots_per_unit: int = 1024) -> DrivingPath:
    """z(t) = slope * t on every axis."""
    k = _knot_count(T, knots_per_unit)
    times = np.linspace(0.0, T, k + 1)
    s = np.broadcast_to(np.asarray(slope, dtype=float), (dim,))
    return DrivingPath(times, times[:, None] * s)


def dyadic_linearization(path: DrivingPath, level: int) -> DrivingPath:
    """Interpolate ``path`` at the ``2^level + 1`` nodes ``k 2^-level T``."""
    if level < 0:
        raise ValueError("level must be >= 0")
    pieces = 2 ** level
    k = path.intervals
    if pieces > k or k % pieces:
        raise ValueError(f"level {level} needs a base sample with a multiple of {pieces} "
                         f"uniform intervals, got {k}; sample a finer path")
    stride = k // pieces
    return DrivingPath(path.times[::stride], path.values[::stride])


def sup_distance(p1: DrivingPath, p2: DrivingPath, s: float = 0.0, t: float | None = None) -> float:
    """max over [s, t] of |p1 - p2| (Euclidean), exact for piecewise-linear paths."""
    if t is None:
        t = min(p1.horizon, p2.horizon)
    if s > t:
        raise ValueError("need s <= t")
    if s < 0 or t > min(p1.horizon, p2.horizon) * (1 + 1e-12):
        raise ValueError("[s, t] must lie inside both horizons")
    knots = np.union1d(p1.times, p2.times)
    knots = np.union1d(knots[(knots >= s) & (knots <= t)], [s, t])
    diff = p1(knots) - p2(knots)
    return float(np.linalg.norm(diff, axis=-1).max())
