"""Time steppers for du + sum_i d_i F^i(u) o dz^i = div(A(u) Du) dt on the torus.

* ``reference``: explicit conservative finite volumes for a regularised model
  driven by a piecewise-linear path (Engquist-Osher flux scaled by the path
  increment, centred second differences of the primitives B_ij).
* ``pathwise``: kinetic splitting. Lift u to velocity bands, move each band
  along its characteristic x -> x + f(xi) dz, reconstruct, then take the
  degenerate diffusion substep. Transport is exact, so any continuous path
  can drive it.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kinetic import XiGrid, dissipation_mass, eps_gradient_mass, lift_values
from .model import FluxModel, RegularizedModel
from .paths import DrivingPath
from .torus import TorusField, TorusGrid, bv_seminorm, lp_norm, spectral_shift


class CFLError(ValueError):
    """A requested step violates a stability restriction."""


class SolverError(RuntimeError):
    """Non-finite state or step-size underflow during a run."""


class MonitorWarning(UserWarning):
    """An a priori bound was exceeded by more than the scheme tolerance."""


MONITOR_COLUMNS = ("t", "l1", "l2", "linf", "bv", "mass", "q_eps", "q_diss")


@dataclass
class SolverConfig:
    scheme: str
    grid: TorusGrid
    model: FluxModel
    t_end: float
    xigrid: XiGrid | None = None
    cfl_hyperbolic: float = 0.45
    cfl_parabolic: float = 0.45
    record_every: float | None = None
    transport: str = "lattice"
    splitting: str = "lie"
    time_grid: np.ndarray | None = None
    tolerance_C: float = 1.0
    bv_tolerance: float = 0.02
    weight_p: float = 0.0

    def __post_init__(self):
        if self.scheme not in ("reference", "pathwise"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "reference" and not isinstance(self.model, RegularizedModel):
            raise ValueError("the reference scheme needs a RegularizedModel (uniform ellipticity)")
        if self.model.dim != self.grid.dim:
            raise ValueError("model and grid dimensions differ")
        for name in ("cfl_hyperbolic", "cfl_parabolic"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.record_every is not None and self.record_every <= 0:
            raise ValueError("record_every must be positive")
        if self.transport not in ("lattice", "spectral"):
            raise ValueError(f"unknown transport {self.transport!r}")
        if self.splitting not in ("lie", "strang"):
            raise ValueError(f"unknown splitting {self.splitting!r}")
        if self.time_grid is not None:
            tg = np.asarray(self.time_grid, dtype=float)
            if tg[0] != 0 or abs(tg[-1] - self.t_end) > 1e-12 * self.t_end or np.any(np.diff(tg) <= 0):
                raise ValueError("time_grid must increase strictly from 0 to t_end")
            self.time_grid = tg

    @property
    def tolerance(self) -> float:
        """tol(dx) = C dx used by the a priori bound monitors."""
        return self.tolerance_C * self.grid.spacing


@dataclass
class Trajectory:
    times: list
    snapshots: list
    monitors: np.ndarray
    steps: int = 0
    warnings: list = field(default_factory=list)

    @property
    def final(self) -> TorusField:
        return self.snapshots[-1]

    def monitor(self, name: str) -> np.ndarray:
        return self.monitors[:, MONITOR_COLUMNS.index(name)]

    def write_monitors(self, filename):
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(MONITOR_COLUMNS)
            for row in self.monitors:
                w.writerow([repr(float(x)) for x in row])

    def write_snapshot(self, index: int, filename):
        u = self.snapshots[index].values
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"i{a + 1}" for a in range(u.ndim)] + ["u"])
            for idx in np.ndindex(u.shape):
                w.writerow(list(idx) + [repr(float(u[idx]))])


# --- shared discrete operators -------------------------------------------

def _diffusion_rate(u: np.ndarray, model: FluxModel, dx: float) -> np.ndarray:
    """sum_ij D^2_ij B_ij(u): second differences on the diagonal, centred
    mixed differences off it."""
    if not model.has_diffusion:
        return np.zeros_like(u)
    b = model.bprim(u)
    n = u.ndim
    out = np.zeros_like(u)
    for i in range(n):
        bi = b[..., i, i]
        out += (np.roll(bi, -1, i) - 2 * bi + np.roll(bi, 1, i)) / dx ** 2
    if not model.diagonal:
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                bij = b[..., i, j]
                pp = np.roll(np.roll(bij, -1, i), -1, j)
                pm = np.roll(np.roll(bij, -1, i), 1, j)
                mp = np.roll(np.roll(bij, 1, i), -1, j)
                mm = np.roll(np.roll(bij, 1, i), 1, j)
                out += (pp - pm - mp + mm) / (4 * dx ** 2)
    return out


def _state_range(u):
    return min(0.0, float(u.min())), max(0.0, float(u.max()))


def parabolic_dt(model: FluxModel, u: np.ndarray, dx: float, cfl: float) -> float:
    lo, hi = _state_range(u)
    amax = model.max_diffusion(lo, hi)
    if amax <= 0:
        return math.inf
    return cfl * dx ** 2 / (2 * u.ndim * amax)


def _check_finite(u, t):
    if not np.all(np.isfinite(u)):
        raise SolverError(f"non-finite state at t={t:.6g}")


# --- reference scheme ------------------------------------------------------

def _eo_divergence(u: np.ndarray, model: FluxModel, dz: np.ndarray, dx: float) -> np.ndarray:
    """Engquist-Osher flux difference for the path increment ``dz`` per axis."""
    plus, minus = model.eo_primitives(u)
    out = np.zeros_like(u)
    for i in range(u.ndim):
        d = float(dz[i])
        if d == 0.0:
            continue
        pp, pm = plus[..., i], minus[..., i]
        if d > 0:
            g = d * (pp + np.roll(pm, -1, i))
        else:
            g = d * (pm + np.roll(pp, -1, i))
        out += (g - np.roll(g, 1, i)) / dx
    return out


def _hyperbolic_number(model, u, dz, dx):
    lo, hi = _state_range(u)
    return float(np.sum(model.max_speed(lo, hi) * np.abs(dz))) / dx


def reference_update(u: np.ndarray, model: RegularizedModel, dz, dt: float, dx: float,
                     cfl_h: float = 1.0, cfl_p: float = 1.0, check: bool = True) -> np.ndarray:
    """One explicit Euler step with path increment ``dz`` over time ``dt``."""
    dz = np.atleast_1d(np.asarray(dz, dtype=float))
    if check:
        nu = _hyperbolic_number(model, u, dz, dx)
        if nu > cfl_h * (1 + 1e-12):
            raise CFLError(f"hyperbolic CFL number {nu:.4g} exceeds {cfl_h}")
        if dt > parabolic_dt(model, u, dx, cfl_p) * (1 + 1e-12):
            raise CFLError(f"dt={dt:.4g} violates the parabolic CFL")
    return u - _eo_divergence(u, model, dz, dx) + dt * _diffusion_rate(u, model, dx)


def step_reference(u: TorusField, model: RegularizedModel, path: DrivingPath, t: float,
                   dt: float, cfl_hyperbolic: float = 0.45, cfl_parabolic: float = 0.45) -> TorusField:
    """Advance from t to t + dt using the path increment z(t + dt) - z(t)."""
    if not isinstance(model, RegularizedModel):
        raise ValueError("the reference scheme needs a RegularizedModel")
    dz = path(t + dt) - path(t)
    v = reference_update(u.values, model, dz, dt, u.grid.spacing, cfl_hyperbolic, cfl_parabolic)
    _check_finite(v, t + dt)
    return u.with_values(v)


# --- pathwise scheme -------------------------------------------------------

def _band_speeds(model, xigrid):
    return model.f(xigrid.centers)


def _lattice_roll(dens: np.ndarray, cells: np.ndarray, axis: int) -> np.ndarray:
    """Roll band j of ``dens`` by ``cells[j]`` along spatial ``axis``."""
    if not np.any(cells):
        return dens
    m = dens.shape[axis + 1]
    idx = (np.arange(m)[None, :] - cells[:, None]) % m
    shape = [len(cells)] + [1] * (dens.ndim - 1)
    shape[axis + 1] = m
    return np.take_along_axis(dens, idx.reshape(shape), axis=axis + 1)


def kinetic_transport(dens: np.ndarray, speeds: np.ndarray, z_start, dz, dx: float,
                      mode: str = "lattice") -> np.ndarray:
    """Move every band along x -> x + f(xi_j) dz.

    ``lattice`` mode shifts band j by
    ``round(f(xi_j)(z_start + dz)/dx) - round(f(xi_j) z_start/dx)`` whole cells,
    so the accumulated displacement always equals ``f(xi_j) z`` rounded to
    the grid; this keeps the update monotone and exactly reversible.
    ``spectral`` mode applies the exact fractional shift by phase rotation.
    """
    nd = dens.ndim - 1
    z0 = np.broadcast_to(np.asarray(z_start, dtype=float), (nd,))
    dz = np.broadcast_to(np.asarray(dz, dtype=float), (nd,))
    if not np.all(np.isfinite(dz)):
        raise ValueError("non-finite path increment")
    out = dens
    for ax in range(dens.ndim - 1):
        if dz[ax] == 0:
            continue
        f = speeds[:, ax]
        if mode == "lattice":
            cells = np.rint(f * (z0[ax] + dz[ax]) / dx) - np.rint(f * z0[ax] / dx)
            out = _lattice_roll(out, cells.astype(np.int64), ax)
        else:
            m = dens.shape[ax + 1]
            n = np.fft.fftfreq(m, d=1.0 / m)
            shape = [len(f)] + [1] * (dens.ndim - 1)
            shape[ax + 1] = m
            phase = np.exp(-2j * np.pi * np.outer(f * dz[ax], n)).reshape(shape)
            out = np.fft.ifft(np.fft.fft(out, axis=ax + 1) * phase, axis=ax + 1).real
    return out


def _lattice_shifts(speeds, z_start, dz, dx):
    nd = speeds.shape[1]
    z0 = np.broadcast_to(np.asarray(z_start, dtype=float), (nd,))
    z1 = z0 + np.broadcast_to(np.asarray(dz, dtype=float), (nd,))
    return (np.rint(speeds * z1 / dx) - np.rint(speeds * z0 / dx)).astype(np.int64)


def _lattice_transport_fast(u: np.ndarray, shifts: np.ndarray, xigrid: XiGrid) -> np.ndarray:
    """Lift, lattice transport and reconstruction in one pass.

    Contiguous bands sharing a shift are moved together: on a run of bands
    covering [c, d] with c >= 0 the summed occupancy is clip(u, c, d) - c (and
    clip(u, c, d) - d when d <= 0), so the cost scales with the number of
    distinct shifts instead of the number of bands.
    """
    from .kinetic import _check_window

    _check_window(u, xigrid)
    edges = xigrid.edges
    nn = xigrid.n_neg
    change = np.any(shifts[1:] != shifts[:-1], axis=1)
    change[nn - 1] = True
    starts = np.concatenate([[0], np.nonzero(change)[0] + 1])
    stops = np.append(starts[1:], len(shifts))
    out = np.zeros_like(u)
    axes = tuple(range(u.ndim))
    umax, umin = u.max(), u.min()
    for a, b in zip(starts, stops):
        c, d = edges[a], edges[b]
        if (c >= 0 and umax <= c) or (d <= 0 and umin >= d):
            continue
        part = np.clip(u, c, d) - (c if c >= 0 else d)
        s = tuple(int(k) for k in shifts[a])
        out += np.roll(part, s, axis=axes) if any(s) else part
    return out


def transport_values(u: np.ndarray, model: FluxModel, xigrid: XiGrid, z_start, dz, dx,
                     mode: str = "lattice") -> np.ndarray:
    speeds = _band_speeds(model, xigrid)
    if mode == "lattice":
        return _lattice_transport_fast(u, _lattice_shifts(speeds, z_start, dz, dx), xigrid)
    dens = lift_values(u, xigrid)
    moved = kinetic_transport(dens, speeds, z_start, dz, dx, mode)
    return moved.sum(axis=0) * xigrid.spacing


def step_pathwise(u: TorusField, model: FluxModel, dz, dt: float, xigrid: XiGrid | None = None,
                  z_start=None, transport: str = "lattice", cfl_parabolic: float = 0.45) -> TorusField:
    """Transport along characteristics by ``dz``, then one diffusion substep of length dt.

    ``z_start`` is the path value at the start of the step (lattice transport
    uses it to carry sub-cell displacements forward); it defaults to 0.
    """
    g = u.grid
    dz = np.broadcast_to(np.asarray(dz, dtype=float), (g.dim,))
    if not np.all(np.isfinite(dz)):
        raise ValueError("non-finite path increment")
    if xigrid is None:
        xigrid = XiGrid.covering(u)
    z0 = np.zeros(g.dim) if z_start is None else np.broadcast_to(np.asarray(z_start, float), (g.dim,))
    v = transport_values(u.values, model, xigrid, z0, dz, g.spacing, transport)
    if dt > 0 and model.has_diffusion:
        if dt > parabolic_dt(model, v, g.spacing, cfl_parabolic) * (1 + 1e-12):
            raise CFLError(f"dt={dt:.4g} violates the parabolic CFL")
        v = v + dt * _diffusion_rate(v, model, g.spacing)
    _check_finite(v, dt)
    return u.with_values(v)


# --- driver ---------------------------------------------------------------

class _Monitor:
    def __init__(self, cfg: SolverConfig, u0: TorusField):
        self.cfg = cfg
        self.model = cfg.model
        self.eps = getattr(cfg.model, "eps", 0.0)
        self.p = cfg.weight_p
        self.q_eps = 0.0
        self.q_diss = 0.0
        self.ref = {p: lp_norm(u0, p) for p in (1, 2, np.inf)}
        self.bv0 = bv_seminorm(u0)
        self.rows = []
        self.warned = set()
        self.messages = []
        self._last = self._rates(u0)

    def _rates(self, f: TorusField):
        qe = eps_gradient_mass(f, self.eps, self.p) if self.eps else 0.0
        return qe, dissipation_mass(f, self.model, self.p)

    def accumulate(self, f: TorusField, dt: float):
        new = self._rates(f)
        self.q_eps += 0.5 * (self._last[0] + new[0]) * dt
        self.q_diss += 0.5 * (self._last[1] + new[1]) * dt
        self._last = new

    def record(self, t: float, f: TorusField):
        norms = {p: lp_norm(f, p) for p in (1, 2, np.inf)}
        bv = bv_seminorm(f)
        tol = self.cfg.tolerance
        for p, v in norms.items():
            if v > self.ref[p] + tol:
                self._warn(f"L{p}", f"||u({t:.4g})||_{p} = {v:.6g} exceeds ||u0||_{p} + tol = {self.ref[p] + tol:.6g}")
        if f.grid.dim == 1 and bv > self.bv0 * (1 + self.cfg.bv_tolerance) + 1e-12:
            self._warn("BV", f"BV(u({t:.4g})) = {bv:.6g} exceeds BV(u0)(1+tol) = {self.bv0 * (1 + self.cfg.bv_tolerance):.6g}")
        self.rows.append([t, norms[1], norms[2], norms[np.inf], bv, f.mean(), self.q_eps, self.q_diss])

    def _warn(self, key, msg):
        self.messages.append(msg)
        if key not in self.warned:
            self.warned.add(key)
            warnings.warn(msg, MonitorWarning, stacklevel=3)


def _breakpoints(cfg: SolverConfig, path: DrivingPath) -> tuple:
    """Interval ends for stepping and the subset of times to record."""
    T = cfg.t_end
    if path.horizon < T * (1 - 1e-12):
        raise ValueError(f"path horizon {path.horizon} shorter than t_end {T}")
    every = cfg.record_every or T
    nrec = max(1, int(round(T / every)))
    rec = np.linspace(0.0, T, nrec + 1) if abs(nrec * every - T) < 1e-9 * T else \
        np.append(np.arange(0.0, T, every), T)
    if cfg.time_grid is not None:
        base = cfg.time_grid
    else:
        base = path.times[path.times < T * (1 - 1e-12)]
        base = np.append(base, T)
    pts = np.union1d(base, rec)
    # merge points closer than a rounding error
    keep = np.concatenate([[True], np.diff(pts) > 1e-12 * T])
    pts = pts[keep]
    pts[-1] = T
    recset = set(np.searchsorted(pts, rec[1:] - 1e-12 * T))
    return pts, recset


def run(config: SolverConfig, path: DrivingPath, u0: TorusField) -> Trajectory:
    """Integrate from u0 to t_end, recording monitors every ``record_every``."""
    cfg = config
    if path.dim != cfg.grid.dim:
        raise ValueError("path and grid dimensions differ")
    if u0.grid != cfg.grid:
        raise ValueError("initial field lives on a different grid")
    model = cfg.model
    dx = cfg.grid.spacing
    pts, recset = _breakpoints(cfg, path)
    zs = path(pts)
    mon = _Monitor(cfg, u0)
    mon.record(0.0, u0)
    times, snaps = [0.0], [u0]
    u = u0.values
    steps = 0
    xigrid = cfg.xigrid
    if cfg.scheme == "pathwise":
        xigrid = xigrid or XiGrid.covering(u0)
        speeds = _band_speeds(model, xigrid)
    fixed_grid = cfg.time_grid is not None
    t_floor = 1e-14 * cfg.t_end

    for k in range(len(pts) - 1):
        a, b = pts[k], pts[k + 1]
        dz = zs[k + 1] - zs[k]
        span = b - a
        if cfg.scheme == "reference":
            if fixed_grid:
                n = 1
            else:
                nu = _hyperbolic_number(model, u, dz, dx)
                dtp = parabolic_dt(model, u, dx, cfg.cfl_parabolic)
                n = max(1, math.ceil(nu / cfg.cfl_hyperbolic - 1e-12), math.ceil(span / dtp - 1e-12))
            h = span / n
            if h < t_floor:
                raise SolverError(f"step size underflow at t={a:.6g}")
            for _ in range(n):
                u = reference_update(u, model, dz / n, h, dx, cfg.cfl_hyperbolic, cfg.cfl_parabolic)
                _check_finite(u, a)
                steps += 1
                mon.accumulate(TorusField(cfg.grid, u), h)
        else:
            def move(v, z0, d):
                if cfg.transport == "lattice":
                    return _lattice_transport_fast(v, _lattice_shifts(speeds, z0, d, dx), xigrid)
                return kinetic_transport(lift_values(v, xigrid), speeds, z0, d, dx, "spectral").sum(axis=0) \
                    * xigrid.spacing

            if cfg.splitting == "strang":
                u = move(u, zs[k], 0.5 * dz)
            else:
                u = move(u, zs[k], dz)
            if model.has_diffusion:
                dtp = parabolic_dt(model, u, dx, cfg.cfl_parabolic)
                n = max(1, math.ceil(span / dtp - 1e-12))
                h = span / n
                if h < t_floor:
                    raise SolverError(f"step size underflow at t={a:.6g}")
                for _ in range(n):
                    u = u + h * _diffusion_rate(u, model, dx)
                    _check_finite(u, a)
                    steps += 1
                    mon.accumulate(TorusField(cfg.grid, u), h)
            else:
                steps += 1
            if cfg.splitting == "strang":
                u = move(u, zs[k] + 0.5 * dz, 0.5 * dz)
            _check_finite(u, b)
        if k + 1 in recset:
            f = TorusField(cfg.grid, u)
            mon.record(float(b), f)
            times.append(float(b))
            snaps.append(f)
    return Trajectory(times, snaps, np.array(mon.rows), steps, mon.messages)


def l1_contraction_check(config: SolverConfig, path: DrivingPath, u0_a: TorusField,
                         u0_b: TorusField) -> tuple:
    """(||u_a(T) - u_b(T)||_1, ||u_a(0) - u_b(0)||_1) for one shared path."""
    cfg = config
    if cfg.scheme == "pathwise" and cfg.xigrid is None:
        bound = max(np.abs(u0_a.values).max(), np.abs(u0_b.values).max())
        cfg = SolverConfig(**{**cfg.__dict__, "xigrid": XiGrid.symmetric(bound * (1 + 1e-9), cfg.grid.cells)})
    ua = run(cfg, path, u0_a).final
    ub = run(cfg, path, u0_b).final
    return lp_norm(ua - ub, 1), lp_norm(u0_a - u0_b, 1)
