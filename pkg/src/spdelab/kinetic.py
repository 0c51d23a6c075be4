"""Kinetic function, exact-occupancy lifting to a velocity grid, dissipation and
entropy-balance bookkeeping, and the mollification-along-characteristics
error checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .torus import TorusField, TorusGrid, bv_seminorm, lp_norm


def chi(u, xi):
    """+1 if 0 <= xi <= u, -1 if u <= xi <= 0, else 0 (vectorised).

    At ``xi = 0`` the value follows the sign of ``u`` (0 when u = 0).
    """
    u = np.asarray(u, dtype=float)
    xi = np.asarray(xi, dtype=float)
    pos = (xi >= 0) & (xi <= u) & (u > 0)
    neg = (xi <= 0) & (xi >= u) & (u < 0)
    out = pos.astype(int) - neg.astype(int)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class XiGrid:
    """Uniform velocity grid on [xi_min, xi_max] with 0 on a cell boundary."""

    xi_min: float
    xi_max: float
    cells: int

    def __post_init__(self):
        if not self.xi_min < 0 < self.xi_max:
            raise ValueError("need xi_min < 0 < xi_max")
        if self.cells < 2:
            raise ValueError("need at least two velocity cells")
        neg = -self.xi_min / self.spacing
        if abs(neg - round(neg)) > 1e-9 * max(1.0, neg):
            raise ValueError("0 must be a cell boundary of the velocity grid")

    @classmethod
    def symmetric(cls, bound: float, cells: int) -> "XiGrid":
        if cells % 2:
            raise ValueError("a symmetric velocity grid needs an even cell count")
        return cls(-float(bound), float(bound), int(cells))

    @classmethod
    def covering(cls, field: TorusField, cells: int | None = None, margin: float = 1e-9) -> "XiGrid":
        """Symmetric grid covering the range of ``field``; default M_xi = M."""
        bound = max(float(np.abs(field.values).max()), 1e-300) * (1 + margin)
        return cls.symmetric(bound, cells or field.grid.cells)

    @property
    def spacing(self) -> float:
        return (self.xi_max - self.xi_min) / self.cells

    @property
    def n_neg(self) -> int:
        return int(round(-self.xi_min / self.spacing))

    @property
    def edges(self) -> np.ndarray:
        h = self.spacing
        return h * np.arange(-self.n_neg, self.cells - self.n_neg + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])


@dataclass(frozen=True, eq=False)
class KineticDensity:
    """Cell-averaged chi: ``values[j, x]`` is the signed occupancy of band j."""

    grid: TorusGrid
    xigrid: XiGrid
    values: np.ndarray = field(repr=False)


def _check_window(u, xigrid, tol=1e-12):
    lo, hi = xigrid.edges[0], xigrid.edges[-1]
    if u.size and (u.min() < lo - tol * abs(lo) or u.max() > hi + tol * abs(hi)):
        raise ValueError(f"field range [{u.min():.6g}, {u.max():.6g}] exceeds velocity "
                         f"window [{lo:.6g}, {hi:.6g}]")


def lift_values(u: np.ndarray, xigrid: XiGrid) -> np.ndarray:
    _check_window(u, xigrid)
    e = xigrid.edges
    h = xigrid.spacing
    nn = xigrid.n_neg
    ub = u[None, ...]
    shape = (-1,) + (1,) * u.ndim
    lower = e[nn:-1].reshape(shape)
    upper = e[1:nn + 1].reshape(shape)
    pos = np.clip((ub - lower) / h, 0.0, 1.0)
    neg = -np.clip((upper - ub) / h, 0.0, 1.0)
    return np.concatenate([neg, pos], axis=0)


def lift(field: TorusField, xigrid: XiGrid) -> KineticDensity:
    """Fractional occupancy per velocity cell; summing times dxi recovers u."""
    return KineticDensity(field.grid, xigrid, lift_values(field.values, xigrid))


def reconstruct(density: KineticDensity) -> TorusField:
    return TorusField(density.grid, density.values.sum(axis=0) * density.xigrid.spacing)


def _centered(v, axis, dx):
    return (np.roll(v, -1, axis=axis) - np.roll(v, 1, axis=axis)) / (2 * dx)


def _weight(u, p):
    if p == 0:
        return np.ones_like(u)
    with np.errstate(divide="ignore"):
        w = np.abs(u) ** p
    w[~np.isfinite(w)] = 0.0
    return w


def dissipation_mass(field: TorusField, model, weight_p: float = 0.0) -> float:
    """sum_x |u|^p sum_k (sum_i D_i beta_ik(u))^2 dx^N with centred D_i.

    For a regularised model the mollified part of the diffusion is used; the
    eps Laplacian part is accounted for separately (see ``eps_gradient_mass``).
    For ``p < 0`` cells with u = 0 contribute nothing.
    """
    if weight_p <= -1:
        raise ValueError("weight exponent must exceed -1")
    model = getattr(model, "dissipative", model)
    if not model.has_diffusion:
        return 0.0
    g = field.grid
    u = field.values
    b = model.beta(u)
    total = np.zeros_like(u)
    for k in range(g.dim):
        s = sum(_centered(b[..., i, k], i, g.spacing) for i in range(g.dim))
        total += s * s
    return float(np.sum(_weight(u, weight_p) * total) * g.cell_volume)


def eps_gradient_mass(field: TorusField, eps: float, weight_p: float = 0.0) -> float:
    """sum_x |u|^p eps |D u|^2 dx^N with centred differences."""
    g = field.grid
    u = field.values
    grad2 = sum(_centered(u, i, g.spacing) ** 2 for i in range(g.dim))
    return float(eps * np.sum(_weight(u, weight_p) * grad2) * g.cell_volume)


@dataclass
class KineticBalance:
    p: float
    lhs_initial: float
    lhs_final: float
    weighted_q_mass: float
    n_mass_direct: float
    residual: float

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / self.lhs_initial if self.lhs_initial else abs(self.residual)


def entropy_balance(u0: TorusField, uT: TorusField, accumulated_q: float, p: float = 0.0,
                    n_mass_direct: float = 0.0) -> KineticBalance:
    """Compare ||u0||^(p+2) - ||uT||^(p+2) with (p+2)(p+1) times the |xi|^p-weighted
    kinetic-measure mass accumulated over the run."""
    if p <= -1:
        raise ValueError("p must exceed -1")
    if accumulated_q < 0 or n_mass_direct < 0:
        raise ValueError("kinetic measure masses are nonnegative")
    q = p + 2.0
    a = lp_norm(u0, q) ** q
    b = lp_norm(uT, q) ** q
    w = (p + 2.0) * (p + 1.0) * accumulated_q
    return KineticBalance(p, a, b, w, float(n_mass_direct), a - b - w)


class MollificationError(NamedTuple):
    lhs: float
    bound: float
    shift_lhs: float
    shift_bound: float


def _bump_kernel(grid: TorusGrid, eps: float) -> np.ndarray:
    """Normalised even bump of radius eps sampled on the periodic grid."""
    from .model import bump

    m = grid.cells
    k = np.fft.fftfreq(m, d=1.0 / m)
    offs = np.meshgrid(*([k * grid.spacing] * grid.dim), indexing="ij")
    r = np.sqrt(sum(o ** 2 for o in offs))
    w = bump(r / eps)
    return w / w.sum()


def _pc_shift(v: np.ndarray, shift, dx) -> np.ndarray:
    """Exact cell averages of the piecewise-constant field ``v`` translated by ``shift``."""
    for ax, s in enumerate(np.atleast_1d(shift)):
        c = s / dx
        k = int(np.floor(c))
        frac = c - k
        a = np.roll(v, k, axis=ax)
        v = (1 - frac) * a + frac * np.roll(a, 1, axis=ax)
    return v


def mollification_error(field: TorusField, model, path_value, eps: float,
                        xigrid: XiGrid | None = None) -> MollificationError:
    """Grid versions of the two mollification-along-characteristics estimates.

    ``lhs`` is the L1(dy dxi) distance between chi mollified along the
    characteristic through ``path_value`` and chi evaluated on it; by
    translation invariance this equals the unshifted mollification error.
    ``shift_lhs`` is the L1 distance between chi transported by
    f(xi) path_value and chi itself, compared with
    sup|f| * |path_value| * BV(u).
    """
    g = field.grid
    if eps < 2 * g.spacing:
        raise ValueError(f"mollifier width {eps} below 2 dx = {2 * g.spacing}")
    z = np.broadcast_to(np.asarray(path_value, dtype=float), (g.dim,))
    if xigrid is None:
        xigrid = XiGrid.covering(field)
    dens = lift_values(field.values, xigrid)
    h = xigrid.spacing
    dv = g.cell_volume
    bv = bv_seminorm(field)

    kern = np.fft.fftn(_bump_kernel(g, eps))
    axes = tuple(range(1, g.dim + 1))
    moll = np.fft.ifftn(np.fft.fftn(dens, axes=axes) * kern, axes=axes).real
    lhs = float(np.abs(moll - dens).sum() * dv * h)

    speeds = model.f(xigrid.centers)
    shifted = np.empty_like(dens)
    for j in range(len(dens)):
        shifted[j] = _pc_shift(dens[j], speeds[j] * z, g.spacing)
    shift_lhs = float(np.abs(shifted - dens).sum() * dv * h)

    u = field.values
    lo, hi = min(0.0, float(u.min())), max(0.0, float(u.max()))
    fmax = float(np.linalg.norm(model.f(np.linspace(lo, hi, 4097)), axis=-1).max())
    return MollificationError(lhs, eps * bv, shift_lhs, fmax * float(np.linalg.norm(z)) * bv)
