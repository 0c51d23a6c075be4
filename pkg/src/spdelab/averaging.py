"""Fourier-side averaging diagnostics: the damped transport-diffusion
semigroup, the split-up u = u0 + u1 + Q, the fractional heat multiplier bound
and the quadrature check of the phi integral estimate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .kinetic import XiGrid, lift_values
from .torus import TorusField, lp_norm

CONVENTIONS = {"physical": (2 * np.pi) ** 2, "integer": 1.0}


class EnvelopeError(ValueError):
    """The supplied iota does not dominate the sampled sublevel measures."""


class WindowError(ValueError):
    """The w window leaves a Gaussian tail that is too heavy."""


@dataclass(frozen=True)
class AveragingConfig:
    alpha: float
    gamma: float
    lam: float = 0.0
    theta: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if self.mu2 >= 2:
            raise ValueError(f"(lambda + 2)/(2 alpha) = {self.mu2:.4g} must stay below 2")

    @property
    def mu2(self) -> float:
        return (self.lam + 2) / (2 * self.alpha)


def _scale(convention):
    try:
        return CONVENTIONS[convention]
    except KeyError:
        raise ValueError(f"convention must be one of {sorted(CONVENTIONS)}") from None


def semigroup_multiplier(n, xi, model, beta_increment, dt, gamma, alpha,
                         convention: str = "physical"):
    """exp(-2 pi i sum_i f^i(xi) dbeta^i n_i - (s n.A(xi)n + gamma(|n|^(2 alpha) + 1)) dt).

    ``s`` is (2 pi)^2 for ``convention="physical"`` and 1 for ``"integer"``.
    Broadcasts over arrays of ``n`` (trailing axis N) and ``xi``.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    s = _scale(convention)
    n = np.asarray(n, dtype=float)
    if n.ndim == 0:
        n = n[None]
    xi = np.asarray(xi, dtype=float)
    db = np.broadcast_to(np.asarray(beta_increment, dtype=float), (model.dim,))
    f = model.f(xi)
    a = model.A(xi)
    nb = n.reshape(n.shape[:-1] + (1,) * xi.ndim + n.shape[-1:])
    phase = np.sum(f * db * nb, axis=-1)
    quad = np.einsum("...i,...ij,...j->...", nb, a, nb)
    mod2 = np.sum(nb ** 2, axis=-1)
    omega = gamma * (mod2 ** alpha + 1)
    out = np.exp(-2j * np.pi * phase - (s * quad + omega) * dt)
    return complex(out) if out.ndim == 0 else out


def _mode_arrays(grid):
    freqs = np.stack([k.astype(float) for k in grid.frequencies], axis=-1)
    return freqs, np.sum(freqs ** 2, axis=-1)


def _band_multiplier(grid, model, xigrid, dbeta, dt, gamma, alpha, convention):
    """Multiplier per (band, mode); shape (M_xi,) + grid.shape."""
    s = _scale(convention)
    freqs, mod2 = _mode_arrays(grid)
    xc = xigrid.centers
    f = model.f(xc)
    a = model.A(xc)
    phase = np.tensordot(f * np.broadcast_to(dbeta, (grid.dim,)), np.moveaxis(freqs, -1, 0), axes=1)
    quad = np.einsum("...i,jik,...k->j...", freqs, a, freqs)
    omega = gamma * (mod2 ** alpha + 1)
    return np.exp(-2j * np.pi * phase - (s * quad + omega[None]) * dt), omega


def _spectral_bands(u: np.ndarray, xigrid: XiGrid) -> np.ndarray:
    dens = lift_values(u, xigrid)
    axes = tuple(range(1, dens.ndim))
    return np.fft.fftn(dens, axes=axes)


def _integrate_bands(coeffs_bands, xigrid):
    """xi-integral of banded Fourier coefficients; the zero mode is set to 0."""
    c = coeffs_bands.sum(axis=0) * xigrid.spacing
    c.flat[0] = 0.0
    return c


def _to_field(grid, coeffs_bands, xigrid):
    return TorusField(grid, np.fft.ifftn(_integrate_bands(coeffs_bands, xigrid)).real)


def u0_coefficients(u0_field: TorusField, model, path, t: float, gamma: float, alpha: float,
                    xigrid: XiGrid | None = None, convention: str = "physical") -> np.ndarray:
    """Unnormalised DFT coefficients of the free part at time t."""
    u = u0_field.values
    if abs(u.mean()) > 1e-12 * max(1.0, float(np.abs(u).max())):
        raise ValueError("compute_u0 expects a mean-free initial field")
    xigrid = xigrid or XiGrid.covering(u0_field)
    dbeta = path(t) - path(0.0)
    mult, _ = _band_multiplier(u0_field.grid, model, xigrid, dbeta, t, gamma, alpha, convention)
    return _integrate_bands(mult * _spectral_bands(u, xigrid), xigrid)


def compute_u0(u0_field: TorusField, model, path, t: float, gamma: float, alpha: float,
               xigrid: XiGrid | None = None, convention: str = "physical") -> TorusField:
    """Free part: the semigroup from 0 to t applied to the lifted initial datum."""
    c = u0_coefficients(u0_field, model, path, t, gamma, alpha, xigrid, convention)
    return TorusField(u0_field.grid, np.fft.ifftn(c).real)


def compute_u1(trajectory, model, path, gamma: float, alpha: float,
               xigrid: XiGrid | None = None, convention: str = "physical") -> list:
    """Forced part at every recorded time, by the trapezoid rule over snapshots.

    The recursion I(t_{j+1}) = S(t_j, t_{j+1}) I(t_j) + h/2 (S(t_j, t_{j+1}) w X_j + w X_{j+1})
    reproduces the composite trapezoid rule for the integrand
    w S(s, t) X(s) with w = gamma(|n|^(2 alpha) + 1), exactly and in O(J) work.
    """
    times = list(trajectory.times)
    snaps = list(trajectory.snapshots)
    if len(snaps) < 2:
        raise ValueError("compute_u1 needs at least two snapshots")
    g = snaps[0].grid
    if xigrid is None:
        bound = max(float(np.abs(s.values).max()) for s in snaps)
        xigrid = XiGrid.symmetric(max(bound, 1e-300) * (1 + 1e-9), g.cells)
    zs = path(np.asarray(times))
    x_prev = _spectral_bands(snaps[0].values, xigrid)
    acc = np.zeros_like(x_prev)
    out = [_to_field(g, acc, xigrid)]
    for j in range(len(times) - 1):
        h = times[j + 1] - times[j]
        mult, omega = _band_multiplier(g, model, xigrid, zs[j + 1] - zs[j], h, gamma, alpha, convention)
        x_next = _spectral_bands(snaps[j + 1].values, xigrid)
        acc = mult * (acc + 0.5 * h * omega * x_prev) + 0.5 * h * omega * x_next
        out.append(_to_field(g, acc, xigrid))
        x_prev = x_next
    return out


@dataclass
class SplitUp:
    times: list
    u0_part: list = field(repr=False)
    u1_part: list = field(repr=False)
    q_part: list = field(repr=False)
    u0_l2: np.ndarray = None
    u1_l2: np.ndarray = None
    q_l1: np.ndarray = None
    additivity_residual: float = 0.0
    u0_zero_mode: float = 0.0

    def rows(self, gamma: float):
        """Rows for the (gamma, t, u0_l2, u1_l2, q_l1) table."""
        return [(gamma, t, a, b, c) for t, a, b, c in zip(self.times, self.u0_l2, self.u1_l2, self.q_l1)]


def split_up(trajectory, model, path, gamma: float, alpha: float, xigrid: XiGrid | None = None,
             convention: str = "physical") -> SplitUp:
    """u0 and u1 from the semigroup, Q as the residual u - u0 - u1."""
    snaps = list(trajectory.snapshots)
    if xigrid is None:
        bound = max(float(np.abs(s.values).max()) for s in snaps)
        xigrid = XiGrid.symmetric(max(bound, 1e-300) * (1 + 1e-9), snaps[0].grid.cells)
    u1 = compute_u1(trajectory, model, path, gamma, alpha, xigrid, convention)
    coeffs = [u0_coefficients(snaps[0], model, path, t, gamma, alpha, xigrid, convention)
              for t in trajectory.times]
    u0 = [TorusField(snaps[0].grid, np.fft.ifftn(c).real) for c in coeffs]
    q = [s - a - b for s, a, b in zip(snaps, u0, u1)]
    resid = max(float(np.abs(a.values + b.values + c.values - s.values).max())
                for a, b, c, s in zip(u0, u1, q, snaps))
    return SplitUp(list(trajectory.times), u0, u1, q,
                   np.array([lp_norm(x, 2) for x in u0]), np.array([lp_norm(x, 2) for x in u1]),
                   np.array([lp_norm(x, 1) for x in q]), resid,
                   max(abs(complex(c.flat[0])) for c in coeffs))


# --- fractional heat multiplier bound ---------------------------------------

def frac_heat_bound_check(alpha: float, beta_exp: float, gamma, t_ladder, n_max: int = 1000):
    """sup over |n| <= n_max of |n|^beta exp(-gamma t (|n|^(2 alpha) + 1)) on a (gamma, t) ladder.

    Returns ``(C, violations, table)`` where C is the smallest constant with
    sup <= C (gamma t)^(-beta/(2 alpha)) on the ladder and ``violations``
    counts ladder points exceeding that bound by more than 1e-9 relative.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if beta_exp < 0:
        raise ValueError("beta must be >= 0")
    n = np.arange(n_max + 1, dtype=float)
    with np.errstate(divide="ignore"):
        logpow = beta_exp * np.log(n) if beta_exp else np.zeros_like(n)
    if beta_exp:
        logpow[0] = -np.inf
    table = []
    for g in np.atleast_1d(gamma):
        for t in np.atleast_1d(t_ladder):
            gt = float(g) * float(t)
            sup = float(np.exp(np.max(logpow - gt * (n ** (2 * alpha) + 1))))
            table.append((float(g), float(t), sup, sup * gt ** (beta_exp / (2 * alpha))))
    c = max(row[3] for row in table)
    viol = sum(1 for row in table if row[2] > c * (row[0] * row[1]) ** (-beta_exp / (2 * alpha)) * (1 + 1e-9))
    return c, viol, table


# --- phi integral estimate --------------------------------------------------

def _gl_panels(lo, hi, panels, order=8):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    h = np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    return (mid[:, None] + 0.5 * h[:, None] * x).ravel(), (0.5 * h[:, None] * w).ravel()


def _as_rows(v, n):
    v = np.asarray(v, dtype=float)
    return v.reshape(n, -1)


def verify_envelope(a, b, iota, xi_window, eps_ladder=None, z_samples=201, resolution=20000):
    """Check |{xi : |b(xi) - z|^2 + a(xi) <= eps}| <= iota(eps) by grid counting.

    ``z`` runs over a box around the range of b and over points of the curve
    b(xi). Returns the worst ratio measure / iota; raises EnvelopeError when
    the envelope fails by more than two grid cells.
    """
    if eps_ladder is None:
        eps_ladder = np.geomspace(1e-6, 1e2, 17)
    lo, hi = xi_window
    h = (hi - lo) / resolution
    xi = lo + (np.arange(resolution) + 0.5) * h
    bx = _as_rows(b(xi), resolution)
    ax = np.asarray(a(xi), dtype=float).reshape(resolution)
    dim = bx.shape[1]
    bmin, bmax = bx.min(axis=0) - 1, bx.max(axis=0) + 1
    axes = [np.linspace(bmin[i], bmax[i], z_samples if dim == 1 else 41) for i in range(dim)]
    box = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, dim)
    curve = bx[np.linspace(0, resolution - 1, z_samples).round().astype(int)]
    worst = 0.0
    for z in np.vstack([box, curve]):
        g = np.sort(np.sum((bx - z) ** 2, axis=1) + ax)
        counts = np.searchsorted(g, eps_ladder, side="right") * h
        for e, m in zip(eps_ladder, counts):
            env = float(iota(e))
            if m > env + 2 * h:
                raise EnvelopeError(f"measure {m:.4g} exceeds iota({e:.3g}) = {env:.4g} at z={z}")
            if env > 0:
                worst = max(worst, m / env)
    return worst


def phi_lemma_check(a, b, f, delta: float, iota, xi_window=(0.0, 1.0), w_window=None,
                    quad_resolution: int = 400, verify: bool = True):
    """Return ``(lhs, rhs)`` with lhs = ||phi||_2^2 by nested Gauss-Legendre
    quadrature and rhs = sqrt(delta pi)/4 int_0^inf e^(-tau/4) iota(tau/delta) dtau ||f||_2^2.

    ``a``, ``b`` and ``f`` are vectorised functions of xi; ``f`` must vanish
    outside ``xi_window``. ``b`` may be vector valued (N' = 1 or 2). The w
    window defaults to the smallest symmetric box whose Gaussian tail is below
    1e-8 of the computed lhs; an explicit window failing that test raises
    WindowError.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if verify:
        lo, hi = xi_window
        pad = max(1.0, hi - lo)
        verify_envelope(a, b, iota, (lo - pad, hi + pad))
    xi, wx = _gl_panels(xi_window[0], xi_window[1], quad_resolution)
    fx = np.asarray(f(xi), dtype=float).reshape(len(xi))
    weight = wx * fx * np.exp(-delta * np.asarray(a(xi), dtype=float).reshape(len(xi)))
    bx = _as_rows(b(xi), len(xi))
    dim = bx.shape[1]
    if dim not in (1, 2):
        raise ValueError("b must take values in R or R^2")
    l1 = float(np.sum(np.abs(fx) * wx))
    f2 = float(np.sum(fx ** 2 * wx))

    def tail(W):
        if dim == 1:
            return math.sqrt(math.pi * delta / 2) * special.erfc(W * math.sqrt(2 / delta)) * l1 ** 2
        return (math.pi * delta / 2) * math.exp(-2 * W * W / delta) * l1 ** 2

    def lhs_on(W):
        bmax = float(np.abs(bx).max()) if bx.size else 0.0
        panels = max(64, int(math.ceil(4 * W * (bmax + 1) + 8 * W / math.sqrt(delta))))
        w1, ww = _gl_panels(-W, W, panels)
        if dim == 1:
            pts, wts = w1[:, None], ww
        else:
            P, Q = np.meshgrid(w1, w1, indexing="ij")
            pts = np.stack([P.ravel(), Q.ravel()], -1)
            wts = np.outer(ww, ww).ravel()
        total = 0.0
        for s in range(0, len(pts), 512):
            p = pts[s:s + 512]
            inner = np.exp(1j * (p @ bx.T)) @ weight
            gauss = np.exp(-np.sum(p ** 2, axis=1) / delta)
            total += float(np.sum(wts[s:s + 512] * (gauss * np.abs(inner)) ** 2))
        return total

    if w_window is not None:
        W = float(w_window)
        lhs = lhs_on(W)
        if lhs > 0 and tail(W) > 1e-8 * lhs:
            raise WindowError(f"Gaussian tail {tail(W):.3g} beyond |w| = {W} exceeds 1e-8 of lhs")
    else:
        W = math.sqrt(delta)
        lhs = lhs_on(W)
        while lhs > 0 and tail(W) > 1e-8 * lhs:
            W *= 1.5
            lhs = lhs_on(W)
    integral, _ = integrate.quad(lambda tau: math.exp(-tau / 4) * iota(tau / delta), 0, np.inf, limit=200)
    rhs = math.sqrt(delta * math.pi) / 4 * integral * f2
    return lhs, rhs
