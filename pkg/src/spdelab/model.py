"""Flux/diffusion models, vanishing-viscosity regularisation and the
genuine-nonlinearity (theta) estimator.

All model callables are vectorised over the velocity variable ``xi``: for an
input array of shape ``S`` the flux and its derivative return ``S + (N,)``,
matrix-valued quantities return ``S + (N, N)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline


class DegenerateFluxError(ValueError):
    """The sublevel measure does not shrink with eps: genuine nonlinearity fails."""


class ThetaWindowError(ValueError):
    """Every sublevel measure was zero: the xi window misses the support."""


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class _Antiderivative:
    """Tabulated primitive ``G(xi) = int_0^xi g`` on ``[-reach, reach]``.

    Gauss-Legendre on every grid interval, cubic Hermite interpolation in
    between (the integrand supplies the derivative at the nodes).
    """

    def __init__(self, g, reach: float = 16.0, intervals: int = 8192):
        self.reach = float(reach)
        x = np.linspace(-reach, reach, 2 * intervals + 1)
        h = x[1] - x[0]
        mid = 0.5 * (x[:-1] + x[1:])
        nodes = mid[:, None] + 0.5 * h * _GL_NODES[None, :]
        gv = np.asarray(g(nodes))
        comp = gv.shape[2:]
        pieces = 0.5 * h * np.tensordot(_GL_WEIGHTS, np.moveaxis(gv, 1, 0), axes=1)
        pieces = pieces.reshape(len(mid), -1)
        cum = np.vstack([np.zeros((1, pieces.shape[1])), np.cumsum(pieces, axis=0)])
        cum -= cum[intervals]
        dydx = np.asarray(g(x)).reshape(len(x), -1)
        self._comp = comp
        self._spline = CubicHermiteSpline(x, cum, dydx, axis=0, extrapolate=False)

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.size and np.max(np.abs(xi)) > self.reach:
            raise ValueError(f"xi outside tabulated range +-{self.reach}")
        out = self._spline(xi.ravel())
        return out.reshape(xi.shape + self._comp)


class FluxModel:
    """Spatially homogeneous flux F, speed f = F', diffusion matrix A(xi).

    Closed forms for the primitives (``sigma``, ``beta``, ``bprim`` and the
    Engquist-Osher split primitives ``eo``) are used when given, otherwise they
    are tabulated on ``[-reach, reach]`` at first use.
    """

    def __init__(self, dim, flux, speed, diffusion=None, *, name="custom",
                 growth=(0.0, 0.0), sigma=None, beta=None, bprim=None, eo=None,
                 diagonal=None, strict=True, reach=16.0):
        self.dim = int(dim)
        self.name = name
        self._flux = flux
        self._speed = speed
        self._diffusion = diffusion
        self.growth = tuple(float(p) for p in growth)
        self._sigma = sigma
        self._beta = beta
        self._bprim = bprim
        self._eo = eo
        self.reach = float(reach)
        self._tables = {}
        if diagonal is None:
            diagonal = diffusion is None or self._looks_diagonal()
        self.diagonal = bool(diagonal)
        self.strict = strict
        if any(p <= -1 for p in self.growth):
            raise ValueError("growth exponents must lie in (-1, inf)")
        if strict:
            self.check()

    # --- pointwise coefficients -------------------------------------------
    def F(self, xi):
        return np.asarray(self._flux(np.asarray(xi, dtype=float)), dtype=float)

    def f(self, xi):
        return np.asarray(self._speed(np.asarray(xi, dtype=float)), dtype=float)

    def A(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self._diffusion is None:
            return np.zeros(xi.shape + (self.dim, self.dim))
        return np.asarray(self._diffusion(xi), dtype=float)

    @property
    def has_diffusion(self) -> bool:
        return self._diffusion is not None

    def sigma(self, xi):
        """Symmetric square root of A(xi)."""
        if self._sigma is not None:
            return np.asarray(self._sigma(np.asarray(xi, dtype=float)), dtype=float)
        a = self.A(xi)
        if self.diagonal:
            d = np.sqrt(np.clip(np.diagonal(a, axis1=-2, axis2=-1), 0.0, None))
            out = np.zeros_like(a)
            idx = np.arange(self.dim)
            out[..., idx, idx] = d
            return out
        w, v = np.linalg.eigh(a)
        w = np.sqrt(np.clip(w, 0.0, None))
        return np.einsum("...ik,...k,...jk->...ij", v, w, v)

    def _table(self, key, g):
        if key not in self._tables:
            self._tables[key] = _Antiderivative(g, self.reach)
        return self._tables[key]

    def beta(self, xi):
        """Primitives beta_ik with beta_ik' = sigma_ik and beta_ik(0) = 0."""
        if self._beta is not None:
            return np.asarray(self._beta(np.asarray(xi, dtype=float)), dtype=float)
        if self._diffusion is None:
            xi = np.asarray(xi, dtype=float)
            return np.zeros(xi.shape + (self.dim, self.dim))
        return self._table("beta", self.sigma)(xi)

    def bprim(self, xi):
        """Primitives B_ij with B_ij' = a_ij and B_ij(0) = 0."""
        if self._bprim is not None:
            return np.asarray(self._bprim(np.asarray(xi, dtype=float)), dtype=float)
        if self._diffusion is None:
            xi = np.asarray(xi, dtype=float)
            return np.zeros(xi.shape + (self.dim, self.dim))
        return self._table("bprim", self.A)(xi)

    def eo_primitives(self, xi):
        """``(int_0^xi max(f,0), int_0^xi min(f,0))``, each of shape ``S + (N,)``."""
        if self._eo is not None:
            return self._eo(np.asarray(xi, dtype=float))
        plus = self._table("eo+", lambda s: np.maximum(self.f(s), 0.0))
        minus = self._table("eo-", lambda s: np.minimum(self.f(s), 0.0))
        return plus(xi), minus(xi)

    # --- bounds over a range of states ------------------------------------
    def _sample(self, lo, hi, n=257):
        return np.linspace(lo, hi, n)

    def max_speed(self, lo, hi) -> np.ndarray:
        """Per-axis max |f^i| over states in [lo, hi] (sampled)."""
        return np.abs(self.f(self._sample(lo, hi))).max(axis=0)

    def max_diffusion(self, lo, hi) -> float:
        if self._diffusion is None:
            return 0.0
        a = self.A(self._sample(lo, hi))
        if self.diagonal:
            return float(np.diagonal(a, axis1=-2, axis2=-1).max())
        return float(np.linalg.eigvalsh(a).max())

    @property
    def p0(self) -> float:
        return max(0.0, *self.growth)

    # --- validation --------------------------------------------------------
    def _looks_diagonal(self) -> bool:
        a = self.A(np.linspace(-3, 3, 61))
        off = a - a * np.eye(self.dim)
        return bool(np.all(off == 0))

    def check(self, samples: int = 1000, window: float = 4.0):
        f0 = self.f(np.zeros(1))
        if np.max(np.abs(f0)) > 1e-12:
            raise ValueError(f"model {self.name}: F'(0) must vanish, got {f0.ravel()}")
        xi = np.linspace(-window, window, samples)
        a = self.A(xi)
        if not np.allclose(a, np.swapaxes(a, -1, -2), atol=1e-12):
            raise ValueError(f"model {self.name}: A(xi) not symmetric")
        if self.has_diffusion and np.linalg.eigvalsh(a).min() < -1e-12:
            raise ValueError(f"model {self.name}: A(xi) not positive semidefinite")
        return True

    def __repr__(self):
        return f"FluxModel(name={self.name!r}, dim={self.dim})"


def _per_axis(fn, dim):
    return lambda xi: np.repeat(fn(xi)[..., None], dim, axis=-1)


def _scalar_matrix(fn, dim):
    eye = np.eye(dim)
    return lambda xi: fn(xi)[..., None, None] * eye


def make_power_flux(exponents, dim=None) -> FluxModel:
    """F^i(xi) = |xi|^q_i / q_i with q_i > 1 (q_i = 2 is Burgers), A = 0."""
    q = np.atleast_1d(np.asarray(exponents, dtype=float))
    if dim is None:
        dim = len(q)
    if len(q) == 1:
        q = np.repeat(q, dim)
    if len(q) != dim or np.any(q <= 1):
        raise ValueError("need one exponent q > 1 per axis")

    def flux(xi):
        return np.abs(xi)[..., None] ** q / q

    def speed(xi):
        a = np.abs(xi)[..., None]
        return np.sign(xi)[..., None] * a ** (q - 1)

    def eo(xi):
        return (np.maximum(xi, 0.0)[..., None] ** q / q,
                np.maximum(-xi, 0.0)[..., None] ** q / q)

    growth = tuple(q - 2) if dim == 2 else (q[0] - 2, 0.0)
    return FluxModel(dim, flux, speed, name="power", growth=growth, eo=eo)


def make_burgers(dim: int = 1) -> FluxModel:
    """F^i(u) = u^2 / 2 on every axis, no diffusion."""
    m = make_power_flux([2.0] * dim, dim)
    m.name = "burgers"
    return m


def make_linear_flux(c, dim: int = 1) -> FluxModel:
    """F^i(u) = c_i u. Violates F'(0) = 0, so it is built unchecked; it is the
    textbook degenerate case for the theta estimator."""
    c = np.broadcast_to(np.asarray(c, dtype=float), (dim,)).copy()

    def eo(xi):
        xi = np.asarray(xi)[..., None]
        return np.maximum(c, 0.0) * xi, np.minimum(c, 0.0) * xi

    return FluxModel(dim, lambda xi: np.asarray(xi)[..., None] * c,
                     lambda xi: np.ones(np.shape(xi))[..., None] * c,
                     name="linear", eo=eo, strict=False)


def make_porous_medium(m: float, flux=None, dim: int = 1) -> FluxModel:
    """Diffusion A(xi) = m |xi|^(m-1) I, i.e. Delta u^[m]; optional flux model."""
    if m <= 1:
        raise ValueError(f"porous-medium exponent must exceed 1, got {m}")
    if isinstance(flux, str):
        flux = {"burgers": make_burgers}[flux](dim)
    if flux is not None and flux.dim != dim:
        raise ValueError("flux model dimension mismatch")
    rm = math.sqrt(m)
    kb = 2.0 * rm / (m + 1.0)

    diff = _scalar_matrix(lambda xi: m * np.abs(xi) ** (m - 1), dim)
    sig = _scalar_matrix(lambda xi: rm * np.abs(xi) ** ((m - 1) / 2), dim)
    beta = _scalar_matrix(lambda xi: kb * np.sign(xi) * np.abs(xi) ** ((m + 1) / 2), dim)
    bprim = _scalar_matrix(lambda xi: np.sign(xi) * np.abs(xi) ** m, dim)

    if flux is None:
        zero = lambda xi: np.zeros(np.shape(xi) + (dim,))
        F, f = zero, zero
        eo = lambda xi: (zero(xi), zero(xi))
        fg = (0.0, 0.0)
        name = f"porous(m={m:g})"
    else:
        F, f, eo, fg = flux.F, flux.f, flux.eo_primitives, flux.growth
        name = f"porous(m={m:g})+{flux.name}"
    growth = (max(fg[0], m - 2), max(fg[1], m - 2) if dim == 2 else fg[1])
    return FluxModel(dim, F, f, diff, name=name, growth=growth, sigma=sig,
                     beta=beta, bprim=bprim, eo=eo, diagonal=True)


def make_heat(kappa: float = 1.0, dim: int = 1) -> FluxModel:
    """No flux, constant diffusion kappa I."""
    rk = math.sqrt(kappa)
    zero = lambda xi: np.zeros(np.shape(xi) + (dim,))
    one = lambda xi: np.ones(np.shape(xi))
    return FluxModel(
        dim, zero, zero, _scalar_matrix(lambda xi: kappa * one(xi), dim),
        name=f"heat({kappa:g})", sigma=_scalar_matrix(lambda xi: rk * one(xi), dim),
        beta=_scalar_matrix(lambda xi: rk * np.asarray(xi, dtype=float), dim),
        bprim=_scalar_matrix(lambda xi: kappa * np.asarray(xi, dtype=float), dim),
        eo=lambda xi: (zero(xi), zero(xi)), diagonal=True)


# --- regularisation --------------------------------------------------------

def bump(s):
    """Unnormalised C^inf bump supported in [-1, 1]."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


_MOLL_NODES, _MOLL_W = np.polynomial.legendre.leggauss(48)
_MOLL_W = _MOLL_W * bump(_MOLL_NODES)
_MOLL_W = _MOLL_W / _MOLL_W.sum()


class RegularizedModel(FluxModel):
    """Base model with A replaced by ``A * phi_width + eps I``.

    ``dissipative`` is the model carrying only the mollified part ``A * phi``;
    its beta primitives define the parabolic dissipation measure, while the
    ``eps I`` part feeds the entropy-defect mass ``eps |Du|^2``.
    """

    def __init__(self, base: FluxModel, eps: float, width: float = 0.0):
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        if width < 0:
            raise ValueError("mollifier width must be >= 0")
        self.base = base
        self.eps = float(eps)
        self.width = float(width)
        dim = base.dim
        eye = np.eye(dim)

        if not base.has_diffusion:
            moll = None
        elif width == 0.0:
            moll = base
        else:
            nodes = width * _MOLL_NODES

            def a_moll(xi):
                xi = np.asarray(xi, dtype=float)
                vals = base.A(xi[..., None] - nodes)
                return np.tensordot(vals, _MOLL_W, axes=([xi.ndim], [0]))

            moll = FluxModel(dim, base.F, base.f, a_moll, name=f"{base.name}*phi",
                             growth=base.growth, eo=base.eo_primitives,
                             diagonal=base.diagonal, strict=False, reach=base.reach)
        if moll is None:
            moll = FluxModel(dim, base.F, base.f, None, name=base.name, growth=base.growth,
                             eo=base.eo_primitives, strict=False, reach=base.reach)
        self.dissipative = moll

        def a_eps(xi):
            return moll.A(xi) + self.eps * eye

        def b_eps(xi):
            xi = np.asarray(xi, dtype=float)
            return moll.bprim(xi) + self.eps * xi[..., None, None] * eye

        super().__init__(dim, base.F, base.f, a_eps, name=f"{base.name}[eps={eps:g}]",
                         growth=base.growth, bprim=b_eps, eo=base.eo_primitives,
                         diagonal=base.diagonal, strict=False, reach=base.reach)


def regularize(base: FluxModel, eps: float, mollifier_width: float = 0.0) -> RegularizedModel:
    return RegularizedModel(base, eps, mollifier_width)


# --- genuine nonlinearity --------------------------------------------------

def _xi_cells(xi_window, resolution):
    lo, hi = map(float, xi_window)
    if not hi > lo:
        raise ValueError("empty xi window")
    if resolution < 1:
        raise ValueError("resolution must be positive")
    h = (hi - lo) / resolution
    return lo + (np.arange(resolution) + 0.5) * h, h


def _sublevel_function(model, sigma_dir, xi):
    s = np.asarray(sigma_dir, dtype=float)
    fs = model.f(xi) * s
    quad = np.einsum("...ij,i,j->...", model.A(xi), s, s)
    return fs, quad


def sublevel_measure(model, sigma_dir, z, eps, xi_window, resolution=4000) -> float:
    """|{xi in window : |f(xi) sigma - z|^2 + sigma A(xi) sigma <= eps}| by counting.

    ``f(xi) sigma`` is the componentwise product.
    """
    s = np.atleast_1d(np.asarray(sigma_dir, dtype=float))
    if abs(np.linalg.norm(s) - 1) > 1e-10:
        raise ValueError("sigma_dir must be a unit vector")
    xi, h = _xi_cells(xi_window, resolution)
    fs, quad = _sublevel_function(model, s, xi)
    g = np.sum((fs - np.atleast_1d(z)) ** 2, axis=-1) + quad
    return float(np.count_nonzero(g <= eps) * h)


@dataclass
class ThetaEstimate:
    theta_hat: float
    constant_hat: float
    fit_r2: float
    eps_ladder: list
    measures: list = field(default_factory=list)
    raw_theta: float = float("nan")
    clamped: bool = False
    z_box: tuple = ()


def _unit_directions(dim, n):
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    ang = np.linspace(0, 2 * np.pi, max(n, 4), endpoint=False)
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def estimate_theta(model, sigma_samples=16, z_samples=101, eps_ladder=None,
                   xi_window=(-2.0, 2.0), resolution=4000) -> ThetaEstimate:
    """Fit the exponent theta of the worst-case sublevel measure ~ C eps^(theta/2).

    The worst case runs over sampled unit directions and over z taken from the
    box [-2 max|f|, 2 max|f|]^N together with the points f(xi) sigma of the
    curve itself (where the sublevel set is largest).
    """
    if eps_ladder is None:
        eps_ladder = np.geomspace(1e-4, 1e-1, 7)
    eps_ladder = np.sort(np.asarray(eps_ladder, dtype=float))
    if len(eps_ladder) < 5:
        raise ValueError("theta fit needs at least 5 ladder points")
    if eps_ladder[-1] / eps_ladder[0] < 100:
        raise ValueError("eps ladder must span at least two decades")
    xi, h = _xi_cells(xi_window, resolution)
    width = float(xi_window[1] - xi_window[0])
    fmax = float(np.abs(model.f(xi)).max())
    zb = 2.0 * fmax
    axis = np.linspace(-zb, zb, z_samples) if zb > 0 else np.zeros(1)
    box = np.stack(np.meshgrid(*([axis] * model.dim), indexing="ij"), -1).reshape(-1, model.dim)

    worst = np.zeros(len(eps_ladder))
    for s in _unit_directions(model.dim, sigma_samples):
        fs, quad = _sublevel_function(model, s, xi)
        curve = fs[np.linspace(0, len(xi) - 1, z_samples).round().astype(int)]
        zs = np.vstack([box, np.clip(curve, -zb, zb)])
        g = np.sum((fs[None, :, :] - zs[:, None, :]) ** 2, axis=-1) + quad[None, :]
        gmin = np.sort(g, axis=1)
        counts = np.stack([np.searchsorted(row, eps_ladder, side="right") for row in gmin])
        worst = np.maximum(worst, counts.max(axis=0) * h)

    if not np.any(worst > 0):
        raise ThetaWindowError("all sublevel measures vanish: xi window misses the support")
    if worst[0] >= 0.5 * width:
        raise DegenerateFluxError(
            f"sublevel measure saturates the window ({worst[0]:.3g} of {width:.3g}) at eps={eps_ladder[0]:g}")
    pos = worst > 0
    if pos.sum() < 5:
        raise ThetaWindowError("fewer than 5 ladder points with positive measure")
    x, y = np.log(eps_ladder[pos]), np.log(worst[pos])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 0.0
    raw = 2.0 * slope
    if raw <= 0.05:
        raise DegenerateFluxError(f"sublevel measure does not decay with eps (slope {slope:.3g})")
    return ThetaEstimate(theta_hat=float(min(raw, 1.0)), constant_hat=float(np.exp(icpt)),
                         fit_r2=float(r2), eps_ladder=eps_ladder.tolist(),
                         measures=worst.tolist(), raw_theta=float(raw), clamped=bool(raw > 1.0),
                         z_box=(-zb, zb))
