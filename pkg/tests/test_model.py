import numpy as np
import pytest
from scipy import integrate

from spdelab.model import (DegenerateFluxError, FluxModel, ThetaWindowError, estimate_theta,
                           make_burgers, make_heat, make_linear_flux, make_porous_medium,
                           make_power_flux, regularize, sublevel_measure)

XI = np.linspace(-3, 3, 1001)


def test_burgers_coefficients():
    m = make_burgers(2)
    assert np.allclose(m.f(XI), np.stack([XI, XI], -1))
    assert np.allclose(m.F(XI), 0.5 * np.stack([XI, XI], -1) ** 2)
    for fn in (m.A, m.sigma, m.beta, m.bprim):
        assert np.all(fn(XI) == 0)
    assert not m.has_diffusion


def test_porous_m2_closed_forms():
    m = make_porous_medium(2.0)
    assert np.allclose(m.A(XI)[:, 0, 0], 2 * np.abs(XI))
    assert np.allclose(m.sigma(XI)[:, 0, 0], np.sqrt(2 * np.abs(XI)))
    expect = 2 * np.sqrt(2) / 3 * np.abs(XI) ** 1.5 * np.sign(XI)
    assert np.allclose(m.beta(XI)[:, 0, 0], expect)
    q, _ = integrate.quad(lambda s: np.sqrt(2 * abs(s)), 0, 1.3)
    assert m.beta(1.3)[0, 0] == pytest.approx(q, rel=1e-8)
    assert m.growth[0] == 0.0


def test_porous_rejects_small_exponent():
    with pytest.raises(ValueError):
        make_porous_medium(1.0)


def test_sigma_squares_to_a():
    rng = np.random.default_rng(0)
    xi = rng.uniform(-3, 3, 1000)
    for model in (make_porous_medium(3.0, dim=2), make_heat(0.7, 2), regularize(make_burgers(2), 0.1, 0.2)):
        s = model.sigma(xi)
        assert np.abs(s @ np.swapaxes(s, -1, -2) - model.A(xi)).max() < 1e-10


def test_nondiagonal_sigma_and_tabulated_primitives():
    def diff(xi):
        xi = np.asarray(xi)
        a = np.empty(xi.shape + (2, 2))
        a[..., 0, 0] = 2 + xi ** 2
        a[..., 1, 1] = 1 + xi ** 2
        a[..., 0, 1] = a[..., 1, 0] = 0.5
        return a

    zero = lambda xi: np.zeros(np.shape(xi) + (2,))
    m = FluxModel(2, zero, zero, diff, name="mixed")
    assert not m.diagonal
    rng = np.random.default_rng(1)
    xi = rng.uniform(-2, 2, 200)
    s = m.sigma(xi)
    assert np.abs(s @ s.transpose(0, 2, 1) - m.A(xi)).max() < 1e-10
    q, _ = integrate.quad(lambda t: m.sigma(t)[0, 1], 0, 1.1)
    assert m.beta(1.1)[0, 1] == pytest.approx(q, abs=1e-8)
    assert m.bprim(1.1)[0, 0] == pytest.approx(2 * 1.1 + 1.1 ** 3 / 3, abs=1e-8)


def test_model_checks():
    with pytest.raises(ValueError):
        FluxModel(1, lambda x: x[..., None], lambda x: np.ones(np.shape(x) + (1,)))
    m = make_linear_flux(2.0)
    assert m.f(0.0)[0] == 2.0
    with pytest.raises(ValueError):
        make_power_flux([1.0])


def test_regularize_examples():
    r = regularize(make_burgers(), 0.1)
    assert np.allclose(r.A(XI)[:, 0, 0], 0.1)
    with pytest.raises(ValueError):
        regularize(make_burgers(), 0.0)
    pm = make_porous_medium(2.0)
    vals = [regularize(pm, 0.01, w).A(1.0)[0, 0] for w in (0.4, 0.2, 0.1, 0.0)]
    assert vals[-1] == pytest.approx(2.01)
    assert all(abs(a - 2.01) >= abs(b - 2.01) for a, b in zip(vals, vals[1:]))
    eig = np.linalg.eigvalsh(regularize(make_porous_medium(2.0, dim=2), 0.05, 0.1).A(np.linspace(-4, 4, 1000)))
    assert eig.min() >= 0.05 - 1e-12


def test_regularize_orders_in_eps():
    base = make_porous_medium(3.0)
    a1 = regularize(base, 0.01, 0.1).A(XI)
    a2 = regularize(base, 0.02, 0.1).A(XI)
    assert np.all(a2 - a1 >= -1e-15)


def test_sublevel_oracles():
    b = make_burgers()
    assert sublevel_measure(b, [1.0], [0.0], 0.01, (-2, 2)) == pytest.approx(0.2, abs=2e-3)
    p = make_porous_medium(2.0)
    assert sublevel_measure(p, [1.0], [0.0], 0.01, (-2, 2)) == pytest.approx(0.01, abs=2e-3)
    lin = make_linear_flux(1.5)
    assert sublevel_measure(lin, [1.0], [1.5], 1e-3, (-2, 2)) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        sublevel_measure(b, [2.0], [0.0], 0.01, (-2, 2))


def test_theta_estimates():
    est = estimate_theta(make_burgers())
    assert est.theta_hat == pytest.approx(1.0, abs=0.1)
    assert not est.clamped and est.fit_r2 > 0.99
    por = estimate_theta(make_porous_medium(2.0))
    assert por.theta_hat == 1.0 and por.clamped and por.raw_theta > 1.5
    with pytest.raises(DegenerateFluxError):
        estimate_theta(make_linear_flux(1.0))
    with pytest.raises(ThetaWindowError):
        estimate_theta(make_heat(1.0))


def test_theta_in_two_dimensions():
    est = estimate_theta(make_burgers(2), sigma_samples=8, z_samples=21)
    assert 0 < est.theta_hat <= 1
