import math
from types import SimpleNamespace

import numpy as np
import pytest

from spdelab.averaging import (AveragingConfig, EnvelopeError, WindowError, compute_u0,
                               compute_u1, frac_heat_bound_check, phi_lemma_check,
                               semigroup_multiplier, split_up, u0_coefficients, verify_envelope)
from spdelab.kinetic import XiGrid
from spdelab.model import make_burgers, make_linear_flux, make_porous_medium
from spdelab.paths import linear_path, sample_brownian
from spdelab.solvers import SolverConfig, run
from spdelab.torus import TorusField, TorusGrid


def cosine(m=64, amp=1.0):
    return TorusField.from_function(TorusGrid(1, m), lambda x: amp * np.cos(2 * np.pi * x))


def test_multiplier_zero_mode_is_pure_damping():
    m = semigroup_multiplier([0.0], 0.7, make_burgers(), 0.3, 0.5, 2.0, 0.5)
    assert m == pytest.approx(math.exp(-2.0 * 0.5))


def test_multiplier_dt_zero_is_a_phase():
    xi = np.linspace(-2, 2, 9)
    m = semigroup_multiplier(np.array([[3.0]]), xi, make_burgers(), 0.4, 0.0, 1.0, 1.0)
    assert np.allclose(np.abs(m), 1.0)
    assert np.allclose(m[0], np.exp(-2j * np.pi * xi * 0.4 * 3.0))


def test_multiplier_modulus_and_conventions():
    n = np.arange(-8, 9, dtype=float)[:, None]
    xi = np.linspace(-1, 1, 11)
    model = make_porous_medium(2.0, "burgers")
    phys = semigroup_multiplier(n, xi, model, 1.3, 0.01, 0.5, 0.75)
    integer = semigroup_multiplier(n, xi, model, 1.3, 0.01, 0.5, 0.75, convention="integer")
    assert phys.shape == (17, 11)
    assert np.all(np.abs(phys) <= 1.0) and np.all(np.abs(integer) <= 1.0)
    assert np.all(np.abs(phys) <= np.abs(integer) + 1e-15)
    with pytest.raises(ValueError):
        semigroup_multiplier(n, xi, model, 0.0, -1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        semigroup_multiplier(n, xi, model, 0.0, 1.0, 1.0, 1.0, convention="other")


def test_multiplier_two_dimensional_broadcast():
    model = make_burgers(2)
    n = np.array([[1.0, 0.0], [0.0, 2.0]])
    m = semigroup_multiplier(n, np.array([0.5, 1.0]), model, [0.2, -0.1], 0.0, 1.0, 1.0)
    expected = np.exp(-2j * np.pi * np.array([[0.5 * 0.2, 1.0 * 0.2], [0.5 * -0.2, 1.0 * -0.2]]))
    assert np.allclose(m, expected)


def test_compute_u0_closed_form_without_transport():
    u0 = cosine()
    zero = make_linear_flux(0.0)
    gamma, t = 0.7, 0.3
    out = compute_u0(u0, zero, linear_path(1, 1.0, 0.0, 16), t, gamma, 1.0)
    assert np.abs(out.values - math.exp(-2 * gamma * t) * u0.values).max() < 1e-12
    out = compute_u0(u0, zero, linear_path(1, 1.0, 0.0, 16), t, gamma, 0.5)
    assert np.abs(out.values - math.exp(-2 * gamma * t) * u0.values).max() < 1e-12


def test_compute_u0_at_time_zero_and_mean_requirement():
    u0 = TorusField.from_function(TorusGrid(1, 64), lambda x: np.sin(2 * np.pi * x) + 0.3 * np.cos(6 * np.pi * x))
    p = sample_brownian(1, 1.0, 64, seed=3)
    out = compute_u0(u0, make_burgers(), p, 0.0, 1.0, 0.5)
    assert np.abs(out.values - u0.values).max() < 1e-12
    c = u0_coefficients(u0, make_burgers(), p, 0.5, 1.0, 0.5)
    assert c.flat[0] == 0
    with pytest.raises(ValueError):
        compute_u0(u0 + 0.5, make_burgers(), p, 0.1, 1.0, 0.5)


def test_compute_u0_transport_only_shifts_the_linear_flux():
    u0 = cosine(64)
    gamma, t, c = 0.5, 0.2, 0.25
    out = compute_u0(u0, make_linear_flux(c), linear_path(1, 1.0, 1.0, 16), t, gamma, 1.0)
    x = u0.grid.centers()[0]
    expected = math.exp(-2 * gamma * t) * np.cos(2 * np.pi * (x - c * t))
    assert np.abs(out.values - expected).max() < 1e-12


def frozen_trajectory(field, times):
    return SimpleNamespace(times=list(times), snapshots=[field] * len(times))


def test_compute_u1_vanishes_without_damping():
    traj = frozen_trajectory(cosine(), np.linspace(0, 1, 11))
    out = compute_u1(traj, make_linear_flux(0.0), linear_path(1, 1.0, 0.0, 16), 0.0, 1.0)
    assert all(np.abs(f.values).max() == 0 for f in out)


def test_compute_u1_closed_form_for_a_frozen_field():
    gamma = 1.5
    times = np.linspace(0, 1, 401)
    u = cosine()
    out = compute_u1(frozen_trajectory(u, times), make_linear_flux(0.0),
                     linear_path(1, 1.0, 0.0, 16), gamma, 1.0)
    w = 2 * gamma
    for j in (40, 200, 400):
        expected = (1 - math.exp(-w * times[j])) * u.values
        assert np.abs(out[j].values - expected).max() < 1e-4


def test_compute_u1_needs_two_snapshots():
    with pytest.raises(ValueError):
        compute_u1(frozen_trajectory(cosine(), [0.0]), make_burgers(), linear_path(1, 1.0), 1.0, 1.0)


def test_split_up_additivity_and_zero_mode():
    u0 = TorusField.from_function(TorusGrid(1, 64), lambda x: 0.5 * np.sin(2 * np.pi * x))
    p = sample_brownian(1, 0.2, 256, seed=5)
    traj = run(SolverConfig("pathwise", u0.grid, make_burgers(), 0.2, record_every=0.02,
                            xigrid=XiGrid.covering(u0, 32)), p, u0)
    sp = split_up(traj, make_burgers(), p, 1.0, 0.5)
    assert sp.additivity_residual < 1e-12
    assert sp.u0_zero_mode == 0.0
    assert len(sp.rows(1.0)) == len(traj.times)
    assert sp.q_l1[0] < 1e-12 and sp.u1_l2[0] == 0.0
    assert np.all(np.diff(sp.u0_l2) < 0)


def test_split_up_q_vanishes_for_pure_damping_dynamics():
    # u(t) = exp(-t) cos solves the damped equation with gamma (|n|^2 + 1) = 1 when gamma = 1/2,
    # so u1 + u0 should track u up to the trapezoid error
    times = np.linspace(0, 1, 201)
    snaps = [cosine(32, math.exp(-t)) for t in times]
    traj = SimpleNamespace(times=list(times), snapshots=snaps)
    sp = split_up(traj, make_linear_flux(0.0), linear_path(1, 1.0, 0.0, 16), 0.5, 1.0)
    assert sp.additivity_residual < 1e-12
    assert np.abs(sp.u0_l2 - np.exp(-times) / math.sqrt(2)).max() < 1e-12


def test_frac_heat_bound():
    c, viol, table = frac_heat_bound_check(0.5, 1.0, [0.5, 1, 2], np.geomspace(1e-3, 10, 15))
    assert viol == 0 and len(table) == 45
    assert c <= 1.0
    c, viol, _ = frac_heat_bound_check(1.0, 0.0, 1.0, [0.1, 1.0])
    assert viol == 0 and c == pytest.approx(math.exp(-0.1))
    with pytest.raises(ValueError):
        frac_heat_bound_check(1.5, 1.0, 1.0, [1.0])
    with pytest.raises(ValueError):
        frac_heat_bound_check(0.5, -1.0, 1.0, [1.0])


def indicator(xi):
    xi = np.asarray(xi)
    return ((xi >= 0) & (xi <= 1)).astype(float)


def burgers_iota(e):
    return 2 * math.sqrt(e)


def test_phi_check_indicator_under_burgers():
    for delta in (0.1, 1.0, 10.0):
        lhs, rhs = phi_lemma_check(lambda x: np.zeros_like(x), lambda x: x, indicator, delta, burgers_iota)
        assert 0 < lhs <= rhs


def test_phi_check_is_translation_invariant_in_b():
    a = lambda x: np.zeros_like(x)
    l0, r0 = phi_lemma_check(a, lambda x: x, indicator, 1.0, burgers_iota, verify=False)
    l1, r1 = phi_lemma_check(a, lambda x: x + 3.7, indicator, 1.0, burgers_iota, verify=False)
    assert abs(l1 - l0) <= 1e-9 * l0 and r1 == r0


def test_phi_check_vanishing_f():
    lhs, rhs = phi_lemma_check(lambda x: np.zeros_like(x), lambda x: x, lambda x: np.zeros_like(x),
                               1.0, burgers_iota)
    assert lhs == 0.0 and rhs == 0.0


def test_phi_window_and_envelope_errors():
    a = lambda x: np.zeros_like(x)
    with pytest.raises(WindowError):
        phi_lemma_check(a, lambda x: x, indicator, 10.0, burgers_iota, w_window=0.5, verify=False)
    with pytest.raises(EnvelopeError):
        verify_envelope(a, lambda x: np.zeros_like(x), burgers_iota, (0.0, 1.0))
    # the counting grid may exceed the envelope by up to two cells
    assert verify_envelope(a, lambda x: x, burgers_iota, (0.0, 1.0)) <= 1.05
    with pytest.raises(ValueError):
        phi_lemma_check(a, lambda x: x, indicator, 0.0, burgers_iota)


def test_averaging_config():
    cfg = AveragingConfig(alpha=0.75, gamma=1.0, lam=0.5)
    assert cfg.mu2 == pytest.approx(2.5 / 1.5)
    for bad in (dict(alpha=0.0, gamma=1.0), dict(alpha=1.0, gamma=0.0), dict(alpha=1.0, gamma=1.0, lam=-1),
                dict(alpha=1.0, gamma=1.0, theta=1.5), dict(alpha=0.5, gamma=1.0)):
        with pytest.raises(ValueError):
            AveragingConfig(**bad)
