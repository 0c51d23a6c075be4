import numpy as np
import pytest

from spdelab.kinetic import (XiGrid, chi, dissipation_mass, entropy_balance, eps_gradient_mass,
                             lift, lift_values, mollification_error, reconstruct)
from spdelab.model import make_burgers, make_heat, make_porous_medium, regularize
from spdelab.torus import TorusField, TorusGrid


def test_chi_branches():
    assert chi(2, 1) == 1
    assert chi(-1.5, -1) == -1
    assert chi(1, 2) == 0
    assert chi(-1, 1) == 0
    assert chi(0, 0) == 0
    assert chi(1, 0) == 1 and chi(-1, 0) == -1


def test_xigrid_validation():
    with pytest.raises(ValueError):
        XiGrid(0.0, 1.0, 4)
    with pytest.raises(ValueError):
        XiGrid(-1.0, 2.0, 4)
    g = XiGrid(-1.0, 3.0, 8)
    assert g.n_neg == 2 and g.spacing == 0.5
    assert 0.0 in g.edges


def test_lift_reconstruct_examples():
    grid = TorusGrid(1, 32)
    xg = XiGrid.symmetric(2.0, 16)
    zero = lift(TorusField.constant(grid, 0.0), xg)
    assert np.all(zero.values == 0)
    full = lift(TorusField.constant(grid, 2.0), xg)
    assert np.all(full.values[8:] == 1) and np.all(full.values[:8] == 0)
    assert np.allclose(reconstruct(full).values, 2.0)
    rng = np.random.default_rng(0)
    u = TorusField(grid, rng.uniform(-2, 2, 32))
    assert np.abs(reconstruct(lift(u, xg)).values - u.values).max() < 1e-12


def test_lift_rejects_out_of_window():
    with pytest.raises(ValueError):
        lift_values(np.array([2.5]), XiGrid.symmetric(2.0, 8))


def test_lift_xi_difference_support():
    xg = XiGrid.symmetric(1.0, 20)
    u = np.array([0.37, -0.61, 0.0])
    d = np.diff(np.concatenate([np.zeros((1, 3)), lift_values(u, xg), np.zeros((1, 3))]), axis=0)
    e = xg.edges
    for k, v in enumerate(u):
        nz = np.flatnonzero(np.abs(d[:, k]) > 1e-14)
        allowed = {xg.n_neg}
        cell = int(np.floor((v - e[0]) / xg.spacing))
        allowed |= {cell, cell + 1}
        assert set(nz) <= allowed


def test_dissipation_mass_examples():
    grid = TorusGrid(1, 256)
    assert dissipation_mass(TorusField.constant(grid, 0.4), make_porous_medium(2.0)) == 0.0
    s = TorusField.from_function(grid, lambda x: np.sin(2 * np.pi * x))
    assert dissipation_mass(s, make_burgers()) == 0.0
    assert dissipation_mass(s, make_heat(1.0)) == pytest.approx(2 * np.pi ** 2, rel=1e-2)
    assert dissipation_mass(s + 3.0, make_heat(1.0)) == pytest.approx(dissipation_mass(s, make_heat(1.0)), rel=1e-12)


def test_eps_gradient_mass_uses_only_eps_part():
    grid = TorusGrid(1, 256)
    s = TorusField.from_function(grid, lambda x: np.sin(2 * np.pi * x))
    r = regularize(make_burgers(), 0.01)
    assert dissipation_mass(s, r) == 0.0
    assert eps_gradient_mass(s, 0.01) == pytest.approx(0.01 * 2 * np.pi ** 2, rel=1e-2)


def test_entropy_balance_examples():
    grid = TorusGrid(1, 64)
    u = TorusField.from_function(grid, lambda x: np.cos(2 * np.pi * x))
    b = entropy_balance(u, u, 0.0)
    assert b.residual == 0.0
    half = TorusField(grid, 0.5 * u.values)
    q = (0.5 - 0.125) / 2
    b = entropy_balance(u, half, q)
    assert b.weighted_q_mass == pytest.approx(2 * q)
    assert abs(b.residual) < 1e-3
    with pytest.raises(ValueError):
        entropy_balance(u, u, -1.0)


def test_mollification_examples():
    grid = TorusGrid(1, 256)
    assert mollification_error(TorusField.constant(grid, 0.7), make_burgers(), 0.3, 0.1).lhs == pytest.approx(0.0, abs=1e-12)
    step = TorusField.from_function(grid, lambda x: np.where(x < 0.5, 1.0, 0.0))
    ratios = []
    for eps in (0.2, 0.1, 0.05):
        me = mollification_error(step, make_burgers(), 0.0, eps)
        assert me.lhs <= me.bound
        ratios.append(me.lhs / eps)
    assert max(ratios) / min(ratios) < 1.1
    me = mollification_error(step, make_burgers(), 0.05, 0.1)
    assert me.shift_lhs <= me.shift_bound + 1e-12
    assert me.shift_bound == pytest.approx(0.1)
    with pytest.raises(ValueError):
        mollification_error(step, make_burgers(), 0.0, 1e-3)
