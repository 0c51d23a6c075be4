import numpy as np
import pytest

from spdelab.torus import (TorusField, TorusGrid, bv_seminorm, forward_fft, frac_laplacian,
                           inverse_fft, lp_norm, spectral_shift, wlam_norm)


def cos_field(m, k=1, dim=1):
    return TorusField.from_function(TorusGrid(dim, m), lambda *xs: np.cos(2 * np.pi * k * xs[0]))


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid(1, 48)
    with pytest.raises(ValueError):
        TorusGrid(3, 16)
    with pytest.raises(ValueError):
        TorusGrid(1, 2)
    g = TorusGrid(2, 8)
    assert g.size == 64 and g.spacing == 0.125
    assert np.allclose(g.centers()[0][:, 0], (np.arange(8) + 0.5) / 8)


def test_field_rejects_nonfinite():
    with pytest.raises(ValueError):
        TorusField(TorusGrid(1, 8), [np.nan] + [0.0] * 7)


def test_constant_field_spectrum():
    spec = forward_fft(TorusField.constant(TorusGrid(1, 16), 3.0))
    assert spec.coeff(0) == pytest.approx(3.0)
    assert np.abs(spec.coeffs[1:]).max() < 1e-14


def test_cosine_spectrum_matches_direct_sum():
    spec = forward_fft(cos_field(64))
    assert spec.coeff(1) == pytest.approx(0.5, abs=1e-12)
    assert spec.coeff(-1) == pytest.approx(0.5, abs=1e-12)
    others = np.delete(np.abs(spec.coeffs), [1, 63])
    assert others.max() < 1e-12


def test_roundtrip_and_parseval():
    rng = np.random.default_rng(3)
    for dim, m in ((1, 64), (2, 16)):
        f = TorusField(TorusGrid(dim, m), rng.standard_normal((m,) * dim))
        spec = forward_fft(f)
        back = inverse_fft(spec)
        assert np.abs(back.values - f.values).max() < 1e-12
        assert lp_norm(f, 2) ** 2 == pytest.approx(np.sum(np.abs(spec.coeffs) ** 2), rel=1e-10)
        assert spec.coeff((0,) * dim).real == pytest.approx(f.mean(), abs=1e-14)


def test_hermitian_symmetry():
    rng = np.random.default_rng(4)
    f = TorusField(TorusGrid(1, 32), rng.standard_normal(32))
    spec = forward_fft(f)
    for n in range(1, 16):
        assert spec.coeff(-n) == pytest.approx(np.conj(spec.coeff(n)), abs=1e-14)


def test_spectral_shift_oracles():
    f = cos_field(64)
    assert np.abs(spectral_shift(f, 0.0).values - f.values).max() < 1e-14
    s = spectral_shift(f, 0.25)
    expect = np.sin(2 * np.pi * f.grid.centers()[0])
    assert np.abs(s.values - expect).max() < 1e-10
    rng = np.random.default_rng(5)
    r = TorusField(TorusGrid(1, 32), rng.standard_normal(32))
    one = spectral_shift(r, 1 / 32)
    assert np.abs(one.values - np.roll(r.values, 1)).max() < 1e-12


def test_spectral_shift_composes_and_conserves_mass():
    # the Nyquist row and column carry no translation phase, so composition is
    # exact only for fields without Nyquist content
    rng = np.random.default_rng(6)
    c = np.fft.fftn(rng.standard_normal((16, 16)))
    c[8, :] = 0.0
    c[:, 8] = 0.0
    r = TorusField(TorusGrid(2, 16), np.fft.ifftn(c).real)
    a, b = np.array([0.13, -0.4]), np.array([0.31, 0.07])
    ab = spectral_shift(spectral_shift(r, a), b)
    assert np.abs(ab.values - spectral_shift(r, a + b).values).max() < 1e-10
    assert spectral_shift(r, a).mean() == pytest.approx(r.mean(), abs=1e-15)


def test_norm_oracles():
    g = TorusGrid(1, 256)
    assert lp_norm(TorusField.constant(g, 2.0), 1) == pytest.approx(2.0)
    assert lp_norm(cos_field(256), 1) == pytest.approx(2 / np.pi, abs=1e-3)
    assert lp_norm(cos_field(256), np.inf) == pytest.approx(np.cos(np.pi / 256))
    step = TorusField.from_function(g, lambda x: np.where(x < 0.5, 1.0, 0.0))
    assert bv_seminorm(step) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        lp_norm(step, 0.5)


def test_wlam_oracles():
    g = TorusGrid(1, 256)
    assert wlam_norm(TorusField.constant(g, 1.7), 0.5, 1) == pytest.approx(0.0, abs=1e-14)
    for lam in (0.0, 0.3, 1.0):
        assert wlam_norm(cos_field(256), lam, 1) == pytest.approx(lp_norm(cos_field(256), 1), rel=1e-10)
    assert wlam_norm(cos_field(256, 2), 1.0, 2) == pytest.approx(np.sqrt(2), rel=1e-10)


def test_wlam_zero_is_centred_lp():
    rng = np.random.default_rng(7)
    f = TorusField(TorusGrid(1, 64), 1.0 + rng.standard_normal(64))
    assert wlam_norm(f, 0.0, 1) == pytest.approx(lp_norm(f - f.mean(), 1), rel=1e-10)


def test_frac_laplacian_oracles():
    g = TorusGrid(1, 64)
    assert np.abs(frac_laplacian(TorusField.constant(g, 2.0), 0.5).values).max() < 1e-14
    c1 = cos_field(64)
    assert np.abs(frac_laplacian(c1, 0.7).values - c1.values).max() < 1e-12
    c2 = cos_field(64, 2)
    assert np.abs(frac_laplacian(c2, 0.5).values - 2 * c2.values).max() < 1e-12
    assert np.abs(frac_laplacian(c2, 1.0).values - 4 * c2.values).max() < 1e-12
    with pytest.raises(ValueError):
        frac_laplacian(c2, 0.0)
