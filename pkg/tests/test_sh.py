import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import sph_harm_y

from mcainterp import sh
from mcainterp.grids import Direction, SphericalGrid, fliege_grid, horizontal_grid, lebedev_grid
from mcainterp.sets import HrtfSet


def oracle_real_sh(n, m, az_deg, el_deg):
    """Real SH without Condon-Shortley phase from scipy's complex harmonics."""
    theta = np.radians(90.0 - np.asarray(el_deg))
    phi = np.radians(np.asarray(az_deg))
    y = sph_harm_y(n, abs(m), theta, phi)
    if m == 0:
        return y.real
    sign = (-1) ** m
    return math.sqrt(2) * sign * (y.real if m > 0 else y.imag)


def random_directions(rng, count):
    az = rng.uniform(0, 360, count)
    el = np.degrees(np.arcsin(rng.uniform(-1, 1, count)))
    return [Direction(a, e) for a, e in zip(az, el)]


def band_limited_set(grid, order, rng, bins=5):
    coeffs = rng.normal(size=(2, sh.num_coeffs(order), bins)) + 1j * rng.normal(
        size=(2, sh.num_coeffs(order), bins))
    return coeffs, HrtfSet(grid, 48000.0, grid.sh_matrix(order) @ coeffs)


class TestBasis:
    def test_y00(self, rng):
        b = sh.sh_basis(0, random_directions(rng, 20))
        assert np.allclose(b.values, 1 / math.sqrt(4 * math.pi), atol=1e-15)
        assert b.values[0, 0] == pytest.approx(0.28209479, abs=1e-8)

    def test_pole_order1(self):
        v = sh.sh_basis(1, [Direction(0, 90)]).values[0]
        assert v[sh.acn(1, -1)] == 0.0 and v[sh.acn(1, 1)] == 0.0

    def test_y20_equator(self):
        v = sh.sh_basis(2, [Direction(0, 0)]).values[0, sh.acn(2, 0)]
        assert v == pytest.approx(-0.5 * math.sqrt(5 / (4 * math.pi)), abs=1e-14)
        assert v == pytest.approx(-0.31539, abs=1e-5)

    @pytest.mark.parametrize("el", [90, -90])
    def test_pole_non_zonal_vanish(self, el):
        v = sh.sh_basis(29, [Direction(37, el)]).values[0]
        for n in range(30):
            for m in range(-n, n + 1):
                if m:
                    assert v[sh.acn(n, m)] == 0.0

    def test_acn_layout(self):
        assert [sh.acn(n, m) for n in range(3) for m in range(-n, n + 1)] == list(range(9))

    def test_matches_scipy_oracle(self, rng):
        dirs = random_directions(rng, 50)
        az = [d.azimuth_deg for d in dirs]
        el = [d.elevation_deg for d in dirs]
        values = sh.sh_basis(12, dirs).values
        for n in range(13):
            for m in range(-n, n + 1):
                assert np.allclose(values[:, sh.acn(n, m)], oracle_real_sh(n, m, az, el),
                                   atol=1e-12), (n, m)

    def test_high_order_finite(self):
        b = sh.real_sh_matrix(120, np.array([0.3]), np.array([1.2]))
        assert np.all(np.isfinite(b))

    def test_negative_order(self):
        with pytest.raises(sh.ShError):
            sh.real_sh_matrix(-1, np.zeros(1), np.zeros(1))


class TestTransform:
    def test_constant(self):
        g = lebedev_grid(3)
        c = sh.sh_transform(HrtfSet(g, 48000.0, np.ones((2, 26, 3))), 3)
        expected = np.zeros(16)
        expected[0] = math.sqrt(4 * math.pi)
        assert np.allclose(c.data[0, :, 0], expected, atol=1e-12)

    @pytest.mark.parametrize("mode", [sh.QUADRATURE, sh.LEAST_SQUARES])
    def test_single_harmonic(self, mode):
        g = lebedev_grid(3)
        y21 = g.sh_matrix(3)[:, sh.acn(2, 1)]
        c = sh.forward(y21[:, None], g, 3, mode)[:, 0]
        expected = np.zeros(16)
        expected[sh.acn(2, 1)] = 1
        assert np.abs(c - expected).max() <= 1e-9

    @pytest.mark.parametrize("mode", [None, sh.QUADRATURE, sh.LEAST_SQUARES])
    def test_too_few_directions(self, mode):
        with pytest.raises(sh.ShError, match="36"):
            sh.analysis_matrix(lebedev_grid(3), 5, mode)

    def test_quadrature_needs_weights(self):
        with pytest.raises(sh.ShError, match="weights"):
            sh.analysis_matrix(horizontal_grid(10), 1, sh.QUADRATURE)

    def test_rank_deficient_lstsq(self):
        # a horizontal ring cannot separate n=2, m=0 from n=0
        with pytest.raises(sh.ShError, match="horizontal-10.*order 2|order 2.*horizontal-10"):
            sh.analysis_matrix(horizontal_grid(10), 2, sh.LEAST_SQUARES)

    def test_default_mode(self):
        assert sh.default_mode(lebedev_grid(3)) == sh.QUADRATURE
        assert sh.default_mode(horizontal_grid(10)) == sh.LEAST_SQUARES

    def test_order0_inverse_constant(self, rng):
        c = sh.ShCoefficients(0, rng.normal(size=(2, 1, 4)) + 0j, 48000.0)
        out = sh.sh_inverse(c, fliege_grid(100))
        assert np.allclose(out.spectra, out.spectra[:, :1, :], rtol=0, atol=1e-15)

    def test_inverse_matches_basis(self, rng):
        dirs = random_directions(rng, 100)
        g = SphericalGrid(tuple(dirs))
        data = np.zeros((2, 16, 2), complex)
        data[:, sh.acn(3, 2), :] = 1.0
        out = sh.sh_inverse(sh.ShCoefficients(3, data, 48000.0), g)
        direct = [oracle_real_sh(3, 2, d.azimuth_deg, d.elevation_deg) for d in dirs]
        assert np.allclose(out.spectra[0, :, 0].real, direct, atol=1e-12)
        assert out.sample_rate_hz == 48000.0 and out.num_bins == 2

    def test_coefficient_validation(self):
        with pytest.raises(sh.ShError):
            sh.ShCoefficients(2, np.zeros((2, 8, 3)))
        bad = np.zeros((2, 9, 3))
        bad[0, 0, 0] = np.nan
        with pytest.raises(sh.ShError):
            sh.ShCoefficients(2, bad)


@pytest.mark.parametrize("order", [1, 2, 3, 5, 8, 12, 15, 20, 29])
@pytest.mark.parametrize("mode", [sh.QUADRATURE, sh.LEAST_SQUARES])
def test_round_trip(order, mode):
    rng = np.random.default_rng(order)
    g = lebedev_grid(order)
    coeffs, x = band_limited_set(g, order, rng)
    c = sh.sh_transform(x, order, mode)
    assert np.abs(c.data - coeffs).max() / np.abs(coeffs).max() < 1e-9
    back = sh.sh_inverse(c, g)
    assert np.abs(back.spectra - x.spectra).max() / np.abs(x.spectra).max() < 1e-9


@pytest.mark.parametrize("order", [3, 10, 29])
def test_modes_agree(order):
    rng = np.random.default_rng(100 + order)
    _, x = band_limited_set(lebedev_grid(order), order, rng)
    q = sh.sh_transform(x, order, sh.QUADRATURE).data
    ls = sh.sh_transform(x, order, sh.LEAST_SQUARES).data
    assert np.abs(q - ls).max() < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10), st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**32 - 1))
def test_linearity(order, a, b, seed):
    rng = np.random.default_rng(seed)
    g = lebedev_grid(order)
    x = rng.normal(size=(2, len(g), 3))
    y = rng.normal(size=(2, len(g), 3))
    lhs = sh.forward(a * x + b * y, g, order)
    rhs = a * sh.forward(x, g, order) + b * sh.forward(y, g, order)
    scale = max(1.0, np.abs(lhs).max())
    assert np.abs(lhs - rhs).max() <= 1e-12 * scale
