import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcainterp.grids import SphericalGrid, horizontal_grid, lebedev_grid
from mcainterp.metrics import itd_values
from mcainterp.sphere import (ALGAZI_OFFSET_M, HeadModel, SphereError, modal_coefficients,
                              optimal_head_radius, pre_delay_samples, sphere_pressure,
                              sphere_transfer_function, synth_sphere_hrirs, woodworth_itd)

FS = 44100.0


def _sj(n, x):
    return mp.sqrt(mp.pi / (2 * x)) * mp.besselj(n + mp.mpf(1) / 2, x)


def _sy(n, x):
    return mp.sqrt(mp.pi / (2 * x)) * mp.bessely(n + mp.mpf(1) / 2, x)


def scattering_oracle(ka, cos_t, terms=80):
    """Incident plus scattered field for exp(-i w t) and a wave travelling along +z.

    Evaluated in 40-digit arithmetic; the ear sits at the angle whose cosine is
    ``-cos_t`` and the time convention is conjugate to the library's.
    """
    mp.mp.dps = 40
    ka = mp.mpf(ka)
    total = mp.mpc(0)
    for n in range(terms):
        j, y = _sj(n, ka), _sy(n, ka)
        if n == 0:
            dj, dy = -_sj(1, ka), -_sy(1, ka)
        else:
            dj = _sj(n - 1, ka) - (n + 1) / ka * j
            dy = _sy(n - 1, ka) - (n + 1) / ka * y
        h, dh = j + 1j * y, dj + 1j * dy
        total += (2 * n + 1) * (1j) ** n * (j - dj / dh * h) * mp.legendre(n, cos_t)
    return complex(total)


class TestHeadModel:
    def test_radius_window(self):
        with pytest.raises(SphereError, match="outside"):
            HeadModel(0.2)
        assert HeadModel(0.2, allow_any_radius=True).radius_m == 0.2
        with pytest.raises(SphereError):
            HeadModel(0.0, allow_any_radius=True)

    def test_aliasing_frequency(self):
        assert HeadModel(0.0889).aliasing_frequency(3) == pytest.approx(1842.0, abs=2)


class TestOptimalRadius:
    @pytest.mark.parametrize("d", [0.15, 0.17, 0.19, 0.22])
    def test_sphere_sanity(self, d):
        assert abs(optimal_head_radius(d, d, d) - d / 2) <= 0.15 * d / 2

    def test_monotone_in_width(self):
        a = optimal_head_radius(0.15, 0.22, 0.19)
        assert optimal_head_radius(0.16, 0.22, 0.19) > a

    def test_closed_form(self):
        # 0.51 * 0.075 + 0.019 * 0.11 + 0.18 * 0.095 + 0.032
        assert optimal_head_radius(0.15, 0.22, 0.19) == pytest.approx(0.08944, abs=1e-12)

    def test_offset(self):
        assert ALGAZI_OFFSET_M == 0.032

    def test_rejects_non_positive(self):
        with pytest.raises(SphereError):
            optimal_head_radius(0.15, 0.0, 0.19)


class TestSeries:
    @pytest.mark.parametrize("cos_t", [1.0, 0.3, -0.4, -1.0])
    def test_matches_independent_series(self, cos_t):
        ours = sphere_pressure(np.array([30.0]), np.array([cos_t]))[0]
        assert ours == pytest.approx(np.conj(scattering_oracle(30, -cos_t)), rel=1e-10)

    def test_ipsilateral_pressure_doubling(self):
        p = sphere_pressure(np.array([30.0]), np.array([1.0]))[0]
        assert 20 * np.log10(abs(p)) == pytest.approx(6.0, abs=0.05)

    def test_low_frequency_limit(self):
        p = sphere_pressure(np.array([1e-4]), np.linspace(-1, 1, 7))
        assert np.allclose(p, 1.0, atol=1e-3)

    def test_truncation_independent(self):
        ka = np.linspace(0.05, 35.0, 60)
        w, n_max = modal_coefficients(ka)
        n = np.arange(2 * n_max + 1)
        cos_t = np.linspace(-1, 1, 11)
        from scipy.special import eval_legendre, spherical_jn, spherical_yn
        with np.errstate(all="ignore"):
            dh = spherical_jn(n, ka[:, None], True) - 1j * spherical_yn(n, ka[:, None], True)
            w2 = -1j * (2 * n + 1) * (1j) ** n / (ka[:, None] ** 2 * dh)
        w2 = np.where(np.isfinite(w2), w2, 0)
        p2 = w2 @ eval_legendre(n[:, None], cos_t[None, :])
        p1 = sphere_pressure(ka, cos_t)
        assert np.abs(p1 - p2).max() / np.abs(p2).max() < 1e-10

    def test_cap_reports_ka(self):
        with pytest.raises(SphereError, match="ka = 500"):
            modal_coefficients(np.array([500.0]), cap=100)


class TestStf:
    def test_dc(self):
        stf = sphere_transfer_function(HeadModel(), lebedev_grid(5), 65, FS)
        assert np.all(stf.spectra[..., 0] == 1 + 0j)

    def test_nyquist_real_nonzero(self):
        stf = sphere_transfer_function(HeadModel(), lebedev_grid(5), 65, FS)
        assert np.all(stf.spectra[..., -1].imag == 0) and np.all(np.abs(stf.spectra) > 0)

    def test_mirror_symmetry(self):
        g = horizontal_grid(5)
        mirrored = SphericalGrid(tuple((360 - a, 0.0) for a in g.azimuth_deg))
        a = sphere_transfer_function(HeadModel(), g, 129, FS).spectra
        b = sphere_transfer_function(HeadModel(), mirrored, 129, FS).spectra
        assert np.abs(a[0] - b[1]).max() < 1e-12

    def test_head_shadow(self):
        head = HeadModel()
        g = SphericalGrid(((240.0, 0.0), (270.0, 0.0)))
        stf = sphere_transfer_function(head, g, 257, FS)
        ka = 2 * np.pi * stf.freqs_hz * head.radius_m / head.speed_of_sound_mps
        left = np.abs(stf.spectra[0])
        assert np.all(left[0, ka > 2] < 1.0)
        # the antipode itself is the bright spot: creeping waves add in phase
        peak = 20 * np.log10(left[1, ka > 2].max())
        assert 1.0 < peak < 1.3
        assert 20 * np.log10(abs(scattering_oracle(3.2, 1.0))) == pytest.approx(1.2355, abs=1e-3)

    def test_permutation(self, rng):
        g = lebedev_grid(4)
        perm = rng.permutation(len(g))
        gp = SphericalGrid(tuple(g.directions[i] for i in perm))
        a = sphere_transfer_function(HeadModel(), g, 33, FS).spectra
        b = sphere_transfer_function(HeadModel(), gp, 33, FS).spectra
        assert np.array_equal(a[:, perm], b)

    def test_needs_two_bins(self):
        with pytest.raises(SphereError):
            sphere_transfer_function(HeadModel(), lebedev_grid(1), 1, FS)


class TestSynth:
    def test_fft_matches_stf(self, head, sparse_sphere):
        stf = sphere_transfer_function(head, sparse_sphere.grid, 257, FS)
        d = sparse_sphere.metadata["pre_delay_samples"]
        shift = np.exp(2j * np.pi * np.arange(257) * d / 512)
        assert np.abs(sparse_sphere.to_hrtf().spectra * shift - stf.spectra).max() < 1e-10

    def test_metadata(self, sparse_sphere):
        assert sparse_sphere.metadata["pre_delay_samples"] == pre_delay_samples(FS) == 44
        assert sparse_sphere.metadata["kind"] == "sphere"

    def test_frontal_symmetry(self, head):
        h = synth_sphere_hrirs(head, SphericalGrid(((0.0, 0.0), (0.0, 40.0))), 512, FS)
        assert np.abs(h.samples[0] - h.samples[1]).max() < 1e-12

    def test_woodworth_itd(self, head):
        h = synth_sphere_hrirs(head, horizontal_grid(90), 512, FS)
        itd = itd_values(h)[1]
        expected = woodworth_itd(head.radius_m, math.pi / 2)
        assert expected * 1e6 == pytest.approx(656.0, abs=1)
        # left ear leads for a source on the left: TOA_l - TOA_r < 0
        assert abs(-itd - expected) <= 0.1 * expected

    def test_time_aliasing_guard(self, head):
        with pytest.raises(SphereError, match="longer ir_len"):
            synth_sphere_hrirs(head, lebedev_grid(3), 96, FS)

    def test_too_short_for_delay(self, head):
        with pytest.raises(SphereError):
            synth_sphere_hrirs(head, lebedev_grid(1), 64, FS)

    def test_odd_length(self, head):
        with pytest.raises(SphereError):
            synth_sphere_hrirs(head, lebedev_grid(1), 511, FS)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.15), st.floats(0, 360, exclude_max=True), st.floats(-80, 80))
def test_stf_depends_on_ear_angle_only(radius, az, el):
    """Rotating source and ears together leaves the response unchanged."""
    a = HeadModel(radius)
    b = HeadModel(radius, ear_azimuths_deg=(90 + az, 270 + az))
    g1 = SphericalGrid(((0.0, el),))
    g2 = SphericalGrid(((az, el),))
    s1 = sphere_transfer_function(a, g1, 17, FS).spectra
    s2 = sphere_transfer_function(b, g2, 17, FS).spectra
    assert np.allclose(s1, s2, rtol=1e-9, atol=1e-12)
