"""Rigid-sphere head model: transfer functions, head radius, ITD oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import spherical_jn, spherical_yn

from .grids import SphericalGrid, unit_vectors
from .sets import HrirSet, HrtfSet, bin_frequencies

SPEED_OF_SOUND = 343.0
RADIUS_RANGE_M = (0.05, 0.15)

# Algazi et al. (2001) regression on half head width, height and depth:
# r0 = 0.51 X1 + 0.019 X2 + 0.18 X3 + 3.2 cm
ALGAZI_WEIGHTS = (0.51, 0.019, 0.18)
ALGAZI_OFFSET_M = 0.032

PRE_DELAY_S = 1e-3
SERIES_CAP = 2000
SERIES_RTOL = 1e-17
TAIL_FRACTION = 0.1
TAIL_LIMIT_DB = -60.0


class SphereError(ValueError):
    pass


@dataclass(frozen=True)
class HeadModel:
    radius_m: float = 0.0875
    ear_azimuths_deg: tuple[float, float] = (90.0, 270.0)
    ear_elevations_deg: tuple[float, float] = (0.0, 0.0)
    speed_of_sound_mps: float = SPEED_OF_SOUND
    allow_any_radius: bool = False

    def __post_init__(self):
        lo, hi = RADIUS_RANGE_M
        if not self.radius_m > 0:
            raise SphereError(f"head radius must be positive, got {self.radius_m}")
        if not self.allow_any_radius and not lo <= self.radius_m <= hi:
            raise SphereError(f"head radius {self.radius_m} m outside [{lo}, {hi}] m "
                              "(set allow_any_radius to override)")
        if not self.speed_of_sound_mps > 0:
            raise SphereError("speed of sound must be positive")

    def ear_vectors(self) -> np.ndarray:
        return unit_vectors(self.ear_azimuths_deg, self.ear_elevations_deg)

    def aliasing_frequency(self, order: int) -> float:
        """Spatial aliasing frequency N c / (2 pi r0) of an order-N SH representation."""
        return order * self.speed_of_sound_mps / (2.0 * math.pi * self.radius_m)

    def to_dict(self) -> dict:
        return {"radius_m": self.radius_m, "ear_azimuths_deg": list(self.ear_azimuths_deg),
                "ear_elevations_deg": list(self.ear_elevations_deg),
                "speed_of_sound_mps": self.speed_of_sound_mps}


def optimal_head_radius(width_m: float, height_m: float, depth_m: float) -> float:
    """Sphere radius best matching a head of the given overall dimensions."""
    dims = (width_m, height_m, depth_m)
    if any(not d > 0 for d in dims):
        raise SphereError(f"head dimensions must be positive, got {dims}")
    return sum(w * d / 2.0 for w, d in zip(ALGAZI_WEIGHTS, dims)) + ALGAZI_OFFSET_M


def woodworth_itd(radius_m: float, lateral_angle_rad: float, c: float = SPEED_OF_SOUND) -> float:
    return radius_m / c * (lateral_angle_rad + math.sin(lateral_angle_rad))


def _legendre_table(n_max: int, x: np.ndarray) -> np.ndarray:
    p = np.empty((n_max + 1,) + x.shape)
    p[0] = 1.0
    if n_max >= 1:
        p[1] = x
    for n in range(2, n_max + 1):
        p[n] = ((2 * n - 1) * x * p[n - 1] - (n - 1) * p[n - 2]) / n
    return p


def modal_coefficients(ka: np.ndarray, cap: int = SERIES_CAP) -> tuple[np.ndarray, int]:
    """Series weights ``w[k, n]`` with ``p(ka, cosT) = sum_n w[k, n] P_n(cosT)``.

    Surface pressure of a unit plane wave on a rigid sphere in the
    exp(+j w t) convention, reduced with the Wronskian of j_n, y_n:
    ``w_n = -j (2n+1) j^n / ((ka)^2 h2_n'(ka))``. The number of terms starts
    at ceil(e ka / 2) + 10 and grows until the tail drops below SERIES_RTOL.
    """
    ka = np.atleast_1d(np.asarray(ka, dtype=float))
    top = float(ka.max()) if ka.size else 0.0
    n_max = math.ceil(math.e * top / 2.0) + 10
    while True:
        if n_max > cap:
            raise SphereError(f"rigid-sphere series did not converge within {cap} terms at ka = {top:.4g}")
        n = np.arange(n_max + 1)
        with np.errstate(all="ignore"):
            dh = (spherical_jn(n[None, :], ka[:, None], derivative=True)
                  - 1j * spherical_yn(n[None, :], ka[:, None], derivative=True))
            w = (-1j * (2 * n + 1) * (1j) ** n)[None, :] / (ka[:, None] ** 2 * dh)
        # y_n' overflows for n >> ka; those terms are zero to working precision
        w = np.where(np.isfinite(w), w, 0.0)
        mag = np.abs(w)
        tail = mag[:, -3:].max(axis=1)
        if np.all(tail <= SERIES_RTOL * np.maximum(mag.max(axis=1), 1.0)):
            return w, n_max
        n_max = min(2 * n_max, cap + 1)


def sphere_pressure(ka: np.ndarray, cos_angle: np.ndarray, cap: int = SERIES_CAP) -> np.ndarray:
    """Rigid-sphere surface pressure ``[len(ka), *cos_angle.shape]``; ka must be > 0."""
    w, n_max = modal_coefficients(ka, cap)
    cos_angle = np.asarray(cos_angle, dtype=float)
    p = _legendre_table(n_max, cos_angle.ravel())
    return (w @ p).reshape((w.shape[0],) + cos_angle.shape)


class StfSet(HrtfSet):
    """Sphere transfer functions; same layout as :class:`HrtfSet`."""


def sphere_transfer_function(head: HeadModel, grid: SphericalGrid, num_bins: int,
                             sample_rate: float, cap: int = SERIES_CAP) -> StfSet:
    """Far-field rigid-sphere transfer functions at both ears for every grid direction.

    The DC bin is exactly 1. The Nyquist bin is replaced by its magnitude so
    the spectra stay the transform of a real, even-length impulse response;
    it remains non-zero and therefore safe to divide by.
    """
    if num_bins < 2:
        raise SphereError("need at least two frequency bins")
    freqs = bin_frequencies(num_bins, sample_rate)
    ka = 2.0 * np.pi * freqs[1:] * head.radius_m / head.speed_of_sound_mps
    cos_angle = head.ear_vectors() @ grid.unit_vectors.T  # [ear, direction]
    cos_angle = np.clip(cos_angle, -1.0, 1.0)
    spectra = np.empty((2, len(grid), num_bins), dtype=complex)
    spectra[..., 0] = 1.0
    spectra[..., 1:] = np.moveaxis(sphere_pressure(ka, cos_angle, cap), 0, -1)
    spectra[..., -1] = np.abs(spectra[..., -1])
    return StfSet(grid, float(sample_rate), spectra, {"head": head.to_dict(), "kind": "stf"})


def pre_delay_samples(sample_rate: float) -> int:
    return int(round(PRE_DELAY_S * sample_rate))


def synth_sphere_hrirs(head: HeadModel, grid: SphericalGrid, ir_len: int, sample_rate: float,
                       tail_limit_db: float = TAIL_LIMIT_DB) -> HrirSet:
    """Rigid-sphere HRIRs with a whole-sample pre-delay of about 1 ms.

    The impulse response is the inverse FFT of the transfer functions times
    a pure delay of ``pre_delay_samples`` samples, recorded in the metadata.
    Raises if the responses are time-aliased, see :func:`check_time_aliasing`.
    """
    if ir_len < 4 or ir_len % 2:
        raise SphereError(f"ir_len must be even and >= 4, got {ir_len}")
    num_bins = ir_len // 2 + 1
    stf = sphere_transfer_function(head, grid, num_bins, sample_rate)
    delay = pre_delay_samples(sample_rate)
    if delay >= ir_len // 2:
        raise SphereError(f"ir_len {ir_len} too short for the {delay}-sample pre-delay")
    shift = np.exp(-2j * np.pi * np.arange(num_bins) * delay / ir_len)
    spectra = stf.spectra * shift
    check_time_aliasing(spectra, ir_len, tail_limit_db)
    samples = np.fft.irfft(spectra, n=ir_len, axis=-1)
    meta = {"head": head.to_dict(), "pre_delay_samples": delay, "kind": "sphere"}
    return HrirSet(grid, float(sample_rate), samples, meta)


def tail_energy_db(samples: np.ndarray, fraction: float = TAIL_FRACTION) -> np.ndarray:
    start = int(round(samples.shape[-1] * (1.0 - fraction)))
    total = np.sum(samples**2, axis=-1)
    tail = np.sum(samples[..., start:] ** 2, axis=-1)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(tail / total)


def check_time_aliasing(spectra: np.ndarray, ir_len: int, limit_db: float = TAIL_LIMIT_DB):
    """Reject spectra whose impulse responses wrap around the buffer.

    The tail energy is measured on a copy tapered by a raised cosine over the
    upper half band. Sub-sample delays leave sinc ringing that decays only as
    1/t and would dominate the tail of any practical buffer; the taper removes
    it so that only genuine wrap-around of the response is measured.
    """
    num_bins = spectra.shape[-1]
    rel = np.arange(num_bins) / (num_bins - 1)
    taper = np.where(rel < 0.5, 1.0, 0.5 + 0.5 * np.cos(2.0 * np.pi * (rel - 0.5)))
    worst = float(np.max(tail_energy_db(np.fft.irfft(spectra * taper, n=ir_len, axis=-1))))
    if worst > limit_db:
        raise SphereError(f"impulse responses are time-aliased: last {TAIL_FRACTION:.0%} holds "
                          f"{worst:.1f} dB of the energy (limit {limit_db} dB); use a longer ir_len")
