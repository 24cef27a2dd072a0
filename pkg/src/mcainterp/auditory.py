"""Gammatone auditory smoothing.

The bank is evaluated analytically in the frequency domain on the linear FFT
bin grid: a 4th-order Gammatone with bandwidth 1.019 ERB has the power
response ``(1 + ((f - fc) / b)^2)^-4``. Bands are normalised to unit peak on
the bin grid, so a band value is the ``B``-weighted spectral energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import SphericalGrid
from .sets import HrtfSet, bin_frequencies

GAMMATONE_ORDER = 4
BANDWIDTH_FACTOR = 1.019
# Glasberg & Moore: ERB(f) = 24.7 (4.37 f / 1000 + 1)
ERB_MIN_BW = 24.7
ERB_SLOPE = 4.37e-3
FLOOR_DB = -120.0


class AuditoryError(ValueError):
    pass


def erb_bandwidth(f_hz):
    return ERB_MIN_BW * (ERB_SLOPE * np.asarray(f_hz, dtype=float) + 1.0)


def erb_number(f_hz):
    return 21.4 * np.log10(ERB_SLOPE * np.asarray(f_hz, dtype=float) + 1.0)


def erb_number_to_hz(e):
    return (10.0 ** (np.asarray(e, dtype=float) / 21.4) - 1.0) / ERB_SLOPE


def erb_space(f_low: float, f_high: float, num: int) -> np.ndarray:
    """``num`` frequencies equally spaced in ERB number, both ends included."""
    f = erb_number_to_hz(np.linspace(erb_number(f_low), erb_number(f_high), num))
    f[0], f[-1] = f_low, f_high
    return f


def gammatone_power(freqs_hz: np.ndarray, fc_hz: np.ndarray) -> np.ndarray:
    """Unnormalised power responses ``[band, bin]``."""
    b = BANDWIDTH_FACTOR * erb_bandwidth(fc_hz)[:, None]
    return (1.0 + ((freqs_hz[None, :] - fc_hz[:, None]) / b) ** 2) ** (-GAMMATONE_ORDER)


@dataclass(frozen=True, eq=False)
class GammatoneBank:
    num_bins: int
    sample_rate_hz: float
    center_freqs_hz: np.ndarray
    magnitude_sq_responses: np.ndarray
    f_low_hz: float = 50.0
    f_high_hz: float = 20000.0

    @property
    def num_bands(self) -> int:
        return len(self.center_freqs_hz)

    def band_energies_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.magnitude_sq_responses.sum(axis=1))


def design_bank(num_bins: int, sample_rate: float, num_bands: int = 41,
                f_low: float = 50.0, f_high: float = 20000.0) -> GammatoneBank:
    if num_bands < 2:
        raise AuditoryError(f"need at least two bands, got {num_bands}")
    if not 0 < f_low < f_high <= sample_rate / 2:
        raise AuditoryError(f"band edges must satisfy 0 < f_low < f_high <= fs/2, "
                            f"got {f_low}, {f_high} at fs = {sample_rate}")
    if num_bins < 2:
        raise AuditoryError("need at least two frequency bins")
    fc = erb_space(f_low, f_high, num_bands)
    resp = gammatone_power(bin_frequencies(num_bins, sample_rate), fc)
    resp /= resp.max(axis=1, keepdims=True)
    fc.setflags(write=False)
    resp.setflags(write=False)
    return GammatoneBank(num_bins, float(sample_rate), fc, resp, f_low, f_high)


@dataclass(frozen=True, eq=False)
class AuditorySpectrumSet:
    """Band levels in dB, ``values[ear, direction, band]``."""

    grid: SphericalGrid
    center_freqs_hz: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (2, len(self.grid), len(self.center_freqs_hz)):
            raise AuditoryError(f"band values of shape {v.shape} do not match grid/bands")
        if not np.all(np.isfinite(v)):
            raise AuditoryError("band values must be finite")
        object.__setattr__(self, "values", v)

    def with_values(self, values: np.ndarray, grid: SphericalGrid | None = None) -> "AuditorySpectrumSet":
        return AuditorySpectrumSet(grid or self.grid, self.center_freqs_hz, values)


def band_levels(spectra: np.ndarray, bank: GammatoneBank) -> np.ndarray:
    """``10 log10(sum_f B(fc, f) |X(f)|^2)`` over the last axis, floored at -120 dB."""
    if spectra.shape[-1] != bank.num_bins:
        raise AuditoryError(f"spectra have {spectra.shape[-1]} bins, bank expects {bank.num_bins}")
    power = np.abs(spectra) ** 2
    energy = power @ bank.magnitude_sq_responses.T
    with np.errstate(divide="ignore"):
        level = 10.0 * np.log10(energy)
    return np.maximum(level, FLOOR_DB)


def auditory_filter(spectra: HrtfSet, bank: GammatoneBank) -> AuditorySpectrumSet:
    return AuditorySpectrumSet(spectra.grid, bank.center_freqs_hz, band_levels(spectra.spectra, bank))
