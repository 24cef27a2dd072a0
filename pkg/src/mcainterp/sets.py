"""HRIR / HRTF set containers.

Both ears are stacked on the leading axis: ``samples[ear, direction, t]`` and
``spectra[ear, direction, bin]`` with ear 0 = left, 1 = right. Spectra hold the
one-sided FFT bins 0..fs/2 of an even-length impulse response.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grids import SphericalGrid

LEFT, RIGHT = 0, 1
EARS = ("left", "right")


class SetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HrtfSet:
    grid: SphericalGrid
    sample_rate_hz: float
    spectra: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        spectra = np.asarray(self.spectra)
        if spectra.ndim != 3 or spectra.shape[0] != 2:
            raise SetError(f"spectra must have shape [2, directions, bins], got {spectra.shape}")
        if spectra.shape[1] != len(self.grid):
            raise SetError(f"{spectra.shape[1]} spectra for a grid of {len(self.grid)} directions")
        if spectra.shape[2] < 2:
            raise SetError("at least two frequency bins (DC and Nyquist) are required")
        object.__setattr__(self, "spectra", spectra)

    @property
    def num_bins(self) -> int:
        return self.spectra.shape[2]

    @property
    def ir_length(self) -> int:
        return 2 * (self.num_bins - 1)

    @property
    def freqs_hz(self) -> np.ndarray:
        return bin_frequencies(self.num_bins, self.sample_rate_hz)

    def with_spectra(self, spectra: np.ndarray, **metadata) -> "HrtfSet":
        return replace(self, spectra=spectra, metadata={**self.metadata, **metadata})

    def to_hrir(self) -> "HrirSet":
        samples = np.fft.irfft(self.spectra, n=self.ir_length, axis=-1)
        return HrirSet(self.grid, self.sample_rate_hz, samples, dict(self.metadata))


@dataclass(frozen=True, eq=False)
class HrirSet:
    grid: SphericalGrid
    sample_rate_hz: float
    samples: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 3 or samples.shape[0] != 2:
            raise SetError(f"samples must have shape [2, directions, T], got {samples.shape}")
        if samples.shape[1] != len(self.grid):
            raise SetError(f"{samples.shape[1]} impulse responses for a grid of {len(self.grid)} directions")
        if samples.shape[2] < 2 or samples.shape[2] % 2:
            raise SetError(f"impulse response length must be even and >= 2, got {samples.shape[2]}")
        if not np.all(np.isfinite(samples)):
            raise SetError("impulse responses contain non-finite samples")
        if self.sample_rate_hz <= 0:
            raise SetError("sample rate must be positive")
        object.__setattr__(self, "samples", samples)

    @property
    def ir_length(self) -> int:
        return self.samples.shape[2]

    def to_hrtf(self) -> HrtfSet:
        return HrtfSet(self.grid, self.sample_rate_hz, np.fft.rfft(self.samples, axis=-1),
                       dict(self.metadata))


def bin_frequencies(num_bins: int, sample_rate_hz: float) -> np.ndarray:
    return np.linspace(0.0, sample_rate_hz / 2.0, num_bins)


def check_compatible(a, b, what: str = "sets"):
    if not a.grid.same_directions(b.grid):
        raise SetError(f"{what} are defined on different grids ({a.grid.name!r} vs {b.grid.name!r})")
    if a.sample_rate_hz != b.sample_rate_hz:
        raise SetError(f"{what} differ in sample rate ({a.sample_rate_hz} vs {b.sample_rate_hz})")
    la = a.num_bins if isinstance(a, HrtfSet) else a.ir_length
    lb = b.num_bins if isinstance(b, HrtfSet) else b.ir_length
    if la != lb:
        raise SetError(f"{what} differ in length ({la} vs {lb})")
