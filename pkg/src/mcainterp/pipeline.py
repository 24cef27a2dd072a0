"""Magnitude-corrected, time-aligned (MCA) HRTF upsampling.

Conventional branch: align by division with rigid-sphere transfer functions,
SH-interpolate to the dense grid, undo the alignment there. Auditory branch:
band levels of the sparse set are interpolated to the dense grid and compared
with the band levels of the conventional result; the difference, spread to the
FFT bins, is the correction filter applied to the conventional result.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import sh
from .auditory import (AuditorySpectrumSet, GammatoneBank, auditory_filter, band_levels,
                       design_bank, erb_number)
from .grids import SphericalGrid
from .sets import HrirSet, HrtfSet
from .sphere import HeadModel, StfSet, sphere_transfer_function

ZERO_PHASE = "zero"
MINIMUM_PHASE = "minimum"
FADE_MARGIN_OCTAVES = 1.0 / 3.0
MIN_PHASE_PAD = 8


class PipelineError(ValueError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise PipelineError(name, exc) from exc


@dataclass(frozen=True)
class Limiter:
    """Static soft-knee limiter (infinite ratio) applied to gains in dB."""

    limit_db: float = 6.0
    knee_db: float = 3.0

    def __post_init__(self):
        if self.knee_db < 0:
            raise ValueError("knee width must be >= 0")
        if self.limit_db - self.knee_db / 2 < 0:
            raise ValueError("the knee must start at or above 0 dB (limit_db >= knee_db / 2)")

    def __call__(self, gain_db: np.ndarray) -> np.ndarray:
        t, w = self.limit_db, self.knee_db
        x = np.asarray(gain_db, dtype=float)
        over = x - t
        out = np.where(over > w / 2, t, x)
        if w > 0:
            knee = np.abs(over) <= w / 2
            out[knee] = x[knee] - (over[knee] + w / 2) ** 2 / (2 * w)
        return out

    def to_dict(self) -> dict:
        return {"limit_db": float(self.limit_db), "knee_db": float(self.knee_db)}


@dataclass(frozen=True)
class McaConfig:
    sparse_order: int
    head: HeadModel
    target_grid: SphericalGrid
    enable_aliasing_fade: bool = True
    limiter: Limiter | None = None
    phase_mode: str = MINIMUM_PHASE
    sh_mode: str | None = None
    # divide band energies by the sphere's band energies around the auditory
    # interpolation, mirroring the alignment of the conventional branch
    equalize_auditory: bool = True
    apply_correction: bool = True
    num_bands: int = 41
    f_low_hz: float = 50.0
    f_high_hz: float = 20000.0

    def __post_init__(self):
        if self.sparse_order < 1:
            raise ValueError(f"sparse SH order must be >= 1, got {self.sparse_order}")
        if len(self.target_grid) == 0:
            raise ValueError("target grid is empty")
        if self.phase_mode not in (ZERO_PHASE, MINIMUM_PHASE):
            raise ValueError(f"phase mode must be 'zero' or 'minimum', got {self.phase_mode!r}")

    @property
    def aliasing_freq_hz(self) -> float:
        return self.head.aliasing_frequency(self.sparse_order)

    def bank(self, num_bins: int, sample_rate: float) -> GammatoneBank:
        f_high = min(self.f_high_hz, sample_rate / 2)
        return design_bank(num_bins, sample_rate, self.num_bands, self.f_low_hz, f_high)


@dataclass(frozen=True, eq=False)
class CorrectionFilterSet:
    grid: SphericalGrid
    sample_rate_hz: float
    gains_db: np.ndarray
    aliasing_freq_hz: float
    fade_low_hz: float
    enable_aliasing_fade: bool = True
    limiter: Limiter | None = None
    phase_mode: str = MINIMUM_PHASE
    sparse_order: int | None = None

    def __post_init__(self):
        g = np.asarray(self.gains_db, dtype=float)
        if g.ndim != 3 or g.shape[:2] != (2, len(self.grid)):
            raise ValueError(f"gains of shape {g.shape} do not match the grid")
        object.__setattr__(self, "gains_db", g)

    @property
    def num_bins(self) -> int:
        return self.gains_db.shape[2]

    @property
    def freqs_hz(self) -> np.ndarray:
        return np.linspace(0.0, self.sample_rate_hz / 2, self.num_bins)

    def nulled(self) -> "CorrectionFilterSet":
        return _replace_gains(self, np.zeros_like(self.gains_db))


def _replace_gains(filters: CorrectionFilterSet, gains: np.ndarray) -> CorrectionFilterSet:
    from dataclasses import replace

    return replace(filters, gains_db=gains)


def aliasing_frequency(order: int, radius_m: float, c: float = 343.0) -> float:
    return order * c / (2.0 * math.pi * radius_m)


# ---------------------------------------------------------------- alignment

def _stf_for(hrtf: HrtfSet, head: HeadModel, stf: StfSet | None) -> StfSet:
    if stf is None:
        return sphere_transfer_function(head, hrtf.grid, hrtf.num_bins, hrtf.sample_rate_hz)
    if not stf.grid.same_directions(hrtf.grid) or stf.num_bins != hrtf.num_bins:
        raise ValueError(f"sphere transfer functions on grid {stf.grid.name!r} do not match "
                         f"set on grid {hrtf.grid.name!r}")
    return stf


def align(hrtf: HrtfSet, head: HeadModel, stf: StfSet | None = None) -> HrtfSet:
    """Remove direction-dependent sphere delay and shading by spectral division."""
    stf = _stf_for(hrtf, head, stf)
    return hrtf.with_spectra(hrtf.spectra / stf.spectra, alignment_head=head.to_dict())


def align_inverse(hrtf: HrtfSet, head: HeadModel, stf: StfSet | None = None) -> HrtfSet:
    stf = _stf_for(hrtf, head, stf)
    meta = {k: v for k, v in hrtf.metadata.items() if k != "alignment_head"}
    return HrtfSet(hrtf.grid, hrtf.sample_rate_hz, hrtf.spectra * stf.spectra, meta)


# ------------------------------------------------------------ interpolation

def interpolate_sh(hrtf: HrtfSet, order: int, target: SphericalGrid, mode: str | None = None) -> HrtfSet:
    _check_order(hrtf.grid, order)
    coeffs = sh.sh_transform(hrtf, order, mode)
    out = sh.sh_inverse(coeffs, target)
    return HrtfSet(target, hrtf.sample_rate_hz, out.spectra, dict(hrtf.metadata))


def interpolate_auditory(aud: AuditorySpectrumSet, order: int, target: SphericalGrid,
                         mode: str | None = None) -> AuditorySpectrumSet:
    """SH-interpolate band levels (dB, treated as real spherical functions)."""
    _check_order(aud.grid, order)
    values = sh.inverse(sh.forward(aud.values, aud.grid, order, mode), target, order)
    return AuditorySpectrumSet(target, aud.center_freqs_hz, values)


def _check_order(grid: SphericalGrid, order: int):
    if grid.nominal_order is not None and order > grid.nominal_order:
        raise ValueError(f"SH order {order} exceeds the order {grid.nominal_order} "
                         f"supported by grid {grid.name!r}")


# ------------------------------------------------------- correction filters

def band_to_bin_matrix(center_freqs_hz: np.ndarray, freqs_hz: np.ndarray) -> np.ndarray:
    """``[bins, bands]`` weights: linear in ERB number, constant outside the bank."""
    x = erb_number(freqs_hz)
    xp = erb_number(center_freqs_hz)
    eye = np.eye(len(xp))
    return np.stack([np.interp(x, xp, eye[b]) for b in range(len(xp))], axis=1)


def fade_weights(freqs_hz: np.ndarray, aliasing_freq_hz: float) -> np.ndarray:
    """0 up to f_A 2^(-1/3), rising linearly in frequency to 1 at f_A."""
    lo = aliasing_freq_hz * 2.0 ** -FADE_MARGIN_OCTAVES
    w = (np.asarray(freqs_hz, dtype=float) - lo) / (aliasing_freq_hz - lo)
    return np.where(freqs_hz <= lo, 0.0, np.where(freqs_hz >= aliasing_freq_hz, 1.0, w))


def design_correction(a_hat_interp: AuditorySpectrumSet, a_of_interp: AuditorySpectrumSet,
                      cfg: McaConfig, num_bins: int, sample_rate: float) -> CorrectionFilterSet:
    """Per-bin correction gains from the band-level difference of two auditory sets."""
    if a_hat_interp.values.shape != a_of_interp.values.shape:
        raise ValueError(f"auditory sets differ in shape: {a_hat_interp.values.shape} "
                         f"vs {a_of_interp.values.shape}")
    if a_hat_interp.values.shape[-1] != cfg.num_bands:
        raise ValueError(f"{a_hat_interp.values.shape[-1]} bands, configured bank has {cfg.num_bands}")
    if not a_hat_interp.grid.same_directions(a_of_interp.grid):
        raise ValueError("auditory sets are defined on different grids")
    freqs = np.linspace(0.0, sample_rate / 2, num_bins)
    band_gains = a_hat_interp.values - a_of_interp.values
    gains = band_gains @ band_to_bin_matrix(a_hat_interp.center_freqs_hz, freqs).T
    if cfg.limiter is not None:
        gains = cfg.limiter(gains)
    f_a = cfg.aliasing_freq_hz
    if cfg.enable_aliasing_fade:
        gains = gains * fade_weights(freqs, f_a)
    return CorrectionFilterSet(a_hat_interp.grid, float(sample_rate), gains, f_a,
                               f_a * 2.0 ** -FADE_MARGIN_OCTAVES, cfg.enable_aliasing_fade,
                               cfg.limiter, cfg.phase_mode, cfg.sparse_order)


def minimum_phase_spectrum(gains_db: np.ndarray, pad: int = MIN_PHASE_PAD) -> np.ndarray:
    """Minimum-phase one-sided spectra with magnitude ``10^(gains_db/20)``.

    The dB gains are interpolated linearly onto a ``pad`` times denser bin
    grid, the real cepstrum is folded onto positive quefrencies and
    exponentiated, and every ``pad``-th bin is kept. The magnitude at the
    original bins is reproduced exactly.
    """
    num_bins = gains_db.shape[-1]
    n_fft = 2 * (num_bins - 1) * pad
    dense = np.arange(n_fft // 2 + 1) / pad
    base = np.minimum(dense.astype(int), num_bins - 2)
    frac = dense - base
    g = gains_db[..., base] * (1.0 - frac) + gains_db[..., base + 1] * frac
    log_mag = g * (np.log(10.0) / 20.0)
    cep = np.fft.irfft(log_mag, n=n_fft, axis=-1)
    half = n_fft // 2
    folded = np.zeros_like(cep)
    folded[..., 0] = cep[..., 0]
    folded[..., 1:half] = 2.0 * cep[..., 1:half]
    folded[..., half] = cep[..., half]
    spec = np.exp(np.fft.rfft(folded, axis=-1))
    return spec[..., ::pad]


def correction_spectra(filters: CorrectionFilterSet) -> np.ndarray:
    g = filters.gains_db
    if not np.all(np.isfinite(g)):
        raise ValueError("correction gains contain non-finite values")
    if filters.phase_mode == ZERO_PHASE:
        return 10.0 ** (g / 20.0)
    if filters.phase_mode == MINIMUM_PHASE:
        return minimum_phase_spectrum(g)
    raise ValueError(f"unknown phase mode {filters.phase_mode!r}")


def apply_correction(hrtf: HrtfSet, filters: CorrectionFilterSet) -> HrtfSet:
    if not hrtf.grid.same_directions(filters.grid) or hrtf.num_bins != filters.num_bins:
        raise ValueError("correction filters do not match the set's grid or bin count")
    return hrtf.with_spectra(hrtf.spectra * correction_spectra(filters))


# ------------------------------------------------------------------ driver

@dataclass(frozen=True, eq=False)
class McaResult:
    dense_corrected: HrirSet
    dense_uncorrected: HrirSet
    filters: CorrectionFilterSet
    diagnostics: dict = field(default_factory=dict)


def auditory_target(sparse: HrtfSet, cfg: McaConfig, bank: GammatoneBank,
                    stf_sparse: StfSet, stf_dense: StfSet) -> tuple[AuditorySpectrumSet, AuditorySpectrumSet]:
    """Band levels of the sparse set and their interpolation to the target grid."""
    a_h = auditory_filter(sparse, bank)
    if not cfg.equalize_auditory:
        return a_h, interpolate_auditory(a_h, cfg.sparse_order, cfg.target_grid, cfg.sh_mode)
    eq_sparse = band_levels(stf_sparse.spectra, bank)
    eq_dense = band_levels(stf_dense.spectra, bank)
    flat = a_h.with_values(a_h.values - eq_sparse)
    interp = interpolate_auditory(flat, cfg.sparse_order, cfg.target_grid, cfg.sh_mode)
    return a_h, interp.with_values(interp.values + eq_dense)


def mca_upsample(sparse: HrirSet, cfg: McaConfig) -> McaResult:
    """Upsample ``sparse`` to ``cfg.target_grid``; returns corrected and uncorrected sets."""
    with stage("validate"):
        grid = sparse.grid
        if grid.nominal_order is not None and grid.nominal_order < cfg.sparse_order:
            raise ValueError(f"grid {grid.name!r} supports SH order {grid.nominal_order}, "
                             f"requested {cfg.sparse_order}")
    with stage("transform"):
        h = sparse.to_hrtf()
        fs, k = h.sample_rate_hz, h.num_bins
        bank = cfg.bank(k, fs)
    with stage("sphere"):
        stf_sparse = sphere_transfer_function(cfg.head, grid, k, fs)
        stf_dense = sphere_transfer_function(cfg.head, cfg.target_grid, k, fs)
    with stage("align"):
        h_t = align(h, cfg.head, stf_sparse)
    with stage("interpolate"):
        h_t_hat = interpolate_sh(h_t, cfg.sparse_order, cfg.target_grid, cfg.sh_mode)
    with stage("align_inverse"):
        h_hat = align_inverse(h_t_hat, cfg.head, stf_dense)
    with stage("auditory"):
        a_h, a_hat_h = auditory_target(h, cfg, bank, stf_sparse, stf_dense)
        a_of_hat = auditory_filter(h_hat, bank)
    with stage("design_correction"):
        filters = design_correction(a_hat_h, a_of_hat, cfg, k, fs)
        if not cfg.apply_correction:
            filters = filters.nulled()
    with stage("apply_correction"):
        h_c = apply_correction(h_hat, filters)
    meta = {"sparse_grid": grid.name, "sparse_order": cfg.sparse_order,
            "head": cfg.head.to_dict(), "aliasing_freq_hz": cfg.aliasing_freq_hz}
    uncorrected = h_hat.with_spectra(h_hat.spectra, **meta).to_hrir()
    corrected = h_c.with_spectra(h_c.spectra, **meta).to_hrir()
    diagnostics = {"a_h": a_h, "a_hat_h": a_hat_h, "a_of_hat": a_of_hat, "bank": bank}
    return McaResult(corrected, uncorrected, filters, diagnostics)
