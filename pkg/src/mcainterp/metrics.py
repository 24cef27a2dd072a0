"""Evaluation of upsampled sets against a reference.

Magnitude error per auditory band, broadband ILD error, and ITD error from
onset-based time-of-arrival estimates, plus regional averaging and JND checks.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .auditory import GammatoneBank, band_levels, design_bank
from .grids import Direction, SphericalGrid, angular_distances
from .sets import EARS, LEFT, HrirSet, HrtfSet, check_compatible


class MetricsError(ValueError):
    pass


TOA_UPSAMPLING = 10
TOA_LOWPASS_HZ = 3000.0
TOA_LOWPASS_ORDER = 8
TOA_THRESHOLD_DB = -10.0

REGION_RADIUS_DEG = 25.0
FRONTAL = Direction(0.0, 0.0)
CONTRALATERAL_LEFT = Direction(270.0, 0.0)
HIGH_BAND_HZ = 4000.0
HORIZONTAL_TOL_DEG = 0.5

CSV_COLUMNS = ("subject", "ear", "az_deg", "el_deg", "band_fc_hz", "metric", "value")


def _spectra(s) -> HrtfSet:
    return s.to_hrtf() if isinstance(s, HrirSet) else s


def magnitude_error(test, reference, bank: GammatoneBank | None = None) -> np.ndarray:
    """Absolute band-level difference ``[ear, direction, band]`` in dB."""
    test, reference = _spectra(test), _spectra(reference)
    try:
        check_compatible(test, reference)
    except ValueError as exc:
        raise MetricsError(str(exc)) from exc
    if bank is None:
        bank = design_bank(test.num_bins, test.sample_rate_hz,
                           f_high=min(20000.0, test.sample_rate_hz / 2))
    return np.abs(band_levels(test.spectra, bank) - band_levels(reference.spectra, bank))


def region_mask(grid: SphericalGrid, center: Direction, radius_deg: float) -> np.ndarray:
    if not 0 < radius_deg <= 180:
        raise MetricsError(f"region radius must be in (0, 180], got {radius_deg}")
    return angular_distances(center, grid.azimuth_deg, grid.elevation_deg) <= radius_deg + 1e-9


def regional_average(errors: np.ndarray, grid: SphericalGrid, center: Direction,
                     radius_deg: float = REGION_RADIUS_DEG):
    """Mean over the directions within ``radius_deg`` of ``center`` (direction axis first)."""
    errors = np.asarray(errors, dtype=float)
    if errors.shape[0] != len(grid):
        raise MetricsError(f"{errors.shape[0]} error rows for {len(grid)} directions")
    mask = region_mask(grid, center, radius_deg)
    if not mask.any():
        raise MetricsError(f"no grid direction within {radius_deg} deg of {center}")
    out = errors[mask].mean(axis=0)
    return float(out) if np.ndim(out) == 0 else out


# ------------------------------------------------------------------ binaural

def ild_values(hrirs: HrirSet) -> np.ndarray:
    """Broadband ILD per direction, ``10 log10(sum l^2 / sum r^2)``."""
    energy = np.sum(hrirs.samples**2, axis=-1)
    if np.any(energy[1] == 0):
        bad = int(np.nonzero(energy[1] == 0)[0][0])
        raise MetricsError(f"right-ear response at direction {bad} has zero energy")
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(energy[0] / energy[1])


def ild(hrirs: HrirSet, direction_index: int) -> float:
    if not 0 <= direction_index < len(hrirs.grid):
        raise MetricsError(f"direction index {direction_index} out of range")
    sub = HrirSet(SphericalGrid((hrirs.grid.directions[direction_index],)), hrirs.sample_rate_hz,
                  hrirs.samples[:, direction_index:direction_index + 1])
    return float(ild_values(sub)[0])


def ild_error(test: HrirSet, reference: HrirSet) -> np.ndarray:
    check_compatible(test, reference)
    return np.abs(ild_values(test) - ild_values(reference))


def estimate_toa(ir: np.ndarray, sample_rate: float) -> np.ndarray:
    """Onset time (s) of the last axis of ``ir``.

    The response is upsampled 10x by FFT zero-padding, low-passed by an 8th
    order Butterworth at 3 kHz, and the onset is the first sample reaching
    -10 dB re the absolute maximum of that signal. The filter is applied as
    its frequency response on the FFT grid, i.e. circularly, so a circular
    shift of ``ir`` shifts the onset by exactly the same time.
    """
    ir = np.asarray(ir, dtype=float)
    if ir.shape[-1] == 0:
        raise MetricsError("empty impulse response")
    peak = np.max(np.abs(ir), axis=-1)
    if np.any(peak == 0):
        raise MetricsError("cannot estimate the onset of a silent impulse response")
    n_up = ir.shape[-1] * TOA_UPSAMPLING
    fs_up = sample_rate * TOA_UPSAMPLING
    spec = np.fft.rfft(ir, axis=-1)
    sos = signal.butter(TOA_LOWPASS_ORDER, TOA_LOWPASS_HZ, fs=fs_up, output="sos")
    freqs = np.fft.rfftfreq(n_up, 1.0 / fs_up)[:spec.shape[-1]]
    _, h = signal.sosfreqz(sos, worN=freqs, fs=fs_up)
    # zero-padded spectrum; the Nyquist bin of an even-length input is split
    up_spec = np.zeros(ir.shape[:-1] + (n_up // 2 + 1,), complex)
    up_spec[..., :spec.shape[-1]] = spec * h * TOA_UPSAMPLING
    if ir.shape[-1] % 2 == 0:
        up_spec[..., spec.shape[-1] - 1] *= 0.5
    env = np.abs(np.fft.irfft(up_spec, n_up, axis=-1))
    threshold = env.max(axis=-1, keepdims=True) * 10.0 ** (TOA_THRESHOLD_DB / 20.0)
    onset = np.argmax(env >= threshold, axis=-1)
    return onset / fs_up


def detector_latency(sample_rate: float, ir_len: int = 512) -> float:
    """TOA reported for a unit impulse, minus the impulse position (s)."""
    k = ir_len // 4
    x = np.zeros(ir_len)
    x[k] = 1.0
    return float(estimate_toa(x, sample_rate)) - k / sample_rate


def itd_values(hrirs: HrirSet) -> np.ndarray:
    toa = estimate_toa(hrirs.samples, hrirs.sample_rate_hz)
    return toa[0] - toa[1]


def itd_error(test: HrirSet, reference: HrirSet) -> np.ndarray:
    """Absolute ITD difference per direction in microseconds."""
    check_compatible(test, reference)
    return np.abs(itd_values(test) - itd_values(reference)) * 1e6


# ----------------------------------------------------------------------- JND

@dataclass(frozen=True)
class JndCurve:
    ild_jnd_db: float = 1.0
    itd_front_us: float = 20.0
    itd_lateral_us: float = 100.0

    def itd_jnd_us(self, azimuth_deg):
        az = np.mod(np.asarray(azimuth_deg, dtype=float), 360.0)
        lateral = np.where(az > 180.0, 360.0 - az, az)
        t = 1.0 - np.abs(lateral - 90.0) / 90.0
        return self.itd_front_us + (self.itd_lateral_us - self.itd_front_us) * t


def horizontal_mask(grid: SphericalGrid, tol_deg: float = HORIZONTAL_TOL_DEG) -> np.ndarray:
    return np.abs(grid.elevation_deg) <= tol_deg


def jnd_exceedance(report: "EvaluationReport", jnd: JndCurve = JndCurve()) -> dict:
    """Per-direction exceedance of the ILD / ITD JNDs on horizontal directions."""
    mask = horizontal_mask(report.grid)
    az = report.grid.azimuth_deg[mask]
    out = {"azimuth_deg": az, "num_directions": int(mask.sum())}
    for key, err, limit in (("ild", report.ild_error_db, np.full(az.shape, jnd.ild_jnd_db)),
                            ("itd", report.itd_error_us, jnd.itd_jnd_us(az))):
        if err is None:
            continue
        exceed = err[mask] > limit
        out[f"{key}_exceeds"] = exceed
        out[f"{key}_fraction"] = float(exceed.mean()) if exceed.size else None
    return out


# -------------------------------------------------------------------- report

@dataclass(frozen=True, eq=False)
class EvaluationReport:
    subject_id: str
    grid: SphericalGrid
    center_freqs_hz: np.ndarray
    magnitude_db: np.ndarray
    ild_error_db: np.ndarray | None = None
    itd_error_us: np.ndarray | None = None
    regions: dict = field(default_factory=lambda: {
        "frontal_25deg": (FRONTAL, REGION_RADIUS_DEG),
        "contralateral_25deg": (CONTRALATERAL_LEFT, REGION_RADIUS_DEG)})
    high_band_hz: float = HIGH_BAND_HZ

    def band_means(self, ear: int = LEFT) -> np.ndarray:
        """Direction-averaged error per band."""
        return self.magnitude_db[ear].mean(axis=0)

    def direction_means(self, ear: int = LEFT) -> np.ndarray:
        """Frequency-averaged error per direction."""
        return self.magnitude_db[ear].mean(axis=1)

    def regional_band_means(self, name: str, ear: int = LEFT) -> np.ndarray:
        center, radius = self.regions[name]
        return regional_average(self.magnitude_db[ear], self.grid, center, radius)

    def band_table(self, ear: int = LEFT) -> list[dict]:
        cols = {"global": self.band_means(ear)}
        for name in self.regions:
            try:
                cols[name] = self.regional_band_means(name, ear)
            except MetricsError:
                cols[name] = np.full(len(self.center_freqs_hz), np.nan)
        return [{"band_fc_hz": float(fc), **{k: float(v[i]) for k, v in cols.items()}}
                for i, fc in enumerate(self.center_freqs_hz)]

    def summary(self, ear: int = LEFT, jnd: JndCurve = JndCurve()) -> dict:
        high = self.center_freqs_hz > self.high_band_hz
        per_dir = self.direction_means(ear)
        dg = {"global": float(per_dir.mean()),
              "global_above_4khz": float(self.magnitude_db[ear][:, high].mean()) if high.any() else None}
        for name, (center, radius) in self.regions.items():
            try:
                dg[name] = regional_average(per_dir, self.grid, center, radius)
                dg[f"{name}_above_4khz"] = regional_average(
                    self.magnitude_db[ear][:, high].mean(axis=1), self.grid, center, radius)
            except MetricsError:
                dg[name] = dg[f"{name}_above_4khz"] = None
        out = {"subject": self.subject_id, "ear": EARS[ear], "grid": self.grid.name,
               "num_directions": len(self.grid), "delta_g_db": dg}
        if self.ild_error_db is not None:
            out["delta_ild_db"] = {"mean": float(self.ild_error_db.mean()),
                                   "max": float(self.ild_error_db.max())}
        if self.itd_error_us is not None:
            out["delta_itd_us"] = {"mean": float(self.itd_error_us.mean()),
                                   "max": float(self.itd_error_us.max())}
        exc = jnd_exceedance(self, jnd)
        out["horizontal"] = {"num_directions": exc["num_directions"],
                             "ild_exceedance_fraction": exc.get("ild_fraction"),
                             "itd_exceedance_fraction": exc.get("itd_fraction")}
        return out

    def csv_rows(self):
        az, el = self.grid.azimuth_deg, self.grid.elevation_deg
        for ear in (0, 1):
            for d in range(len(self.grid)):
                for b, fc in enumerate(self.center_freqs_hz):
                    yield (self.subject_id, EARS[ear], az[d], el[d], fc, "delta_g_db",
                           self.magnitude_db[ear, d, b])
        for name, values in (("delta_ild_db", self.ild_error_db), ("delta_itd_us", self.itd_error_us)):
            if values is None:
                continue
            for d in range(len(self.grid)):
                yield (self.subject_id, "both", az[d], el[d], "", name, values[d])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.csv_rows():
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def band_table_csv(self, ear: int = LEFT) -> str:
        rows = self.band_table(ear)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(rows[0]))
        for r in rows:
            writer.writerow([_fmt(v) for v in r.values()])
        return buf.getvalue()

    def summary_json(self, ear: int = LEFT) -> str:
        return json.dumps(self.summary(ear), indent=2, sort_keys=True) + "\n"


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return repr(float(v))


def evaluate(test: HrirSet, reference: HrirSet, subject_id: str = "",
             bank: GammatoneBank | None = None, binaural: bool = True) -> EvaluationReport:
    check_compatible(test, reference)
    if bank is None:
        bank = design_bank(test.ir_length // 2 + 1, test.sample_rate_hz,
                           f_high=min(20000.0, test.sample_rate_hz / 2))
    dg = magnitude_error(test, reference, bank)
    ild_e = ild_error(test, reference) if binaural else None
    itd_e = itd_error(test, reference) if binaural else None
    return EvaluationReport(subject_id, test.grid, np.asarray(bank.center_freqs_hz), dg, ild_e, itd_e)
