"""Real spherical harmonics, forward and inverse transforms.

Convention: orthonormal (N3D) real harmonics without the Condon-Shortley
phase, ACN channel ordering (column ``n*n + n + m``). For ``m > 0`` the
harmonic carries ``cos(m * azimuth)``, for ``m < 0`` ``sin(|m| * azimuth)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Direction, SphericalGrid

MAX_CONDITION = 1e8

QUADRATURE = "quadrature"
LEAST_SQUARES = "least_squares"


class ShError(ValueError):
    pass


def num_coeffs(order: int) -> int:
    return (order + 1) ** 2


def acn(n: int, m: int) -> int:
    return n * n + n + m


def _normalized_legendre(order: int, sin_el: np.ndarray, cos_el: np.ndarray) -> np.ndarray:
    """Fully normalised associated Legendre values P̄_n^m(sin el), m >= 0.

    Returns an array ``[Q, order+1, order+1]`` indexed ``[q, n, m]`` and
    including the ``1/sqrt(4 pi)`` factor, so that ``P̄_n^0`` equals the
    zonal harmonic. The sectoral seed is renormalised at every step, which
    keeps the recursion finite far beyond the orders used here.
    """
    q = sin_el.shape[0]
    p = np.zeros((q, order + 1, order + 1))
    p[:, 0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    for m in range(1, order + 1):
        p[:, m, m] = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * cos_el * p[:, m - 1, m - 1]
    for m in range(0, order):
        p[:, m + 1, m] = np.sqrt(2.0 * m + 3.0) * sin_el * p[:, m, m]
    for m in range(0, order + 1):
        for n in range(m + 2, order + 1):
            a = np.sqrt((4.0 * n * n - 1.0) / (n * n - m * m))
            b = np.sqrt(((n - 1.0) ** 2 - m * m) / (4.0 * (n - 1.0) ** 2 - 1.0))
            p[:, n, m] = a * (sin_el * p[:, n - 1, m] - b * p[:, n - 2, m])
    return p


def real_sh_matrix(order: int, azimuth: np.ndarray, elevation: np.ndarray) -> np.ndarray:
    """Evaluate all real harmonics up to ``order`` at angles given in radians.

    Returns a ``[Q, (order+1)**2]`` matrix.
    """
    if order < 0:
        raise ShError(f"SH order must be >= 0, got {order}")
    azimuth = np.atleast_1d(np.asarray(azimuth, dtype=float))
    elevation = np.atleast_1d(np.asarray(elevation, dtype=float))
    sin_el = np.sin(elevation)
    cos_el = np.cos(elevation)
    # clamp round-off at the poles so the north-pole zeros are exact
    pole = np.abs(np.abs(elevation) - np.pi / 2) < 1e-15
    cos_el = np.where(pole, 0.0, cos_el)
    sin_el = np.where(pole, np.sign(sin_el), sin_el)
    p = _normalized_legendre(order, sin_el, cos_el)
    out = np.empty((azimuth.shape[0], num_coeffs(order)))
    sqrt2 = np.sqrt(2.0)
    for n in range(order + 1):
        out[:, acn(n, 0)] = p[:, n, 0]
        for m in range(1, n + 1):
            out[:, acn(n, m)] = sqrt2 * p[:, n, m] * np.cos(m * azimuth)
            out[:, acn(n, -m)] = sqrt2 * p[:, n, m] * np.sin(m * azimuth)
    return out


@dataclass(frozen=True)
class ShBasisMatrix:
    order: int
    directions: tuple[Direction, ...]
    values: np.ndarray


def sh_basis(order: int, directions) -> ShBasisMatrix:
    """Basis matrix for a grid or a sequence of :class:`Direction`."""
    if isinstance(directions, SphericalGrid):
        directions = directions.directions
    directions = tuple(directions)
    az = np.radians([d.azimuth_deg for d in directions])
    el = np.radians([d.elevation_deg for d in directions])
    return ShBasisMatrix(order, directions, real_sh_matrix(order, az, el))


@dataclass(frozen=True)
class ShCoefficients:
    """SH coefficients per ear, ``data[ear, coeff, bin]``."""

    order: int
    data: np.ndarray
    sample_rate_hz: float | None = None

    def __post_init__(self):
        if self.data.shape[-2] != num_coeffs(self.order):
            raise ShError(
                f"coefficient rows {self.data.shape[-2]} != (N+1)^2 = {num_coeffs(self.order)}")
        if not np.all(np.isfinite(self.data)):
            raise ShError("SH coefficients contain non-finite values")

    @property
    def num_bins(self) -> int:
        return self.data.shape[-1]


def default_mode(grid: SphericalGrid) -> str:
    return QUADRATURE if grid.weights is not None else LEAST_SQUARES


def analysis_matrix(grid: SphericalGrid, order: int, mode: str | None = None) -> np.ndarray:
    """Matrix ``[(N+1)^2, Q]`` mapping grid samples to SH coefficients."""
    mode = mode or default_mode(grid)
    if len(grid) < num_coeffs(order):
        raise ShError(
            f"grid {grid.name!r} has {len(grid)} directions, fewer than the "
            f"{num_coeffs(order)} coefficients of order {order}")
    y = grid.sh_matrix(order)
    if mode == QUADRATURE:
        if grid.weights is None:
            raise ShError(f"grid {grid.name!r} has no weights; quadrature mode unavailable")
        return (y * (4.0 * np.pi * np.asarray(grid.weights))[:, None]).T
    if mode == LEAST_SQUARES:
        cond = np.linalg.cond(y)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise ShError(
                f"least-squares SH system for grid {grid.name!r} at order {order} is "
                f"rank deficient (condition number {cond:.3g})")
        return np.linalg.pinv(y)
    raise ShError(f"unknown SH transform mode {mode!r}")


def forward(values: np.ndarray, grid: SphericalGrid, order: int, mode: str | None = None) -> np.ndarray:
    """Transform samples ``[..., Q, K]`` on ``grid`` to coefficients ``[..., C, K]``."""
    return analysis_matrix(grid, order, mode) @ values


def inverse(coeffs: np.ndarray, grid: SphericalGrid, order: int) -> np.ndarray:
    """Evaluate coefficients ``[..., C, K]`` at the grid directions, ``[..., Q, K]``."""
    return grid.sh_matrix(order) @ coeffs


def sh_transform(hrtf, order: int, mode: str | None = None) -> ShCoefficients:
    """Per-bin SH coefficients of both ears of an :class:`~mcainterp.sets.HrtfSet`."""
    data = forward(hrtf.spectra, hrtf.grid, order, mode)
    return ShCoefficients(order, data, hrtf.sample_rate_hz)


def sh_inverse(coeffs: ShCoefficients, target: SphericalGrid):
    from .sets import HrtfSet

    spectra = inverse(coeffs.data, target, coeffs.order)
    return HrtfSet(target, coeffs.sample_rate_hz, spectra)
