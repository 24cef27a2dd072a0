"""Spherical sampling grids.

Azimuth runs counter-clockwise from the front (90 deg is left, 270 deg right),
elevation is measured from the horizontal plane (+90 deg is above). Angles are
degrees in every public field; the SH code receives radians.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.integrate import lebedev_rule


class GridError(ValueError):
    pass


DUPLICATE_TOL_RAD = 1e-9
WEIGHT_SUM_TOL = 1e-10

# SH order -> Lebedev precision (degree 2N+1); the set is limited to the rules
# scipy ships, so orders 16, 18, 19, ... are absent.
LEBEDEV_DEGREES = (3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31,
                   35, 41, 47, 53, 59, 65)
LEBEDEV_ORDERS = tuple((d - 1) // 2 for d in LEBEDEV_DEGREES)

FLIEGE_FILE = "fliege.npz"
FLIEGE_SHA256 = "a58d4f533bebb6443f6e327dfa0b7a96e17342e04b90b44e383359b806e168b9"
FLIEGE_SIZES = tuple((n + 1) ** 2 for n in range(1, 30))


@dataclass(frozen=True)
class Direction:
    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        el = float(self.elevation_deg)
        if not -90.0 <= el <= 90.0 or math.isnan(el):
            raise GridError(f"elevation {el} outside [-90, 90]")
        az = float(self.azimuth_deg) % 360.0
        if az == 360.0:
            az = 0.0
        object.__setattr__(self, "azimuth_deg", az)
        object.__setattr__(self, "elevation_deg", el)

    def unit_vector(self) -> np.ndarray:
        return unit_vectors([self.azimuth_deg], [self.elevation_deg])[0]


def unit_vectors(azimuth_deg, elevation_deg) -> np.ndarray:
    az = np.radians(np.asarray(azimuth_deg, dtype=float))
    el = np.radians(np.asarray(elevation_deg, dtype=float))
    return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)


def great_circle_distance(a: Direction, b: Direction) -> float:
    """Angle between two directions in degrees, in [0, 180]."""
    return float(angular_distances(a, [b.azimuth_deg], [b.elevation_deg])[0])


def angular_distances(center: Direction, azimuth_deg, elevation_deg) -> np.ndarray:
    # haversine form stays accurate for small angles
    p1, l1 = math.radians(center.elevation_deg), math.radians(center.azimuth_deg)
    p2 = np.radians(np.asarray(elevation_deg, dtype=float))
    l2 = np.radians(np.asarray(azimuth_deg, dtype=float))
    h = np.sin((p2 - p1) / 2) ** 2 + math.cos(p1) * np.cos(p2) * np.sin((l2 - l1) / 2) ** 2
    return np.degrees(2.0 * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0))))


@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """Ordered set of directions with optional quadrature weights (sum 1)."""

    directions: tuple[Direction, ...]
    weights: tuple[float, ...] | None = None
    nominal_order: int | None = None
    name: str = "custom"
    # a few published Lebedev rules carry negative weights; only they opt in
    signed_weights: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        directions = tuple(d if isinstance(d, Direction) else Direction(*d)
                           for d in self.directions)
        object.__setattr__(self, "directions", directions)
        if not directions:
            raise GridError("grid has no directions")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (len(directions),):
                raise GridError(f"{w.size} weights for {len(directions)} directions")
            if not np.all(np.isfinite(w)) or np.any(w == 0) or (
                    not self.signed_weights and np.any(w < 0)):
                raise GridError("quadrature weights must be finite and positive")
            if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
                w = w / w.sum()
            object.__setattr__(self, "weights", tuple(float(x) for x in w))
        if self.nominal_order is not None and self.nominal_order < 0:
            raise GridError("nominal order must be >= 0")
        self._check_duplicates()

    def _check_duplicates(self):
        u = self.unit_vectors
        if len(u) < 2:
            return
        # sort along a random-ish axis, compare near neighbours only
        key = u @ np.array([0.5773502691896258, 0.5773502691896257, 0.5773502691896258])
        order = np.argsort(key)
        us, ks = u[order], key[order]
        for shift in range(1, len(us)):
            close = np.abs(ks[shift:] - ks[:-shift]) <= 2 * DUPLICATE_TOL_RAD
            if not np.any(close):
                break
            idx = np.nonzero(close)[0]
            d = np.linalg.norm(us[idx + shift] - us[idx], axis=1)
            if np.any(d < DUPLICATE_TOL_RAD):
                i = order[idx[np.argmin(d)]]
                raise GridError(f"duplicate direction in grid {self.name!r}: {self.directions[i]}")

    def __len__(self):
        return len(self.directions)

    def __eq__(self, other):
        if not isinstance(other, SphericalGrid):
            return NotImplemented
        return (self.directions == other.directions and self.weights == other.weights
                and self.nominal_order == other.nominal_order and self.name == other.name)

    def __hash__(self):
        return hash((self.directions, self.name))

    @property
    def azimuth_deg(self) -> np.ndarray:
        return np.array([d.azimuth_deg for d in self.directions])

    @property
    def elevation_deg(self) -> np.ndarray:
        return np.array([d.elevation_deg for d in self.directions])

    @property
    def unit_vectors(self) -> np.ndarray:
        if "xyz" not in self._cache:
            self._cache["xyz"] = unit_vectors(self.azimuth_deg, self.elevation_deg)
        return self._cache["xyz"]

    def sh_matrix(self, order: int) -> np.ndarray:
        key = ("Y", order)
        if key not in self._cache:
            from .sh import real_sh_matrix

            y = real_sh_matrix(order, np.radians(self.azimuth_deg), np.radians(self.elevation_deg))
            y.setflags(write=False)
            self._cache[key] = y
        return self._cache[key]

    def same_directions(self, other: "SphericalGrid", tol_deg: float = 1e-9) -> bool:
        if len(self) != len(other):
            return False
        d = np.linalg.norm(self.unit_vectors - other.unit_vectors, axis=1)
        return bool(np.all(d <= np.radians(tol_deg)))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "nominal_order": self.nominal_order,
            "directions": [[d.azimuth_deg, d.elevation_deg] for d in self.directions],
            "weights": None if self.weights is None else list(self.weights),
        } | ({"signed_weights": True} if self.signed_weights else {})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "SphericalGrid":
        try:
            dirs = [Direction(float(a), float(e)) for a, e in data["directions"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise GridError(f"malformed grid description: {exc}") from exc
        weights = data.get("weights")
        return cls(tuple(dirs), None if weights is None else tuple(weights),
                   data.get("nominal_order"), data.get("name", "custom"),
                   bool(data.get("signed_weights", False)))

    @classmethod
    def from_json(cls, text: str) -> "SphericalGrid":
        return cls.from_dict(json.loads(text))


def _from_arrays(az, el, weights, order, name, signed=False) -> SphericalGrid:
    dirs = tuple(Direction(float(a), float(e)) for a, e in zip(az, el))
    w = None if weights is None else tuple(float(x) for x in weights)
    return SphericalGrid(dirs, w, order, name, signed)


@lru_cache(maxsize=None)
def lebedev_grid(order: int) -> SphericalGrid:
    """Lebedev rule exact for spherical polynomials of degree ``2*order + 1``."""
    if order not in LEBEDEV_ORDERS:
        raise GridError(f"no Lebedev rule for order {order}; supported orders: "
                        f"{', '.join(map(str, LEBEDEV_ORDERS))}")
    x, w = lebedev_rule(2 * order + 1)
    az = np.degrees(np.arctan2(x[1], x[0])) % 360.0
    el = np.degrees(np.arcsin(np.clip(x[2], -1.0, 1.0)))
    # exact axis points so pole symmetry tests see clean zeros
    az = np.where(np.abs(az - np.round(az)) < 1e-12, np.round(az), az) % 360.0
    el = np.where(np.abs(el - np.round(el)) < 1e-12, np.round(el), el)
    return _from_arrays(az, el, w / w.sum(), order, f"lebedev-{order}", bool(np.any(w < 0)))


def lebedev_order_at_least(order: int) -> int:
    for n in LEBEDEV_ORDERS:
        if n >= order:
            return n
    raise GridError(f"no Lebedev rule reaches order {order}")


@lru_cache(maxsize=1)
def _fliege_tables() -> dict[str, np.ndarray]:
    try:
        blob = resources.files("mcainterp.data").joinpath(FLIEGE_FILE).read_bytes()
    except OSError as exc:
        raise GridError(f"Fliege table {FLIEGE_FILE} unavailable: {exc}") from exc
    digest = hashlib.sha256(blob).hexdigest()
    if digest != FLIEGE_SHA256:
        raise GridError(f"Fliege table checksum mismatch ({digest})")
    import io

    with np.load(io.BytesIO(blob)) as npz:
        return {k: npz[k] for k in npz.files}


@lru_cache(maxsize=None)
def fliege_grid(num_points: int) -> SphericalGrid:
    if num_points not in FLIEGE_SIZES:
        raise GridError(f"no Fliege grid with {num_points} points; supported sizes: "
                        f"{', '.join(map(str, FLIEGE_SIZES))}")
    table = _fliege_tables()[f"n{num_points}"]
    order = math.isqrt(num_points) - 1
    return _from_arrays(table[:, 0], table[:, 1], table[:, 2], order, f"fliege-{num_points}")


def horizontal_grid(step_deg: float) -> SphericalGrid:
    count = 360.0 / step_deg if step_deg > 0 else math.nan
    if not (count > 0 and abs(count - round(count)) < 1e-9):
        raise GridError(f"360 is not an integer multiple of step {step_deg}")
    count = int(round(count))
    return _from_arrays([k * step_deg for k in range(count)], [0.0] * count, None, None,
                        f"horizontal-{step_deg:g}")


def parse_grid_spec(spec: str) -> SphericalGrid:
    """Resolve ``lebedev:N``, ``fliege:P``, ``horizontal:STEP`` or a JSON path."""
    kind, _, arg = spec.partition(":")
    kind = kind.lower()
    try:
        if kind == "lebedev":
            return lebedev_grid(int(arg))
        if kind == "fliege":
            return fliege_grid(int(arg))
        if kind == "horizontal":
            return horizontal_grid(float(arg))
    except ValueError as exc:
        if isinstance(exc, GridError):
            raise
        raise GridError(f"bad grid spec {spec!r}") from exc
    try:
        with open(spec, encoding="utf-8") as fh:
            return SphericalGrid.from_json(fh.read())
    except OSError as exc:
        raise GridError(f"grid spec {spec!r} is neither a known grid nor a readable file") from exc
