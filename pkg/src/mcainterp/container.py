"""Native binary containers for HRIR sets and correction filters.

Layout shared by both formats::

    magic      4 bytes   b"MCAH" (HRIRs) or b"MCAF" (filters)
    version    uint32 LE
    hdr_len    uint32 LE
    header     hdr_len bytes of UTF-8 JSON
    payload    little-endian floats

HRIR payloads are float32, ordered direction-major, then left/right, then
samples. Filter payloads are float64 gains in dB, ordered ear-major, then
direction, then bin, so a filter file round trips bit-exactly.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .grids import GridError, SphericalGrid
from .pipeline import CorrectionFilterSet, Limiter
from .sets import EARS, HrirSet

HRIR_MAGIC = b"MCAH"
FILTER_MAGIC = b"MCAF"
VERSION = 1
PREAMBLE = struct.Struct("<4sII")
HRIR_DTYPE = np.dtype("<f4")
FILTER_DTYPE = np.dtype("<f8")
MAX_HEADER_BYTES = 1 << 28


class ContainerError(Exception):
    """Malformed container; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int | None = None, path=None):
        where = f" at byte {offset}" if offset is not None else ""
        src = f"{path}: " if path is not None else ""
        super().__init__(f"{src}{message}{where}")
        self.offset = offset
        self.path = path


class MagicError(ContainerError):
    pass


class VersionError(ContainerError):
    pass


class TruncatedError(ContainerError):
    pass


class HeaderError(ContainerError):
    pass


class PayloadLengthError(ContainerError):
    pass


class TruncatedPayloadError(PayloadLengthError, TruncatedError):
    pass


class NonFiniteError(ContainerError):
    pass


# ------------------------------------------------------------------ framing

def _frame(magic: bytes, header: dict, payload: bytes) -> bytes:
    text = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()
    return PREAMBLE.pack(magic, VERSION, len(text)) + text + payload


def _write_atomic(path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _unframe(data: bytes, magic: bytes, path) -> tuple[dict, int]:
    """Parse preamble and header; returns the header and the payload offset."""
    if len(data) < PREAMBLE.size:
        raise TruncatedError(f"file of {len(data)} bytes ends inside the {PREAMBLE.size}-byte preamble",
                             len(data), path)
    got, version, hdr_len = PREAMBLE.unpack_from(data)
    if got != magic:
        raise MagicError(f"magic mismatch: expected {magic!r}, found {got!r}", 0, path)
    if version != VERSION:
        raise VersionError(f"unsupported version {version} (this reader handles {VERSION})", 4, path)
    if hdr_len > MAX_HEADER_BYTES:
        raise HeaderError(f"implausible header length {hdr_len}", 8, path)
    end = PREAMBLE.size + hdr_len
    if len(data) < end:
        raise TruncatedError(f"header of {hdr_len} bytes truncated: file ends", len(data), path)
    try:
        header = json.loads(data[PREAMBLE.size:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"header is not valid JSON ({exc})", PREAMBLE.size, path) from exc
    if not isinstance(header, dict):
        raise HeaderError("header must be a JSON object", PREAMBLE.size, path)
    return header, end


def _field(header: dict, key: str, kind, offset: int, path):
    if key not in header:
        raise HeaderError(f"header lacks required field {key!r}", offset, path)
    value = header[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise HeaderError(f"header field {key!r} must be an integer, got {value!r}", offset, path)
    if kind is float and (isinstance(value, bool) or not isinstance(value, (int, float))):
        raise HeaderError(f"header field {key!r} must be a number, got {value!r}", offset, path)
    return value


def _payload(data: bytes, start: int, count: int, dtype: np.dtype, path) -> np.ndarray:
    expected = count * dtype.itemsize
    found = len(data) - start
    if found != expected:
        cls = TruncatedPayloadError if found < expected else PayloadLengthError
        raise cls(
            f"payload length mismatch: header implies {expected} bytes starting at byte {start}, "
            f"found {found}", start + min(found, expected), path)
    return np.frombuffer(data, dtype=dtype, count=count, offset=start)


def _grid_from_header(header: dict, offset: int, path) -> SphericalGrid:
    grid_data = {"directions": header.get("directions"), "weights": header.get("weights"),
                 "nominal_order": header.get("grid_order"), "name": header.get("grid_name", "custom"),
                 "signed_weights": header.get("signed_weights", False)}
    try:
        return SphericalGrid.from_dict(grid_data)
    except GridError as exc:
        raise HeaderError(f"invalid directions: {exc}", offset, path) from exc


def _grid_header(grid: SphericalGrid) -> dict:
    d = grid.to_dict()
    out = {"directions": d["directions"], "grid_name": d["name"]}
    if d["weights"] is not None:
        out["weights"] = [float(w) for w in d["weights"]]
    if d["nominal_order"] is not None:
        out["grid_order"] = d["nominal_order"]
    if d.get("signed_weights"):
        out["signed_weights"] = True
    return out


def _jsonable(obj):
    """Metadata with numpy values converted to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ------------------------------------------------------------------ HRIR sets

def write_container(hrirs: HrirSet, path, subject_id: str | None = None,
                    head_dims: dict | None = None):
    """Write ``hrirs`` as float32; values are rounded to single precision."""
    samples = np.asarray(hrirs.samples)
    num_dirs, ir_len = samples.shape[1], samples.shape[2]
    meta = dict(hrirs.metadata)
    subject_id = subject_id if subject_id is not None else meta.pop("subject_id", None)
    head_dims = head_dims if head_dims is not None else meta.pop("head_dims", None)
    header = {"sample_rate_hz": float(hrirs.sample_rate_hz), "ir_length_samples": ir_len,
              "num_directions": num_dirs, **_grid_header(hrirs.grid), "metadata": _jsonable(meta)}
    if subject_id is not None:
        header["subject_id"] = str(subject_id)
    if head_dims is not None:
        header["head"] = {k: float(head_dims[k]) for k in ("width_m", "height_m", "depth_m")}
    payload = np.ascontiguousarray(samples.transpose(1, 0, 2), dtype=HRIR_DTYPE).tobytes()
    _write_atomic(path, _frame(HRIR_MAGIC, header, payload))


def read_container(path) -> HrirSet:
    data = Path(path).read_bytes()
    header, start = _unframe(data, HRIR_MAGIC, path)
    at = PREAMBLE.size
    fs = _field(header, "sample_rate_hz", float, at, path)
    ir_len = _field(header, "ir_length_samples", int, at, path)
    num_dirs = _field(header, "num_directions", int, at, path)
    if fs <= 0 or ir_len < 2 or ir_len % 2 or num_dirs < 1:
        raise HeaderError(f"invalid dimensions: fs={fs}, ir_length={ir_len}, directions={num_dirs}",
                          at, path)
    dirs = header.get("directions")
    if not isinstance(dirs, list) or len(dirs) != num_dirs:
        n = len(dirs) if isinstance(dirs, list) else "no"
        raise HeaderError(f"header declares {num_dirs} directions but lists {n}", at, path)
    grid = _grid_from_header(header, at, path)
    flat = _payload(data, start, num_dirs * 2 * ir_len, HRIR_DTYPE, path)
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        i = int(bad[0])
        d, rest = divmod(i, 2 * ir_len)
        ear, t = divmod(rest, ir_len)
        raise NonFiniteError(f"non-finite sample {flat[i]} (direction {d}, {EARS[ear]} ear, "
                             f"sample {t}; {bad.size} in total)", start + i * HRIR_DTYPE.itemsize, path)
    samples = flat.reshape(num_dirs, 2, ir_len).transpose(1, 0, 2).astype(np.float64)
    meta = dict(header.get("metadata") or {})
    if "subject_id" in header:
        meta["subject_id"] = header["subject_id"]
    if "head" in header:
        meta["head_dims"] = header["head"]
    return HrirSet(grid, float(fs), samples, meta)


def read_header(path) -> dict:
    """Header of an HRIR or filter container without reading the payload checks."""
    data = Path(path).read_bytes()
    magic = data[:4]
    header, start = _unframe(data, FILTER_MAGIC if magic == FILTER_MAGIC else HRIR_MAGIC, path)
    return {"magic": magic.decode("ascii"), "version": VERSION, "payload_offset": start,
            "payload_bytes": len(data) - start, **header}


# ------------------------------------------------------------------ filters

def export_filters(filters: CorrectionFilterSet, path):
    gains = np.asarray(filters.gains_db)
    header = {"sample_rate_hz": float(filters.sample_rate_hz), "num_bins": int(gains.shape[2]),
              "num_directions": int(gains.shape[1]), **_grid_header(filters.grid),
              "aliasing_freq_hz": float(filters.aliasing_freq_hz),
              "fade_low_hz": float(filters.fade_low_hz),
              "fade_high_hz": float(filters.aliasing_freq_hz),
              "enable_aliasing_fade": bool(filters.enable_aliasing_fade),
              "limiter": None if filters.limiter is None else filters.limiter.to_dict(),
              "phase_mode": filters.phase_mode, "sparse_order": filters.sparse_order}
    payload = np.ascontiguousarray(gains, dtype=FILTER_DTYPE).tobytes()
    _write_atomic(path, _frame(FILTER_MAGIC, header, payload))


def import_filters(path) -> CorrectionFilterSet:
    data = Path(path).read_bytes()
    header, start = _unframe(data, FILTER_MAGIC, path)
    at = PREAMBLE.size
    num_bins = _field(header, "num_bins", int, at, path)
    num_dirs = _field(header, "num_directions", int, at, path)
    grid = _grid_from_header(header, at, path)
    if len(grid) != num_dirs:
        raise HeaderError(f"header declares {num_dirs} directions but lists {len(grid)}", at, path)
    gains = _payload(data, start, 2 * num_dirs * num_bins, FILTER_DTYPE, path)
    lim = header.get("limiter")
    try:
        limiter = None if lim is None else Limiter(float(lim["limit_db"]), float(lim["knee_db"]))
        return CorrectionFilterSet(grid, float(_field(header, "sample_rate_hz", float, at, path)),
                                   gains.reshape(2, num_dirs, num_bins).copy(),
                                   float(_field(header, "aliasing_freq_hz", float, at, path)),
                                   float(_field(header, "fade_low_hz", float, at, path)),
                                   bool(header.get("enable_aliasing_fade", True)), limiter,
                                   header.get("phase_mode", "minimum"), header.get("sparse_order"))
    except (KeyError, TypeError, ValueError) as exc:
        raise HeaderError(f"invalid filter header: {exc}", at, path) from exc


# ------------------------------------------------------------------ grids

def write_grid(grid: SphericalGrid, path):
    _write_atomic(path, grid.to_json().encode())


def read_grid(path) -> SphericalGrid:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise GridError(f"{path}: not a text file") from exc
    return SphericalGrid.from_json(text)
