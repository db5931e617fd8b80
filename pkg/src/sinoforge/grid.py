"""Core value types and the RAWF file format.

A RAWF object is a pair of files: ``<name>.raw`` holding the little-endian
payload and ``<name>.json`` holding a sidecar that describes it::

    {"format": "RAWF", "version": 1, "kind": "image",
     "width": 256, "height": 256, "spacing_mm": 0.0607,
     "dtype": "<f4", "checksum": "sha256:..."}

Images are stored row-major, sinograms angle-major (one view per row) with
``n_angles``, ``n_detectors``, ``detector_spacing_mm`` and ``angles_rad`` in
the sidecar, and masks as one unsigned byte per pixel.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, GeometryError, NumericalError, ValidationError

FORMAT_NAME = "RAWF"
FORMAT_VERSION = 1
MIN_SIZE = 8

_FLOAT = np.dtype("<f4")
_BYTE = np.dtype("u1")


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def _as_samples(values, what):
    arr = np.asarray(values)
    if arr.dtype.kind not in "biuf":
        raise ValidationError(f"{what} must be real-valued, got dtype {arr.dtype}")
    with np.errstate(over="ignore"):
        arr = arr.astype(np.float32)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} contains non-finite samples")
    return _frozen(arr)


def check_storable(values: np.ndarray, what: str) -> np.ndarray:
    """Raise :class:`NumericalError` if computed ``values`` do not fit float32 storage."""
    if not np.all(np.isfinite(values)) or np.abs(values).max(initial=0.0) > np.finfo(_FLOAT).max:
        raise NumericalError(f"{what} overflowed or produced non-finite values")
    return values


def _check_spacing(spacing_mm, what="spacing_mm"):
    spacing_mm = float(spacing_mm)
    if not (math.isfinite(spacing_mm) and spacing_mm > 0):
        raise ValidationError(f"{what} must be a positive finite number, got {spacing_mm}")
    return spacing_mm


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """2D attenuation image with isotropic physical pixel spacing.

    ``values`` has shape ``(height, width)`` and is stored as read-only
    float32, which is also the on-disk sample type, so write/read round trips
    are bit-exact.
    """

    values: np.ndarray
    spacing_mm: float = 1.0

    def __post_init__(self):
        arr = _as_samples(self.values, "image")
        if arr.ndim != 2:
            raise ValidationError(f"image must be 2D, got shape {arr.shape}")
        h, w = arr.shape
        if h < MIN_SIZE or w < MIN_SIZE:
            raise ValidationError(f"image must be at least {MIN_SIZE}x{MIN_SIZE}, got {w}x{h}")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "spacing_mm", _check_spacing(self.spacing_mm))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_values(self, values) -> "ImageGrid":
        return ImageGrid(values, self.spacing_mm)

    def checksum(self) -> str:
        return _checksum(self.values.astype(_FLOAT).tobytes())

    def __eq__(self, other):
        if not isinstance(other, ImageGrid):
            return NotImplemented
        return (self.spacing_mm == other.spacing_mm
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean companion of an :class:`ImageGrid` (segmentation compartment)."""

    values: np.ndarray
    spacing_mm: float = 1.0

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise ValidationError(f"mask must be 2D, got shape {arr.shape}")
        object.__setattr__(self, "values", _frozen(arr.astype(bool)))
        object.__setattr__(self, "spacing_mm", _check_spacing(self.spacing_mm))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def count(self) -> int:
        return int(np.count_nonzero(self.values))

    def checksum(self) -> str:
        return _checksum(self.values.astype(_BYTE).tobytes())

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return (self.spacing_mm == other.spacing_mm
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True, eq=False)
class Sinogram:
    """Angle-major projection data: ``values[i]`` is the view at ``angles_rad[i]``."""

    values: np.ndarray
    angles_rad: np.ndarray
    detector_spacing_mm: float = 1.0

    def __post_init__(self):
        arr = _as_samples(self.values, "sinogram")
        angles = np.asarray(self.angles_rad, dtype=np.float64).ravel()
        if arr.ndim != 2:
            raise ValidationError(f"sinogram must be 2D, got shape {arr.shape}")
        if arr.shape[0] != angles.shape[0]:
            raise ValidationError(
                f"sinogram has {arr.shape[0]} views but {angles.shape[0]} angles")
        if angles.size == 0 or not np.all(np.isfinite(angles)):
            raise ValidationError("sinogram angles must be finite and non-empty")
        if np.any(np.diff(angles) <= 0):
            raise ValidationError("sinogram angles must be strictly increasing")
        if angles[0] < 0 or angles[-1] > math.pi:
            raise ValidationError("sinogram angles must lie in [0, pi]")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "angles_rad", _frozen(angles))
        object.__setattr__(self, "detector_spacing_mm",
                           _check_spacing(self.detector_spacing_mm, "detector_spacing_mm"))

    @property
    def n_angles(self) -> int:
        return self.values.shape[0]

    @property
    def n_detectors(self) -> int:
        return self.values.shape[1]

    def with_values(self, values) -> "Sinogram":
        return Sinogram(values, self.angles_rad, self.detector_spacing_mm)

    def checksum(self) -> str:
        return _checksum(self.values.astype(_FLOAT).tobytes())

    def __eq__(self, other):
        if not isinstance(other, Sinogram):
            return NotImplemented
        return (self.detector_spacing_mm == other.detector_spacing_mm
                and np.array_equal(self.angles_rad, other.angles_rad)
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class ProjectionGeometry:
    """Parallel-beam acquisition: evenly spaced views and a centred detector."""

    n_angles: int
    n_detectors: int
    detector_spacing_mm: float = 1.0
    angle_start_rad: float = 0.0
    angle_end_rad: float = math.pi
    include_pi_endpoint: bool = True
    _angles: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_angles) != self.n_angles or self.n_angles < 2:
            raise GeometryError(f"n_angles must be an integer >= 2, got {self.n_angles}")
        if int(self.n_detectors) != self.n_detectors or self.n_detectors < 1:
            raise GeometryError(f"n_detectors must be a positive integer, got {self.n_detectors}")
        object.__setattr__(self, "n_angles", int(self.n_angles))
        object.__setattr__(self, "n_detectors", int(self.n_detectors))
        object.__setattr__(self, "detector_spacing_mm",
                           _check_spacing(self.detector_spacing_mm, "detector_spacing_mm"))
        start, end = float(self.angle_start_rad), float(self.angle_end_rad)
        if not (0.0 <= start < end <= math.pi):
            raise GeometryError(f"angular coverage [{start}, {end}] must lie within [0, pi]")
        if self.include_pi_endpoint and not math.isclose(end - start, math.pi, abs_tol=1e-12):
            raise GeometryError("include_pi_endpoint requires an angular coverage of exactly pi")
        angles = np.linspace(start, end, self.n_angles, endpoint=bool(self.include_pi_endpoint))
        object.__setattr__(self, "_angles", _frozen(angles))

    @property
    def angles(self) -> np.ndarray:
        return self._angles

    @property
    def detector_extent_mm(self) -> float:
        return self.n_detectors * self.detector_spacing_mm

    def check_sinogram(self, sino: Sinogram):
        if sino.n_detectors != self.n_detectors or sino.n_angles != self.n_angles:
            raise GeometryError(
                f"sinogram is {sino.n_angles}x{sino.n_detectors}, geometry expects "
                f"{self.n_angles}x{self.n_detectors}")
        if sino.detector_spacing_mm != self.detector_spacing_mm:
            raise GeometryError("sinogram detector spacing differs from geometry")
        if not np.allclose(sino.angles_rad, self.angles, rtol=0, atol=1e-12):
            raise GeometryError("sinogram angles differ from geometry")

    @classmethod
    def from_sinogram(cls, sino: Sinogram) -> "ProjectionGeometry":
        """Recover the evenly spaced geometry a sinogram was acquired with."""
        a = sino.angles_rad
        covers_pi = math.isclose(a[-1] - a[0], math.pi, abs_tol=1e-12)
        if covers_pi:
            geom = cls(sino.n_angles, sino.n_detectors, sino.detector_spacing_mm,
                       float(a[0]), float(a[-1]), True)
        else:
            step = (a[-1] - a[0]) / (len(a) - 1)
            geom = cls(sino.n_angles, sino.n_detectors, sino.detector_spacing_mm,
                       float(a[0]), float(a[-1] + step), False)
        geom.check_sinogram(sino)
        return geom

    def to_dict(self) -> dict:
        return {
            "n_angles": self.n_angles,
            "n_detectors": self.n_detectors,
            "detector_spacing_mm": self.detector_spacing_mm,
            "angle_start_rad": self.angle_start_rad,
            "angle_end_rad": self.angle_end_rad,
            "include_pi_endpoint": self.include_pi_endpoint,
        }


# ---------------------------------------------------------------------------
# RAWF I/O


def _checksum(payload: bytes) -> str:
    return "sha256:" + hashlib.sha256(payload).hexdigest()


def rawf_paths(path) -> tuple[Path, Path]:
    """Return ``(payload, sidecar)`` paths for ``path`` with or without suffix."""
    p = Path(path)
    if p.suffix in (".raw", ".json"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".raw"), p.with_name(p.name + ".json")


def _write_pair(path, payload: bytes, header: dict) -> str:
    raw_path, json_path = rawf_paths(path)
    checksum = _checksum(payload)
    header = {"format": FORMAT_NAME, "version": FORMAT_VERSION, **header, "checksum": checksum}
    raw_path.parent.mkdir(parents=True, exist_ok=True)
    with open(raw_path, "wb") as fh:
        fh.write(payload)
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return checksum


def read_header(path) -> dict:
    """Load and minimally validate a RAWF sidecar."""
    _, json_path = rawf_paths(path)
    try:
        with open(json_path, encoding="utf-8") as fh:
            header = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{json_path}: sidecar is not valid JSON ({exc})") from exc
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise FormatError(f"{json_path}: not a RAWF sidecar")
    if header.get("kind") not in ("image", "sinogram", "mask"):
        raise FormatError(f"{json_path}: unknown kind {header.get('kind')!r}")
    return header


def _read_payload(path, header: dict, dtype: np.dtype, count: int) -> np.ndarray:
    raw_path, _ = rawf_paths(path)
    with open(raw_path, "rb") as fh:
        payload = fh.read()
    if len(payload) != count * dtype.itemsize:
        raise CorruptionError(
            f"{raw_path}: payload has {len(payload)} bytes, sidecar implies {count * dtype.itemsize}")
    if _checksum(payload) != header.get("checksum"):
        raise CorruptionError(f"{raw_path}: checksum mismatch")
    return np.frombuffer(payload, dtype=dtype)


def _field(header, key, kind, path):
    try:
        value = header[key]
    except KeyError:
        raise FormatError(f"{path}: sidecar lacks {key!r}") from None
    if kind is int:
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise FormatError(f"{path}: {key!r} must be a non-negative integer")
    elif kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise FormatError(f"{path}: {key!r} must be a number")
        value = float(value)
    return value


def _expect_kind(header, kind, path):
    if header["kind"] != kind:
        raise FormatError(f"{path}: expected kind {kind!r}, sidecar says {header['kind']!r}")
    expected = _BYTE.str if kind == "mask" else _FLOAT.str
    if header.get("dtype", expected) != expected:
        raise FormatError(f"{path}: unsupported dtype {header.get('dtype')!r}")


def write_image(img: ImageGrid, path) -> str:
    """Write ``img`` as a RAWF pair; returns the payload checksum."""
    header = {"kind": "image", "width": img.width, "height": img.height,
              "spacing_mm": img.spacing_mm, "dtype": _FLOAT.str}
    return _write_pair(path, img.values.astype(_FLOAT).tobytes(), header)


def read_image(path) -> ImageGrid:
    header = read_header(path)
    _expect_kind(header, "image", path)
    w = _field(header, "width", int, path)
    h = _field(header, "height", int, path)
    spacing = _field(header, "spacing_mm", float, path)
    data = _read_payload(path, header, _FLOAT, w * h)
    return ImageGrid(data.reshape(h, w), spacing)


def write_mask(mask: BinaryMask, path) -> str:
    header = {"kind": "mask", "width": mask.width, "height": mask.height,
              "spacing_mm": mask.spacing_mm, "dtype": _BYTE.str}
    return _write_pair(path, mask.values.astype(_BYTE).tobytes(), header)


def read_mask(path) -> BinaryMask:
    header = read_header(path)
    _expect_kind(header, "mask", path)
    w = _field(header, "width", int, path)
    h = _field(header, "height", int, path)
    spacing = _field(header, "spacing_mm", float, path)
    data = _read_payload(path, header, _BYTE, w * h)
    if np.any(data > 1):
        raise CorruptionError(f"{path}: mask payload holds values other than 0/1")
    return BinaryMask(data.reshape(h, w).astype(bool), spacing)


def write_sinogram(sino: Sinogram, path) -> str:
    header = {"kind": "sinogram", "n_angles": sino.n_angles, "n_detectors": sino.n_detectors,
              "detector_spacing_mm": sino.detector_spacing_mm,
              "angles_rad": [float(a) for a in sino.angles_rad], "dtype": _FLOAT.str}
    return _write_pair(path, sino.values.astype(_FLOAT).tobytes(), header)


def read_sinogram(path) -> Sinogram:
    header = read_header(path)
    _expect_kind(header, "sinogram", path)
    n_angles = _field(header, "n_angles", int, path)
    n_det = _field(header, "n_detectors", int, path)
    spacing = _field(header, "detector_spacing_mm", float, path)
    angles = header.get("angles_rad")
    if not isinstance(angles, list) or len(angles) != n_angles:
        raise CorruptionError(f"{path}: angle list does not match n_angles")
    data = _read_payload(path, header, _FLOAT, n_angles * n_det)
    return Sinogram(data.reshape(n_angles, n_det), angles, spacing)


def read_any(path):
    """Read whichever RAWF kind the sidecar declares."""
    kind = read_header(path)["kind"]
    return {"image": read_image, "sinogram": read_sinogram, "mask": read_mask}[kind](path)


def verify_checksum(path, expected: str | None = None) -> bool:
    """True when the payload hashes to the sidecar's (or ``expected``) checksum."""
    raw_path, _ = rawf_paths(path)
    if not raw_path.exists():
        return False
    with open(raw_path, "rb") as fh:
        actual = _checksum(fh.read())
    if expected is None:
        expected = read_header(path).get("checksum")
    return actual == expected


def export_png(img: ImageGrid, path, window: tuple[float, float]) -> None:
    """Write a 16-bit grayscale PNG, mapping ``window`` affinely onto [0, 65535].

    Values outside the window are clamped; rounding is half-to-even.
    """
    from PIL import Image

    lo, hi = (float(v) for v in window)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValidationError(f"invalid window ({lo}, {hi}): need finite min < max")
    scaled = (img.values.astype(np.float64) - lo) / (hi - lo) * 65535.0
    counts = np.rint(np.clip(scaled, 0.0, 65535.0)).astype(np.uint16)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray(counts).save(path, format="PNG")
