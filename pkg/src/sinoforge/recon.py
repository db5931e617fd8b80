"""SIRT and filtered backprojection reconstruction."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import GeometryError, NumericalError, ValidationError
from .grid import ImageGrid, ProjectionGeometry, Sinogram, check_storable
from .projector import backproject_array, check_coverage, project_array

REDUCED_ITERATIONS = 50
CONVERGED_ITERATIONS = 400
# weight sums at or below this fraction of the largest sum count as zero
ZERO_SUM_RTOL = 1e-9
FILTERS = ("ramlak", "hann")


@dataclass(frozen=True)
class SirtConfig:
    n_iterations: int = REDUCED_ITERATIONS
    relaxation: float = 1.0
    nonneg: bool = True
    circle: bool = True
    init: str = "zeros"

    def __post_init__(self):
        if int(self.n_iterations) != self.n_iterations or self.n_iterations < 1:
            raise ValidationError(f"n_iterations must be an integer >= 1, got {self.n_iterations}")
        if not 0 < self.relaxation <= 2:
            raise ValidationError(f"relaxation must lie in (0, 2], got {self.relaxation}")
        if self.init != "zeros":
            raise ValidationError(f"unsupported init {self.init!r}; only 'zeros'")

    def to_dict(self) -> dict:
        return asdict(self)


def _dims(dims) -> tuple[int, int]:
    if isinstance(dims, ImageGrid):
        return dims.shape
    if isinstance(dims, (int, np.integer)):
        return int(dims), int(dims)
    h, w = (int(n) for n in dims)
    return h, w


def _check_inputs(sino: Sinogram, geom: ProjectionGeometry, shape, spacing_mm):
    try:
        geom.check_sinogram(sino)
        check_coverage(shape, spacing_mm, geom)
    except GeometryError as exc:
        raise ValidationError(str(exc)) from exc


def circle_mask(shape) -> np.ndarray:
    """Pixels whose centres lie strictly inside the inscribed circle."""
    h, w = shape
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    r = np.hypot(x - (w - 1) / 2.0, y - (h - 1) / 2.0)
    return r < min(h, w) / 2.0


def _safe_reciprocal(sums: np.ndarray) -> np.ndarray:
    out = np.zeros_like(sums)
    peak = sums.max() if sums.size else 0.0
    ok = sums > peak * ZERO_SUM_RTOL
    out[ok] = 1.0 / sums[ok]
    return out


def sirt_weights(geom: ProjectionGeometry, shape, spacing_mm: float, circle: bool = True):
    """Return ``(W, C, support)``: reciprocal ray sums, reciprocal pixel sums, mask."""
    support = circle_mask(shape) if circle else np.ones(shape, dtype=bool)
    ray_sums = project_array(support.astype(np.float64), spacing_mm, geom)
    pixel_sums = backproject_array(np.ones((geom.n_angles, geom.n_detectors)),
                                   spacing_mm, geom, shape)
    return _safe_reciprocal(ray_sums), _safe_reciprocal(pixel_sums) * support, support


def sirt_array(sino_values: np.ndarray, geom: ProjectionGeometry, shape, spacing_mm: float,
               cfg: SirtConfig, callback=None) -> np.ndarray:
    """Run ``cfg.n_iterations`` SIRT updates from zeros on raw arrays.

    ``f <- f + relaxation * C * R^T (W * (s - R f))`` followed by clamping at 0
    when ``cfg.nonneg``. ``callback(k, f)`` is called after every iteration.
    """
    s = np.asarray(sino_values, dtype=np.float64)
    ray_w, pix_c, _ = sirt_weights(geom, shape, spacing_mm, cfg.circle)
    step = cfg.relaxation * pix_c
    f = np.zeros(shape, dtype=np.float64)
    for k in range(1, cfg.n_iterations + 1):
        resid = s - project_array(f, spacing_mm, geom)
        f += step * backproject_array(ray_w * resid, spacing_mm, geom, shape)
        if cfg.nonneg:
            np.maximum(f, 0.0, out=f)
        if not np.all(np.isfinite(f)):
            raise NumericalError(f"SIRT produced non-finite values at iteration {k}", iteration=k)
        if callback is not None:
            callback(k, f)
    return f


def sirt_reconstruct(sino: Sinogram, geom: ProjectionGeometry, dims,
                     cfg: SirtConfig = SirtConfig(), spacing_mm: float | None = None) -> ImageGrid:
    """Iterative SIRT reconstruction onto a ``dims`` grid.

    ``spacing_mm`` defaults to the detector pitch (or the spacing of ``dims``
    when it is an :class:`ImageGrid`).
    """
    shape = _dims(dims)
    if spacing_mm is None:
        spacing_mm = dims.spacing_mm if isinstance(dims, ImageGrid) else geom.detector_spacing_mm
    _check_inputs(sino, geom, shape, spacing_mm)
    f = sirt_array(sino.values, geom, shape, spacing_mm, cfg)
    return ImageGrid(check_storable(f, "SIRT reconstruction"), spacing_mm)


def ramp_filter(n_det: int, det_spacing_mm: float, kind: str = "ramlak") -> tuple[np.ndarray, int]:
    """Frequency response of the band-limited ramp on a zero-padded grid.

    Built from the spatial-domain Ram-Lak kernel so the DC term is correct.
    Returns ``(response, padded_length)``.
    """
    if kind not in FILTERS:
        raise ValidationError(f"unknown filter {kind!r}; expected one of {FILTERS}")
    size = max(64, 1 << int(math.ceil(math.log2(2 * n_det))))
    n = np.concatenate([np.arange(0, size // 2 + 1), np.arange(size // 2 - 1, 0, -1)])
    h = np.zeros(size)
    h[0] = 1.0 / (4.0 * det_spacing_mm ** 2)
    odd = n % 2 == 1
    h[odd] = -1.0 / (np.pi * n[odd] * det_spacing_mm) ** 2
    response = np.real(np.fft.fft(h)) * det_spacing_mm
    if kind == "hann":
        freq = np.fft.fftfreq(size)
        response = response * 0.5 * (1.0 + np.cos(2.0 * np.pi * freq))
    return response, size


def fbp_reconstruct(sino: Sinogram, geom: ProjectionGeometry, dims, filter: str = "ramlak",
                    spacing_mm: float | None = None) -> ImageGrid:
    """Filtered backprojection with a linear-interpolating pixel-driven backprojector."""
    shape = _dims(dims)
    if spacing_mm is None:
        spacing_mm = dims.spacing_mm if isinstance(dims, ImageGrid) else geom.detector_spacing_mm
    _check_inputs(sino, geom, shape, spacing_mm)
    response, size = ramp_filter(geom.n_detectors, geom.detector_spacing_mm, filter)
    p = np.zeros((geom.n_angles, size))
    p[:, :geom.n_detectors] = sino.values
    q = np.real(np.fft.ifft(np.fft.fft(p, axis=1) * response, axis=1))[:, :geom.n_detectors]

    h, w = shape
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    x = (x - (w - 1) / 2.0) * spacing_mm
    y = (y - (h - 1) / 2.0) * spacing_mm
    bins = np.arange(geom.n_detectors, dtype=np.float64)
    d0 = (geom.n_detectors - 1) / 2.0
    out = np.zeros(shape)
    for view, theta in enumerate(geom.angles):
        t = (x * math.cos(theta) + y * math.sin(theta)) / geom.detector_spacing_mm + d0
        out += np.interp(t, bins, q[view], left=0.0, right=0.0)
    out *= math.pi / geom.n_angles
    return ImageGrid(check_storable(out, "FBP reconstruction"), spacing_mm)
