"""Parallel-beam Radon operator, its exact adjoint, rotation and noise."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import GeometryError, ValidationError
from .grid import ImageGrid, ProjectionGeometry, Sinogram, check_storable
from .phantom import check_seed, rng

PAPER_N_ANGLES = 1800


@dataclass(frozen=True)
class NoiseSpec:
    """Additive i.i.d. Gaussian acquisition noise, in sinogram units."""

    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValidationError(f"noise sigma must be finite and >= 0, got {self.sigma}")
        check_seed(self.seed)


def diagonal_detectors(width: int, height: int) -> int:
    """Smallest bin count covering the image diagonal with the parity of ``width``.

    Matching parity puts detector centres on pixel centres at 0 and pi/2, so
    axis-aligned views are exact column/row sums instead of two-column averages.
    """
    n = math.ceil(math.hypot(width, height) - 1e-9)
    return n if n % 2 == width % 2 else n + 1


def default_geometry(img: ImageGrid, n_angles: int = PAPER_N_ANGLES,
                     n_detectors: int | None = None) -> ProjectionGeometry:
    """Views over [0, pi] inclusive, detector pitch equal to the pixel pitch."""
    if n_detectors is None:
        n_detectors = diagonal_detectors(img.width, img.height)
    return ProjectionGeometry(n_angles=n_angles, n_detectors=n_detectors,
                              detector_spacing_mm=img.spacing_mm)


def check_coverage(shape, spacing_mm: float, geom: ProjectionGeometry):
    h, w = shape
    diag_mm = math.hypot(w, h) * spacing_mm
    if geom.detector_extent_mm < diag_mm * (1 - 1e-9):
        raise GeometryError(
            f"detector extent {geom.detector_extent_mm:.4g} mm does not cover the image "
            f"diagonal {diag_mm:.4g} mm")


def project_array(values: np.ndarray, spacing_mm: float, geom: ProjectionGeometry,
                  angles=None) -> np.ndarray:
    """Float64 line integrals of ``values`` for ``angles`` (default: all views)."""
    if angles is None:
        angles = geom.angles
    return _kernels.radon(values, angles, geom.n_detectors,
                          geom.detector_spacing_mm / spacing_mm, spacing_mm)


def backproject_array(sino_values: np.ndarray, spacing_mm: float, geom: ProjectionGeometry,
                      shape, angles=None) -> np.ndarray:
    if angles is None:
        angles = geom.angles
    return _kernels.radon_adjoint(sino_values, angles, tuple(shape),
                                  geom.detector_spacing_mm / spacing_mm, spacing_mm)


def radon_forward(img: ImageGrid, geom: ProjectionGeometry) -> Sinogram:
    """Line integrals (attenuation x mm) through ``img`` for every view of ``geom``."""
    check_coverage(img.shape, img.spacing_mm, geom)
    values = check_storable(project_array(img.values, img.spacing_mm, geom), "projection")
    return Sinogram(values, geom.angles, geom.detector_spacing_mm)


def backproject(sino: Sinogram, geom: ProjectionGeometry, like,
                spacing_mm: float | None = None) -> ImageGrid:
    """Exact transpose of :func:`radon_forward`.

    ``like`` is an :class:`ImageGrid` (its shape and spacing are used) or a
    ``(height, width)`` tuple, in which case ``spacing_mm`` defaults to the
    detector pitch.
    """
    if isinstance(like, ImageGrid):
        shape, spacing = like.shape, like.spacing_mm
    else:
        shape = tuple(int(n) for n in like)
        if len(shape) != 2:
            raise ValidationError(f"expected (height, width), got {like!r}")
        spacing = geom.detector_spacing_mm
    if spacing_mm is not None:
        spacing = float(spacing_mm)
    try:
        geom.check_sinogram(sino)
    except GeometryError as exc:
        raise ValidationError(str(exc)) from exc
    check_coverage(shape, spacing, geom)
    values = check_storable(backproject_array(sino.values, spacing, geom, shape), "backprojection")
    return ImageGrid(values, spacing)


def rotate_array(values: np.ndarray, angle_rad: float) -> np.ndarray:
    """Bilinear rotation about the array centre; samples outside read as 0.

    A positive angle maps the object so that its projection at view ``phi``
    equals the unrotated projection at ``phi - angle``.
    """
    src = np.asarray(values, dtype=np.float64)
    h, w = src.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    x -= cx
    y -= cy
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    col = x * c + y * s + cx
    row = -x * s + y * c + cy

    padded = np.zeros((h + 2, w + 2), dtype=np.float64)
    padded[1:-1, 1:-1] = src
    # shift into padded coordinates; anything beyond one pixel outside is zero
    col += 1.0
    row += 1.0
    valid = (col >= 0) & (col <= w + 1) & (row >= 0) & (row <= h + 1)
    col = np.clip(col, 0, w + 1)
    row = np.clip(row, 0, h + 1)
    i0 = np.minimum(np.floor(col).astype(np.intp), w)
    j0 = np.minimum(np.floor(row).astype(np.intp), h)
    fx = col - i0
    fy = row - j0
    out = ((1 - fy) * ((1 - fx) * padded[j0, i0] + fx * padded[j0, i0 + 1])
           + fy * ((1 - fx) * padded[j0 + 1, i0] + fx * padded[j0 + 1, i0 + 1]))
    out[~valid] = 0.0
    return out


def rotate_image(img: ImageGrid, angle_rad: float) -> ImageGrid:
    """Rotate about ``((w-1)/2, (h-1)/2)`` with bilinear interpolation."""
    angle_rad = float(angle_rad)
    if not math.isfinite(angle_rad):
        raise ValidationError(f"rotation angle must be finite, got {angle_rad}")
    if angle_rad == 0.0:
        return img
    return img.with_values(rotate_array(img.values, angle_rad))


def add_noise(sino: Sinogram, noise: NoiseSpec) -> Sinogram:
    if noise.sigma == 0:
        return sino
    eps = rng(noise.seed).normal(0.0, noise.sigma, size=sino.values.shape)
    return sino.with_values(check_storable(sino.values.astype(np.float64) + eps, "noisy sinogram"))
