"""Segmentation agreement metrics and 2D bone morphometry."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import EmptySegmentationError, UndefinedInputError, ValidationError
from .grid import BinaryMask, ImageGrid

_FULL = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class SegReport:
    dice: float
    jaccard: float
    hausdorff_px: float
    hausdorff_mm: float

    def to_dict(self) -> dict:
        return {"dice": self.dice, "jaccard": self.jaccard,
                "hausdorff_px": self.hausdorff_px, "hausdorff_mm": self.hausdorff_mm}


@dataclass(frozen=True)
class Calibration:
    """Affine map from attenuation to density units."""

    slope: float = 1.0
    intercept: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.slope) and self.slope > 0 and math.isfinite(self.intercept)):
            raise ValidationError("calibration needs a finite slope > 0 and finite intercept")


@dataclass(frozen=True)
class MorphoReport:
    ct_th_mm: float
    tb_n_per_mm: float
    ct_bmd: float
    tb_bmd: float

    def to_dict(self) -> dict:
        return {"ct_th_mm": self.ct_th_mm, "tb_n_per_mm": self.tb_n_per_mm,
                "ct_bmd": self.ct_bmd, "tb_bmd": self.tb_bmd}


def _bools(mask) -> np.ndarray:
    arr = mask.values if isinstance(mask, BinaryMask) else np.asarray(mask)
    if arr.ndim != 2:
        raise ValidationError("masks must be 2D")
    return arr.astype(bool)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = _bools(a), _bools(b)
    if a.shape != b.shape:
        raise ValidationError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a, b


def dice(a, b) -> float:
    """``2|A & B| / (|A| + |B|)``; 1 when both masks are empty."""
    a, b = _pair(a, b)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a & b)) / total


def jaccard(a, b) -> float:
    """``|A & B| / |A | B|``; 1 when both masks are empty."""
    a, b = _pair(a, b)
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def boundary(mask) -> np.ndarray:
    """Mask pixels with at least one 8-neighbour outside the mask (or the image)."""
    m = _bools(mask)
    return m & ~ndimage.binary_erosion(m, structure=_FULL, border_value=0)


def hausdorff(a, b) -> float:
    """Symmetric Hausdorff distance in pixels between the masks' boundaries."""
    a, b = _pair(a, b)
    if not a.any() or not b.any():
        raise UndefinedInputError("Hausdorff distance is undefined for an empty mask")
    pa = np.argwhere(boundary(a)).astype(np.float64)
    pb = np.argwhere(boundary(b)).astype(np.float64)
    d_ab = cKDTree(pb).query(pa)[0].max()
    d_ba = cKDTree(pa).query(pb)[0].max()
    return float(max(d_ab, d_ba))


def segmentation_report(a: BinaryMask, b: BinaryMask) -> SegReport:
    h = hausdorff(a, b)
    return SegReport(dice(a, b), jaccard(a, b), h, h * a.spacing_mm)


def threshold_segment(img: ImageGrid, threshold: float, min_component_px: int = 20,
                      opening_radius_px: int = 2) -> tuple[BinaryMask, BinaryMask]:
    """Split a bone cross-section into cortical and trabecular compartments.

    Pixels at or above ``threshold`` are solid; components smaller than
    ``min_component_px`` (8-connected) are dropped. Struts attached to the
    shell are detached by an opening of radius ``opening_radius_px``, and the
    largest surviving component is taken as the cortex. The trabecular
    compartment is everything the cortex encloses.
    """
    if not math.isfinite(threshold):
        raise ValidationError("threshold must be finite")
    solid = img.values >= threshold
    labels, n = ndimage.label(solid, structure=_FULL)
    if n:
        sizes = np.bincount(labels.ravel())
        keep = sizes >= min_component_px
        keep[0] = False
        solid = keep[labels]
    if not solid.any():
        raise EmptySegmentationError(f"no component of at least {min_component_px} px at threshold {threshold}")

    cortex = solid
    if opening_radius_px > 0:
        r = opening_radius_px
        yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
        disk = (xx * xx + yy * yy) <= r * r
        opened = ndimage.binary_opening(solid, structure=disk)
        if opened.any():
            # grow back what the opening shaved off the shell, but only within r px
            cortex = _largest(opened)
            cortex = solid & ndimage.binary_dilation(cortex, structure=disk)
    cortex = _largest(cortex)
    enclosed = ndimage.binary_fill_holes(cortex) & ~cortex
    return BinaryMask(cortex, img.spacing_mm), BinaryMask(enclosed, img.spacing_mm)


def _largest(mask: np.ndarray) -> np.ndarray:
    labels, n = ndimage.label(mask, structure=_FULL)
    if n == 0:
        return mask
    return labels == np.argmax(np.bincount(labels.ravel())[1:]) + 1


def medial_axis(mask) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(axis, distance)`` for a mask.

    ``distance`` is the Euclidean distance transform (distance to the nearest
    background pixel centre). Axis pixels are those whose distance is not
    exceeded by either neighbour along the gradient direction, quantised to
    the four 8-neighbour axes.
    """
    m = np.pad(_bools(mask), 1)
    dist = ndimage.distance_transform_edt(m)
    gy, gx = np.gradient(dist)
    direction = (np.round(np.arctan2(gy, gx) / (np.pi / 4)) % 4).astype(int)
    h, w = dist.shape
    padded = np.pad(dist, 1)
    axis = np.zeros_like(m)
    for k, (dy, dx) in enumerate(((0, 1), (1, 1), (1, 0), (1, -1))):
        ahead = padded[1 + dy:h + 1 + dy, 1 + dx:w + 1 + dx]
        behind = padded[1 - dy:h + 1 - dy, 1 - dx:w + 1 - dx]
        axis |= (direction == k) & m & (dist >= ahead) & (dist >= behind)
    return axis[1:-1, 1:-1], dist[1:-1, 1:-1]


def cortical_thickness(cortical, spacing_mm: float | None = None) -> float:
    """Twice the mean distance-transform value on the medial axis, in mm."""
    if spacing_mm is None:
        if not isinstance(cortical, BinaryMask):
            raise ValidationError("spacing_mm is required for raw arrays")
        spacing_mm = cortical.spacing_mm
    m = _bools(cortical)
    if not m.any():
        raise UndefinedInputError("cortical thickness is undefined for an empty mask")
    axis, dist = medial_axis(m)
    return 2.0 * float(dist[axis].mean()) * float(spacing_mm)


def _transitions(solid: np.ndarray, region: np.ndarray) -> int:
    """Solid-to-void steps along the last axis between two in-region pixels."""
    both = region[..., :-1] & region[..., 1:]
    return int(np.count_nonzero(solid[..., :-1] & ~solid[..., 1:] & both))


def trabecular_number(trabecular_solid, region, spacing_mm: float | None = None) -> float:
    """Mean-intercept trabecular number in 1/mm.

    Solid-to-void transitions are counted along every row and every column of
    ``region``; the total is divided by twice the per-axis traversed length,
    i.e. the two axis densities are averaged.
    """
    if spacing_mm is None:
        if not isinstance(region, BinaryMask):
            raise ValidationError("spacing_mm is required for raw arrays")
        spacing_mm = region.spacing_mm
    solid, reg = _pair(trabecular_solid, region)
    if not reg.any():
        raise UndefinedInputError("trabecular number is undefined for an empty region")
    solid = solid & reg
    count = _transitions(solid, reg) + _transitions(solid.T, reg.T)
    length_mm = float(reg.sum()) * float(spacing_mm)
    return count / (2.0 * length_mm)


def mean_bmd(img: ImageGrid, mask, cal: Calibration = Calibration()) -> float:
    m = _bools(mask)
    if m.shape != img.shape:
        raise ValidationError(f"mask shape {m.shape} differs from image {img.shape}")
    if not m.any():
        raise UndefinedInputError("mean BMD is undefined for an empty mask")
    return cal.slope * float(img.values[m].astype(np.float64).mean()) + cal.intercept


def morphometry(img: ImageGrid, cortical: BinaryMask, trabecular: BinaryMask,
                threshold: float | None = None, cal: Calibration = Calibration()) -> MorphoReport:
    """Ct.Th, Tb.N and compartment BMD.

    Trabecular solid is ``img >= threshold`` inside the trabecular mask; the
    threshold defaults to the midpoint of the two compartment means.
    """
    if threshold is None:
        threshold = 0.5 * (float(img.values[_bools(cortical)].mean())
                           + float(img.values[_bools(trabecular)].mean()))
    solid = (img.values >= threshold) & _bools(trabecular)
    return MorphoReport(
        ct_th_mm=cortical_thickness(cortical, img.spacing_mm),
        tb_n_per_mm=trabecular_number(solid, trabecular, img.spacing_mm),
        ct_bmd=mean_bmd(img, cortical, cal),
        tb_bmd=mean_bmd(img, trabecular, cal),
    )
