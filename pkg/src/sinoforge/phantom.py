"""Deterministic bone-like phantoms with known ground truth.

All randomness comes from numpy's Philox 4x64 counter-based generator seeded
with the spec's 64-bit seed, so a (kind, size, seed) triple always yields the
same bytes. The trabecular lattice is standard-normal white noise, smoothed by
a separable box blur of radius 2 px (wrap-around borders), and thresholded at
the quantile that makes ``trabecular_fill_frac`` of the marrow pixels solid.
Disk and annulus edges are antialiased with 4x4 supersampling.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import UnsupportedError, ValidationError
from .grid import MIN_SIZE, BinaryMask, ImageGrid

KINDS = ("distal", "diaphyseal", "disk", "plates")
PAPER_SPACING_MM = 0.0607
LATTICE_BLUR_RADIUS = 2
SUPERSAMPLE = 4

_KIND_DEFAULTS = {
    "distal": dict(cortical_outer_frac=0.85, cortical_inner_frac=0.75, trabecular_fill_frac=0.35),
    "diaphyseal": dict(cortical_outer_frac=0.85, cortical_inner_frac=0.5, trabecular_fill_frac=0.08),
    "disk": dict(cortical_outer_frac=0.4, cortical_inner_frac=0.2, trabecular_fill_frac=0.0),
    "plates": dict(cortical_outer_frac=0.9, cortical_inner_frac=0.5, trabecular_fill_frac=0.0),
}


def rng(seed: int) -> np.random.Generator:
    """The toolkit's PRNG: Philox 4x64 keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


def check_seed(seed) -> int:
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= int(seed) < 2**64:
        raise ValidationError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return int(seed)


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of a synthetic phantom.

    Radii are fractions of the half-width. For ``disk`` the outer fraction is
    the disk radius and ``attenuation_cortical`` its value; ``plates`` uses
    ``plate_period_px`` and ``plate_thickness_px`` (default half the period).
    """

    kind: str = "distal"
    size_px: int = 128
    spacing_mm: float = PAPER_SPACING_MM
    seed: int = 0
    cortical_outer_frac: float = 0.85
    cortical_inner_frac: float = 0.75
    trabecular_fill_frac: float = 0.35
    attenuation_cortical: float = 1.0
    attenuation_trabecular: float = 0.6
    attenuation_background: float = 0.0
    plate_period_px: int = 10
    plate_thickness_px: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown phantom kind {self.kind!r}; expected one of {KINDS}")
        if int(self.size_px) != self.size_px or self.size_px < MIN_SIZE:
            raise ValidationError(f"size_px must be an integer >= {MIN_SIZE}")
        if not self.spacing_mm > 0:
            raise ValidationError("spacing_mm must be positive")
        check_seed(self.seed)
        if not 0 < self.cortical_inner_frac < self.cortical_outer_frac <= 0.95:
            raise ValidationError(
                "need 0 < cortical_inner_frac < cortical_outer_frac <= 0.95, got "
                f"{self.cortical_inner_frac}, {self.cortical_outer_frac}")
        if not 0 <= self.trabecular_fill_frac <= 1:
            raise ValidationError("trabecular_fill_frac must lie in [0, 1]")
        atten = (self.attenuation_cortical, self.attenuation_trabecular, self.attenuation_background)
        if any(not math.isfinite(a) or a < 0 for a in atten):
            raise ValidationError("attenuation values must be finite and nonnegative")
        if self.plate_period_px < 2:
            raise ValidationError("plate_period_px must be >= 2")
        thick = self.plate_thickness
        if not 0 < thick < self.plate_period_px:
            raise ValidationError("plate_thickness_px must lie strictly inside (0, period)")

    @classmethod
    def for_kind(cls, kind: str, **overrides) -> "PhantomSpec":
        """Spec with the per-kind defaults, updated by ``overrides``."""
        if kind not in KINDS:
            raise ValidationError(f"unknown phantom kind {kind!r}; expected one of {KINDS}")
        return cls(kind=kind, **{**_KIND_DEFAULTS[kind], **overrides})

    @property
    def plate_thickness(self) -> int:
        if self.plate_thickness_px is None:
            return self.plate_period_px // 2
        return self.plate_thickness_px

    @property
    def center_px(self) -> float:
        return (self.size_px - 1) / 2.0

    @property
    def outer_radius_px(self) -> float:
        return self.cortical_outer_frac * self.size_px / 2.0

    @property
    def inner_radius_px(self) -> float:
        return self.cortical_inner_frac * self.size_px / 2.0

    def with_seed(self, seed: int) -> "PhantomSpec":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        return asdict(self)


def _radius_grid(n: int) -> np.ndarray:
    c = (n - 1) / 2.0
    y, x = np.mgrid[0:n, 0:n].astype(np.float64)
    return np.hypot(x - c, y - c)


def disk_coverage(n: int, radius: float) -> np.ndarray:
    """Fraction of each pixel inside a centred disk, by 4x4 supersampling."""
    c = (n - 1) / 2.0
    offsets = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
    idx = np.arange(n, dtype=np.float64) - c
    sub = (idx[:, None] + offsets[None, :]).ravel()
    inside = (sub[:, None] ** 2 + sub[None, :] ** 2) <= radius * radius
    return inside.reshape(n, SUPERSAMPLE, n, SUPERSAMPLE).mean(axis=(1, 3))


def _lattice(spec: PhantomSpec, marrow: np.ndarray) -> np.ndarray:
    n = spec.size_px
    noise = rng(spec.seed).standard_normal((n, n))
    size = 2 * LATTICE_BLUR_RADIUS + 1
    smooth = ndimage.uniform_filter1d(noise, size, axis=0, mode="wrap")
    smooth = ndimage.uniform_filter1d(smooth, size, axis=1, mode="wrap")
    solid = np.zeros((n, n), dtype=bool)
    fill = spec.trabecular_fill_frac
    if not marrow.any() or fill == 0:
        return solid
    if fill >= 1:
        return marrow.copy()
    inside = smooth[marrow]
    k = int(round((1.0 - fill) * inside.size))
    k = min(max(k, 0), inside.size - 1)
    threshold = np.partition(inside, k)[k]
    solid[marrow] = inside >= threshold
    return solid


def compartments(spec: PhantomSpec) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-centre cortical annulus and marrow disk as boolean arrays."""
    r = _radius_grid(spec.size_px)
    cortical = (r >= spec.inner_radius_px) & (r < spec.outer_radius_px)
    marrow = r < spec.inner_radius_px
    return cortical, marrow


def trabecular_solid(spec: PhantomSpec) -> np.ndarray:
    """Boolean lattice of solid marrow pixels (empty for disk and plates)."""
    if spec.kind not in ("distal", "diaphyseal"):
        return np.zeros((spec.size_px, spec.size_px), dtype=bool)
    _, marrow = compartments(spec)
    return _lattice(spec, marrow)


def make_phantom(spec: PhantomSpec) -> ImageGrid:
    n = spec.size_px
    bg = spec.attenuation_background
    if spec.kind == "disk":
        cov = disk_coverage(n, spec.outer_radius_px)
        values = bg + (spec.attenuation_cortical - bg) * cov
    elif spec.kind == "plates":
        col = np.arange(n) % spec.plate_period_px
        solid = np.broadcast_to(col < spec.plate_thickness, (n, n))
        values = np.where(solid, spec.attenuation_cortical, bg)
    else:
        cov_out = disk_coverage(n, spec.outer_radius_px)
        cov_in = disk_coverage(n, spec.inner_radius_px)
        solid = trabecular_solid(spec)
        values = (bg + (spec.attenuation_cortical - bg) * (cov_out - cov_in)
                  + (spec.attenuation_trabecular - bg) * solid * cov_in)
    return ImageGrid(values, spec.spacing_mm)


def make_mask_from_phantom(spec: PhantomSpec) -> tuple[BinaryMask, BinaryMask]:
    """Ground-truth (cortical, trabecular) compartments of an anatomical phantom."""
    if spec.kind not in ("distal", "diaphyseal"):
        raise UnsupportedError(f"compartment masks are undefined for kind {spec.kind!r}")
    cortical, marrow = compartments(spec)
    return BinaryMask(cortical, spec.spacing_mm), BinaryMask(marrow, spec.spacing_mm)
