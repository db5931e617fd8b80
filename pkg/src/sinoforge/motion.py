"""Single-step in-plane rotation splicing and 0/180 degree consistency scoring."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import GeometryError, ValidationError
from .grid import ImageGrid, ProjectionGeometry, Sinogram, check_storable
from .phantom import check_seed, rng
from .projector import check_coverage, project_array, rotate_image

ANGLE_MIN_RAD = -math.pi / 20
ANGLE_MAX_RAD = math.pi / 120
SPAN_VIEWS = 200


@dataclass(frozen=True)
class MotionEvent:
    """The object rotates by ``rotation_rad`` for views ``[start_view, start_view + span_views)``."""

    rotation_rad: float
    start_view: int
    span_views: int = SPAN_VIEWS

    def __post_init__(self):
        if not math.isfinite(self.rotation_rad):
            raise ValidationError("rotation_rad must be finite")
        if int(self.start_view) != self.start_view or self.start_view < 0:
            raise ValidationError(f"start_view must be a nonnegative integer, got {self.start_view}")
        if int(self.span_views) != self.span_views or self.span_views < 0:
            raise ValidationError(f"span_views must be a nonnegative integer, got {self.span_views}")
        object.__setattr__(self, "rotation_rad", float(self.rotation_rad))
        object.__setattr__(self, "start_view", int(self.start_view))
        object.__setattr__(self, "span_views", int(self.span_views))

    @property
    def stop_view(self) -> int:
        return self.start_view + self.span_views

    @property
    def rotation_deg(self) -> float:
        return math.degrees(self.rotation_rad)

    def check(self, n_views: int, angle_range: tuple[float, float] | None = None):
        """Raise unless the event fits ``n_views`` (and ``angle_range``, if given)."""
        if self.stop_view > n_views or (self.span_views and self.start_view >= n_views):
            raise ValidationError(
                f"motion views [{self.start_view}, {self.stop_view}) exceed {n_views} views")
        if angle_range is not None:
            lo, hi = angle_range
            if not lo <= self.rotation_rad <= hi:
                raise ValidationError(
                    f"rotation {self.rotation_rad} rad outside configured range [{lo}, {hi}]")

    def to_dict(self) -> dict:
        return {**asdict(self), "rotation_deg": self.rotation_deg}


@dataclass(frozen=True)
class MotionSamplerConfig:
    angle_min_rad: float = ANGLE_MIN_RAD
    angle_max_rad: float = ANGLE_MAX_RAD
    span_views: int = SPAN_VIEWS
    seed: int = 0

    def __post_init__(self):
        # a collapsed range (min == max) pins the rotation to a fixed angle
        if not (math.isfinite(self.angle_min_rad) and math.isfinite(self.angle_max_rad)
                and self.angle_min_rad <= self.angle_max_rad):
            raise ValidationError("need finite angle_min_rad <= angle_max_rad")
        if int(self.span_views) != self.span_views or self.span_views < 0:
            raise ValidationError("span_views must be a nonnegative integer")
        check_seed(self.seed)

    @property
    def angle_range(self) -> tuple[float, float]:
        return self.angle_min_rad, self.angle_max_rad

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ConsistencyScore:
    ssd: float
    ncc: float

    def to_dict(self) -> dict:
        return {"ssd": self.ssd, "ncc": self.ncc}


def sample_motion_event(cfg: MotionSamplerConfig, geom: ProjectionGeometry) -> MotionEvent:
    """Uniform rotation in the configured range and uniform start view."""
    if cfg.span_views > geom.n_angles:
        raise ValidationError(f"span {cfg.span_views} exceeds {geom.n_angles} views")
    gen = rng(cfg.seed)
    angle = float(gen.uniform(cfg.angle_min_rad, cfg.angle_max_rad))
    if cfg.angle_min_rad == cfg.angle_max_rad:
        angle = cfg.angle_min_rad
    start = int(gen.integers(0, geom.n_angles - cfg.span_views, endpoint=True))
    return MotionEvent(angle, start, cfg.span_views)


def inject_single_step_rotation(clean_sino: Sinogram, img: ImageGrid,
                                geom: ProjectionGeometry, ev: MotionEvent) -> Sinogram:
    """Replace views ``[start, start+span)`` with views of the rotated object.

    Views outside the span are copied bit for bit from ``clean_sino``.
    """
    try:
        geom.check_sinogram(clean_sino)
    except GeometryError as exc:
        raise ValidationError(str(exc)) from exc
    check_coverage(img.shape, img.spacing_mm, geom)
    ev.check(geom.n_angles)
    if ev.span_views == 0:
        return clean_sino
    rotated = rotate_image(img, ev.rotation_rad)
    rows = project_array(rotated.values, img.spacing_mm, geom,
                         geom.angles[ev.start_view:ev.stop_view])
    values = np.array(clean_sino.values, copy=True)
    values[ev.start_view:ev.stop_view] = check_storable(rows, "spliced projection")
    return clean_sino.with_values(values)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def consistency_score(sino: Sinogram) -> ConsistencyScore:
    """SSD and NCC between the 0 view and the detector-reversed pi view."""
    angles = sino.angles_rad
    if abs(angles[0]) > 1e-9 or abs(angles[-1] - math.pi) > 1e-9:
        raise GeometryError("consistency scoring needs explicit views at 0 and pi")
    p0 = sino.values[0].astype(np.float64)
    p1 = sino.values[-1, ::-1].astype(np.float64)
    diff = p0 - p1
    return ConsistencyScore(ssd=float(np.dot(diff, diff)), ncc=_pearson(p0, p1))
