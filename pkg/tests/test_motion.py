import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from sinoforge.errors import GeometryError, ValidationError
from sinoforge.grid import ImageGrid, ProjectionGeometry, Sinogram
from sinoforge.motion import (ANGLE_MAX_RAD, ANGLE_MIN_RAD, SPAN_VIEWS, MotionEvent,
                              MotionSamplerConfig, consistency_score, inject_single_step_rotation,
                              sample_motion_event)
from sinoforge.phantom import PhantomSpec, make_phantom
from sinoforge.pipeline import derive_seed
from sinoforge.projector import default_geometry, radon_forward, rotate_image


@pytest.fixture(scope="module")
def setup():
    img = make_phantom(PhantomSpec.for_kind("distal", size_px=64, seed=5))
    geom = default_geometry(img, 120)
    return img, geom, radon_forward(img, geom)


def test_default_ranges_in_degrees():
    assert math.degrees(ANGLE_MIN_RAD) == pytest.approx(-9.0)
    assert math.degrees(ANGLE_MAX_RAD) == pytest.approx(1.5)
    assert SPAN_VIEWS == 200


def test_sampler_defaults_paper_scale():
    geom = ProjectionGeometry(1800, 364)
    for k in range(200):
        ev = sample_motion_event(MotionSamplerConfig(seed=k), geom)
        assert 0 <= ev.start_view <= 1600
        assert -9.0 - 1e-12 <= ev.rotation_deg <= 1.5 + 1e-12
        assert ev.span_views == 200


def test_sampler_deterministic():
    geom = ProjectionGeometry(360, 182)
    cfg = MotionSamplerConfig(span_views=40, seed=99)
    assert sample_motion_event(cfg, geom) == sample_motion_event(cfg, geom)
    assert sample_motion_event(cfg, geom) != sample_motion_event(replace(cfg, seed=100), geom)


def test_sampler_covers_range():
    geom = ProjectionGeometry(360, 182)
    draws = [sample_motion_event(MotionSamplerConfig(span_views=40, seed=k), geom) for k in range(10_000)]
    angles = np.array([e.rotation_rad for e in draws])
    starts = np.array([e.start_view for e in draws])
    assert ANGLE_MIN_RAD <= angles.min() and angles.max() <= ANGLE_MAX_RAD
    assert starts.min() == 0 and starts.max() == 320
    # roughly uniform: mean near the midpoint
    assert angles.mean() == pytest.approx((ANGLE_MIN_RAD + ANGLE_MAX_RAD) / 2, abs=0.003)


def test_sampler_span_too_long():
    with pytest.raises(ValidationError):
        sample_motion_event(MotionSamplerConfig(span_views=200), ProjectionGeometry(100, 50))


def test_sampler_collapsed_range_pins_angle():
    ev = sample_motion_event(MotionSamplerConfig(0.01, 0.01, 10, 3), ProjectionGeometry(50, 20))
    assert ev.rotation_rad == 0.01


@pytest.mark.parametrize("kwargs", [dict(angle_min_rad=0.1, angle_max_rad=0.0),
                                    dict(angle_min_rad=math.nan), dict(span_views=-1),
                                    dict(seed=2**64)])
def test_sampler_config_validation(kwargs):
    with pytest.raises(ValidationError):
        MotionSamplerConfig(**kwargs)


def test_event_validation(setup):
    _, geom, clean = setup
    with pytest.raises(ValidationError):
        MotionEvent(0.1, -1, 10)
    ev = MotionEvent(0.1, 115, 10)
    with pytest.raises(ValidationError):
        ev.check(120)
    with pytest.raises(ValidationError):
        MotionEvent(0.2, 0, 5).check(120, (ANGLE_MIN_RAD, ANGLE_MAX_RAD))
    img = make_phantom(PhantomSpec.for_kind("distal", size_px=64, seed=5))
    with pytest.raises(ValidationError):
        inject_single_step_rotation(clean, img, geom, ev)


def test_injection_locality(setup):
    img, geom, clean = setup
    ev = MotionEvent(math.radians(-5), 30, 25)
    out = inject_single_step_rotation(clean, img, geom, ev)
    outside = np.r_[0:30, 55:120]
    assert np.array_equal(out.values[outside], clean.values[outside])
    expected = radon_forward(rotate_image(img, ev.rotation_rad), geom).values
    assert np.array_equal(out.values[30:55], expected[30:55])
    assert not np.array_equal(out.values[30:55], clean.values[30:55])


def test_zero_rotation_and_zero_span(setup):
    img, geom, clean = setup
    assert inject_single_step_rotation(clean, img, geom, MotionEvent(0.0, 10, 50)) == clean
    assert inject_single_step_rotation(clean, img, geom, MotionEvent(0.1, 10, 0)) is clean


def test_full_span_replacement(setup):
    img, geom, clean = setup
    t = math.radians(1.2)
    out = inject_single_step_rotation(clean, img, geom, MotionEvent(t, 0, geom.n_angles))
    assert out == radon_forward(rotate_image(img, t), geom)


def test_injection_geometry_mismatch(setup):
    img, geom, clean = setup
    other = ProjectionGeometry(60, geom.n_detectors, geom.detector_spacing_mm)
    with pytest.raises(ValidationError):
        inject_single_step_rotation(clean, img, other, MotionEvent(0.1, 0, 5))


def test_consistency_motion_free_disk():
    disk = make_phantom(PhantomSpec.for_kind("disk", size_px=128))
    g = default_geometry(disk, 180)
    s = radon_forward(disk, g)
    score = consistency_score(s)
    p0 = s.values[0].astype(np.float64)
    assert score.ncc >= 0.999
    assert score.ssd <= 1e-4 * np.dot(p0, p0)


def test_consistency_drops_with_motion(setup):
    img, geom, clean = setup
    base = consistency_score(clean).ncc
    ev = MotionEvent(math.radians(5), geom.n_angles - 20, 20)
    moved = consistency_score(inject_single_step_rotation(clean, img, geom, ev))
    assert moved.ncc < base
    assert moved.ssd > consistency_score(clean).ssd


def test_consistency_constant_sinogram():
    g = ProjectionGeometry(10, 12)
    score = consistency_score(Sinogram(np.zeros((10, 12)), g.angles))
    assert score.ncc == 0.0 and score.ssd == 0.0


def test_consistency_needs_endpoints():
    g = ProjectionGeometry(10, 12, include_pi_endpoint=False)
    with pytest.raises(GeometryError):
        consistency_score(Sinogram(np.ones((10, 12)), g.angles))


def test_ncc_trend_over_rotation_magnitude():
    spec = PhantomSpec.for_kind("distal", size_px=64)
    img0 = make_phantom(spec)
    geom = default_geometry(img0, 1800)
    degrees = (0.0, 1.0, 3.0, 6.0, 9.0)
    means = np.zeros(len(degrees))
    for i in range(20):
        img = make_phantom(spec.with_seed(derive_seed(3, i)))
        clean = radon_forward(img, geom)
        for j, deg in enumerate(degrees):
            ev = MotionEvent(-math.radians(deg), 1600, 200)
            means[j] += consistency_score(inject_single_step_rotation(clean, img, geom, ev)).ncc / 20
    assert np.all(np.diff(means) <= 0)
    assert spearmanr(degrees, means)[0] <= -0.9
