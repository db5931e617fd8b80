"""scikit-learn compatible wrappers around the simulation stages.

These operate on plain arrays (one 2D image or an ``(n, h, w)`` stack) so the
simulator can sit inside a :class:`sklearn.pipeline.Pipeline` or feed a
training loop directly. Hyperparameters are constructor arguments, fitted
state ends in an underscore, and ``get_params``/``set_params``/``clone`` work
as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_image_stack, check_same_shape, check_sinogram_stack
from .errors import ValidationError
from .grid import ImageGrid, ProjectionGeometry, Sinogram
from .motion import (ANGLE_MAX_RAD, ANGLE_MIN_RAD, MotionSamplerConfig,
                     inject_single_step_rotation, sample_motion_event)
from .phantom import PAPER_SPACING_MM
from .pipeline import derive_seed
from .projector import NoiseSpec, add_noise, default_geometry, project_array
from .recon import SirtConfig, fbp_reconstruct, sirt_array


def _geometry(shape, spacing_mm, n_angles, n_detectors):
    probe = ImageGrid(np.zeros(shape, dtype=np.float32), spacing_mm)
    return default_geometry(probe, n_angles, n_detectors)


def _item_seed(random_state, index):
    if random_state is None:
        return int(np.random.default_rng().integers(0, 2**63))
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(0, 2**63))
    return derive_seed(int(random_state), index)


class RadonTransformer(TransformerMixin, BaseEstimator):
    """Parallel-beam forward projection of image stacks.

    Parameters
    ----------
    n_angles : int
        Views over [0, pi], both endpoints included.
    n_detectors : int or None
        Detector bins; ``None`` picks the smallest diagonal-covering count.
    spacing_mm : float
        Pixel pitch, also used as detector pitch.
    """

    def __init__(self, n_angles=180, n_detectors=None, spacing_mm=1.0):
        self.n_angles = n_angles
        self.n_detectors = n_detectors
        self.spacing_mm = spacing_mm

    def fit(self, X, y=None):
        X = check_image_stack(X)
        self.image_shape_ = X.shape[1:]
        self.geometry_ = _geometry(self.image_shape_, self.spacing_mm, self.n_angles, self.n_detectors)
        return self

    def transform(self, X):
        check_is_fitted(self, "geometry_")
        X = check_image_stack(X)
        check_same_shape(X, self.image_shape_)
        return np.stack([project_array(x, self.spacing_mm, self.geometry_) for x in X])

    def inverse_transform(self, S):
        """Ram-Lak filtered backprojection back onto the fitted image grid."""
        check_is_fitted(self, "geometry_")
        g = self.geometry_
        S = check_sinogram_stack(S, g.n_angles, g.n_detectors)
        out = [fbp_reconstruct(Sinogram(s, g.angles, g.detector_spacing_mm), g,
                               self.image_shape_, spacing_mm=self.spacing_mm).values
               for s in S]
        return np.stack(out).astype(np.float64)


class SirtReconstructor(TransformerMixin, BaseEstimator):
    """SIRT reconstruction of sinogram stacks acquired over [0, pi].

    ``fit`` reads the view and bin counts from the training sinograms; the
    output grid is ``image_size`` square.
    """

    def __init__(self, image_size=128, n_iterations=50, relaxation=1.0, nonneg=True,
                 circle=True, spacing_mm=1.0):
        self.image_size = image_size
        self.n_iterations = n_iterations
        self.relaxation = relaxation
        self.nonneg = nonneg
        self.circle = circle
        self.spacing_mm = spacing_mm

    def fit(self, S, y=None):
        S = check_sinogram_stack(S)
        self.geometry_ = ProjectionGeometry(S.shape[1], S.shape[2], self.spacing_mm)
        self.config_ = SirtConfig(self.n_iterations, self.relaxation, self.nonneg, self.circle)
        return self

    def transform(self, S):
        check_is_fitted(self, "geometry_")
        g = self.geometry_
        S = check_sinogram_stack(S, g.n_angles, g.n_detectors)
        shape = (self.image_size, self.image_size)
        return np.stack([sirt_array(s, g, shape, self.spacing_mm, self.config_) for s in S])


class MotionArtifactSimulator(TransformerMixin, BaseEstimator):
    """Turn clean slices into motion-corrupted, reduced-iteration reconstructions.

    Each image is projected, a block of ``span_views`` consecutive views is
    replaced by views of the image rotated by an angle drawn uniformly from
    ``[angle_min_rad, angle_max_rad]``, optional Gaussian noise is added, and
    the result is reconstructed with ``n_iterations`` of SIRT. With an integer
    ``random_state`` image ``i`` of a call always receives the same event.
    """

    def __init__(self, n_angles=360, span_views=40, angle_min_rad=ANGLE_MIN_RAD,
                 angle_max_rad=ANGLE_MAX_RAD, n_iterations=30, noise_sigma=0.0,
                 spacing_mm=PAPER_SPACING_MM, random_state=None):
        self.n_angles = n_angles
        self.span_views = span_views
        self.angle_min_rad = angle_min_rad
        self.angle_max_rad = angle_max_rad
        self.n_iterations = n_iterations
        self.noise_sigma = noise_sigma
        self.spacing_mm = spacing_mm
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_image_stack(X)
        self.image_shape_ = X.shape[1:]
        self.geometry_ = _geometry(self.image_shape_, self.spacing_mm, self.n_angles, None)
        self.sirt_ = SirtConfig(self.n_iterations)
        # fail at fit time on an inconsistent motion configuration
        MotionSamplerConfig(self.angle_min_rad, self.angle_max_rad, self.span_views)
        if self.span_views > self.n_angles:
            raise ValidationError(f"span_views {self.span_views} exceeds n_angles {self.n_angles}")
        NoiseSpec(self.noise_sigma)
        return self

    def simulate(self, X):
        """Return ``(corrupted, blur_matched, events)`` for every image in ``X``."""
        check_is_fitted(self, "geometry_")
        X = check_image_stack(X)
        check_same_shape(X, self.image_shape_)
        g = self.geometry_
        corrupted, blurred, events = [], [], []
        for i, x in enumerate(X):
            seed = _item_seed(self.random_state, i)
            img = ImageGrid(x, self.spacing_mm)
            clean = Sinogram(project_array(img.values, self.spacing_mm, g), g.angles,
                             g.detector_spacing_mm)
            motion = MotionSamplerConfig(self.angle_min_rad, self.angle_max_rad,
                                         self.span_views, derive_seed(seed, "motion"))
            ev = sample_motion_event(motion, g)
            noise = NoiseSpec(self.noise_sigma, derive_seed(seed, "noise"))
            spliced = add_noise(inject_single_step_rotation(clean, img, g, ev), noise)
            clean = add_noise(clean, noise)
            corrupted.append(sirt_array(spliced.values, g, img.shape, self.spacing_mm, self.sirt_))
            blurred.append(sirt_array(clean.values, g, img.shape, self.spacing_mm, self.sirt_))
            events.append(ev)
        return np.stack(corrupted), np.stack(blurred), events

    def transform(self, X):
        return self.simulate(X)[0]
