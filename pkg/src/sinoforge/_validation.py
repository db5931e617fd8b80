"""Input checks for the array-level estimator API."""

import numpy as np

from .errors import ValidationError
from .grid import MIN_SIZE


def check_image_stack(X, min_size=MIN_SIZE):
    """Return ``X`` as a float64 ``(n, h, w)`` stack; a single 2D image becomes ``n=1``."""
    X = np.asarray(X)
    if X.dtype.kind not in "biuf":
        raise ValidationError(f"expected real-valued images, got dtype {X.dtype}")
    X = X.astype(np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ValidationError(f"expected an image or a stack of images, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValidationError("empty image stack")
    if min(X.shape[1:]) < min_size:
        raise ValidationError(f"images must be at least {min_size}x{min_size}, got {X.shape[1:]}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("images contain non-finite values")
    return X


def check_sinogram_stack(S, n_angles=None, n_detectors=None):
    """Return ``S`` as a float64 ``(n, n_angles, n_detectors)`` stack."""
    S = np.asarray(S)
    if S.dtype.kind not in "biuf":
        raise ValidationError(f"expected real-valued sinograms, got dtype {S.dtype}")
    S = S.astype(np.float64)
    if S.ndim == 2:
        S = S[None]
    if S.ndim != 3 or S.shape[0] == 0:
        raise ValidationError(f"expected a sinogram or a stack of sinograms, got shape {S.shape}")
    if n_angles is not None and S.shape[1] != n_angles:
        raise ValidationError(f"expected {n_angles} views, got {S.shape[1]}")
    if n_detectors is not None and S.shape[2] != n_detectors:
        raise ValidationError(f"expected {n_detectors} detector bins, got {S.shape[2]}")
    if not np.all(np.isfinite(S)):
        raise ValidationError("sinograms contain non-finite values")
    return S


def check_same_shape(X, shape):
    if tuple(X.shape[1:]) != tuple(shape):
        raise ValidationError(f"fitted for images of shape {tuple(shape)}, got {X.shape[1:]}")
