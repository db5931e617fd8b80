"""Joseph-style parallel-beam projector kernels.

Pixel coordinates are centred on the image: ``x = col - (w-1)/2`` and
``y = row - (h-1)/2``. A ray at view angle ``theta`` and detector offset ``t``
is the line ``x cos(theta) + y sin(theta) = t``. Rays are traversed along the
dominant axis with linear interpolation across the other axis; pixels outside
the grid read as zero.

The backprojector scatters with exactly the weights the forward kernel
gathers with, so the pair is a matched transpose.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def forward_project(img, cos_t, sin_t, n_det, det_step, weight_scale, out):
    h, w = img.shape
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    d0 = (n_det - 1) / 2.0
    for v in range(cos_t.shape[0]):
        c = cos_t[v]
        s = sin_t[v]
        if abs(s) > abs(c):
            wgt = weight_scale / abs(s)
            b = -c / s
            for d in range(n_det):
                t = (d - d0) * det_step
                a = (t + cx * c) / s + cy
                acc = 0.0
                for col in range(w):
                    pos = a + b * col
                    if pos <= -1.0 or pos >= h:
                        continue
                    j = int(math.floor(pos))
                    f = pos - j
                    if j >= 0:
                        acc += (1.0 - f) * img[j, col]
                    if j + 1 < h:
                        acc += f * img[j + 1, col]
                out[v, d] = acc * wgt
        else:
            wgt = weight_scale / abs(c)
            b = -s / c
            for d in range(n_det):
                t = (d - d0) * det_step
                a = (t + cy * s) / c + cx
                acc = 0.0
                for row in range(h):
                    pos = a + b * row
                    if pos <= -1.0 or pos >= w:
                        continue
                    i = int(math.floor(pos))
                    f = pos - i
                    if i >= 0:
                        acc += (1.0 - f) * img[row, i]
                    if i + 1 < w:
                        acc += f * img[row, i + 1]
                out[v, d] = acc * wgt


@njit(cache=True)
def back_project(sino, cos_t, sin_t, det_step, weight_scale, out):
    h, w = out.shape
    n_det = sino.shape[1]
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    d0 = (n_det - 1) / 2.0
    for v in range(cos_t.shape[0]):
        c = cos_t[v]
        s = sin_t[v]
        if abs(s) > abs(c):
            wgt = weight_scale / abs(s)
            b = -c / s
            for d in range(n_det):
                val = sino[v, d] * wgt
                if val == 0.0:
                    continue
                t = (d - d0) * det_step
                a = (t + cx * c) / s + cy
                for col in range(w):
                    pos = a + b * col
                    if pos <= -1.0 or pos >= h:
                        continue
                    j = int(math.floor(pos))
                    f = pos - j
                    if j >= 0:
                        out[j, col] += (1.0 - f) * val
                    if j + 1 < h:
                        out[j + 1, col] += f * val
        else:
            wgt = weight_scale / abs(c)
            b = -s / c
            for d in range(n_det):
                val = sino[v, d] * wgt
                if val == 0.0:
                    continue
                t = (d - d0) * det_step
                a = (t + cy * s) / c + cx
                for row in range(h):
                    pos = a + b * row
                    if pos <= -1.0 or pos >= w:
                        continue
                    i = int(math.floor(pos))
                    f = pos - i
                    if i >= 0:
                        out[row, i] += (1.0 - f) * val
                    if i + 1 < w:
                        out[row, i + 1] += f * val


def radon(img, angles, n_det, det_step, weight_scale):
    """Project a float64 image; returns an ``(len(angles), n_det)`` array."""
    angles = np.asarray(angles, dtype=np.float64)
    out = np.zeros((angles.shape[0], n_det), dtype=np.float64)
    forward_project(np.ascontiguousarray(img, dtype=np.float64),
                    np.cos(angles), np.sin(angles), n_det, det_step,
                    weight_scale, out)
    return out


def radon_adjoint(sino, angles, shape, det_step, weight_scale):
    angles = np.asarray(angles, dtype=np.float64)
    out = np.zeros(shape, dtype=np.float64)
    back_project(np.ascontiguousarray(sino, dtype=np.float64),
                 np.cos(angles), np.sin(angles), det_step, weight_scale, out)
    return out
