"""Full-reference image quality metrics and Sobel edge extraction.

SSIM follows Wang et al. (2004) with an 11-tap Gaussian window (sigma 1.5),
K1 = 0.01, K2 = 0.03, averaged over every window position that fits inside
the image. VIF is the pixel-domain multi-scale variant of Sheikh and Bovik
(2006): four dyadic scales, visual noise variance 2 on an 8-bit scale.
Both work on arbitrary attenuation units through ``data_range``, which
defaults to ``ref.max() - ref.min()``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .grid import ImageGrid

# VIF's visual noise variance is defined on a [0, 255] intensity scale
_VIF_SCALE = 255.0
_VIF_EPS = 1e-10

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


@dataclass(frozen=True)
class SsimParams:
    data_range: float | None = None
    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ValidationError("SSIM window size must be a positive odd integer")
        if self.sigma <= 0 or self.k1 <= 0 or self.k2 <= 0:
            raise ValidationError("SSIM sigma, k1 and k2 must be positive")
        if self.data_range is not None and not self.data_range > 0:
            raise ValidationError("data_range must be positive")


@dataclass(frozen=True)
class VifParams:
    data_range: float | None = None
    n_scales: int = 4
    noise_variance: float = 2.0

    def __post_init__(self):
        if self.n_scales < 1:
            raise ValidationError("VIF needs at least one scale")
        if not self.noise_variance > 0:
            raise ValidationError("VIF noise variance must be positive")
        if self.data_range is not None and not self.data_range > 0:
            raise ValidationError("data_range must be positive")


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float
    ssim: float
    vif: float

    def to_dict(self) -> dict:
        """JSON-ready dict; an infinite PSNR becomes the string ``"inf"``."""
        return {"psnr_db": format_float(self.psnr_db), "ssim": self.ssim, "vif": self.vif}


def format_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


def _pair(ref, test) -> tuple[np.ndarray, np.ndarray]:
    a = ref.values if isinstance(ref, ImageGrid) else ref
    b = test.values if isinstance(test, ImageGrid) else test
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValidationError("metrics expect 2D images")
    return a, b


def resolve_data_range(ref: np.ndarray, data_range: float | None) -> float:
    if data_range is None:
        data_range = float(ref.max() - ref.min())
        if data_range == 0:
            raise ValidationError("reference image is constant; pass data_range explicitly")
    data_range = float(data_range)
    if not (math.isfinite(data_range) and data_range > 0):
        raise ValidationError(f"data_range must be positive, got {data_range}")
    return data_range


def psnr(ref, test, data_range: float | None = None) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    a, b = _pair(ref, test)
    data_range = resolve_data_range(a, data_range)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(data_range ** 2 / mse)


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Separable correlation keeping only positions where the window fits."""
    r = window.size // 2
    out = ndimage.correlate1d(img, window, axis=0, mode="constant")
    out = ndimage.correlate1d(out, window, axis=1, mode="constant")
    if r == 0:
        return out
    return out[r:-r, r:-r]


def ssim_map(ref, test, p: SsimParams = SsimParams()) -> np.ndarray:
    a, b = _pair(ref, test)
    if min(a.shape) < p.window_size:
        raise ValidationError(f"images smaller than the {p.window_size}-px SSIM window")
    L = resolve_data_range(a, p.data_range)
    c1 = (p.k1 * L) ** 2
    c2 = (p.k2 * L) ** 2
    win = gaussian_window(p.window_size, p.sigma)
    mu_a = _filter_valid(a, win)
    mu_b = _filter_valid(b, win)
    var_a = _filter_valid(a * a, win) - mu_a * mu_a
    var_b = _filter_valid(b * b, win) - mu_b * mu_b
    cov = _filter_valid(a * b, win) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(ref, test, p: SsimParams = SsimParams()) -> float:
    return float(np.mean(ssim_map(ref, test, p)))


def _vif_window(scale: int, n_scales: int) -> np.ndarray:
    n = 2 ** (n_scales - scale + 1) + 1
    return gaussian_window(n, n / 5.0)


def vif_min_size(n_scales: int = 4) -> int:
    """Smallest square side for which every scale has at least one full window."""
    side = 1
    for scale in range(n_scales, 0, -1):
        side = max(side, _vif_window(scale, n_scales).size)
        if scale > 1:
            # this scale came from a valid filter with its own window, then 2x decimation
            side = 2 * side - 1 + _vif_window(scale, n_scales).size - 1
    return side


def vif(ref, test, p: VifParams = VifParams()) -> float:
    """Pixel-domain visual information fidelity (1.0 for identical images)."""
    a, b = _pair(ref, test)
    if min(a.shape) < vif_min_size(p.n_scales):
        raise ValidationError(
            f"images need at least {vif_min_size(p.n_scales)} px per side for {p.n_scales} VIF scales")
    L = resolve_data_range(a, p.data_range)
    a = a * (_VIF_SCALE / L)
    b = b * (_VIF_SCALE / L)
    sn2 = p.noise_variance
    num = 0.0
    den = 0.0
    for scale in range(1, p.n_scales + 1):
        win = _vif_window(scale, p.n_scales)
        if scale > 1:
            a = _filter_valid(a, win)[::2, ::2]
            b = _filter_valid(b, win)[::2, ::2]
        mu_a = _filter_valid(a, win)
        mu_b = _filter_valid(b, win)
        s_aa = np.maximum(_filter_valid(a * a, win) - mu_a * mu_a, 0.0)
        s_bb = np.maximum(_filter_valid(b * b, win) - mu_b * mu_b, 0.0)
        s_ab = _filter_valid(a * b, win) - mu_a * mu_b

        g = s_ab / (s_aa + _VIF_EPS)
        sv2 = s_bb - g * s_ab

        flat_ref = s_aa < _VIF_EPS
        g[flat_ref] = 0.0
        sv2[flat_ref] = s_bb[flat_ref]
        s_aa = np.where(flat_ref, 0.0, s_aa)

        flat_test = s_bb < _VIF_EPS
        g[flat_test] = 0.0
        sv2[flat_test] = 0.0

        negative = g < 0
        sv2[negative] = s_bb[negative]
        g[negative] = 0.0
        sv2 = np.maximum(sv2, _VIF_EPS)

        num += float(np.sum(np.log10(1.0 + g * g * s_aa / (sv2 + sn2))))
        den += float(np.sum(np.log10(1.0 + s_aa / sn2)))
    if den == 0:
        # a featureless reference carries no information; call identical inputs perfect
        return 1.0 if np.array_equal(a, b) else 0.0
    return num / den


def compare(ref, test, data_range: float | None = None) -> MetricReport:
    a, _ = _pair(ref, test)
    data_range = resolve_data_range(a, data_range)
    return MetricReport(psnr(ref, test, data_range),
                        ssim(ref, test, SsimParams(data_range=data_range)),
                        vif(ref, test, VifParams(data_range=data_range)))


def sobel_edges(img: ImageGrid, sqrt: bool = False) -> ImageGrid:
    """Squared Sobel gradient magnitude ``Gx**2 + Gy**2`` with replicated borders.

    ``Gx`` responds to intensity increasing with column index, ``Gy`` with row
    index. Pass ``sqrt=True`` for the plain magnitude.
    """
    values = img.values.astype(np.float64)
    if min(values.shape) < 3:
        raise ValidationError("Sobel filtering needs images of at least 3x3")
    gx = ndimage.correlate(values, SOBEL_X, mode="nearest")
    gy = ndimage.correlate(values, SOBEL_Y, mode="nearest")
    out = gx * gx + gy * gy
    if sqrt:
        out = np.sqrt(out)
    return img.with_values(out)
