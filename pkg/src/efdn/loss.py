"""Training losses: plain L1/L2 and the edge-enhanced gradient-variance loss.

The edge-enhanced loss converts both images to gray, filters them with the
same fixed Sobel/Laplacian kernels the branched blocks use, compares per-patch
variance maps of the filtered images, and adds the three weighted terms to L1.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import tensor as tops
from .errors import ConfigError, DimensionError, InputError
from .filters import get_filter
from .tensor import ConvParams, Tensor

GRAY_WEIGHTS = (0.299, 0.587, 0.114)
GRADIENT_FILTERS = ("sobel_x", "sobel_y", "laplacian")
DEFAULT_LAMBDA_TOTAL = 0.03


@dataclass(frozen=True)
class LossConfig:
    """Patch side for variance maps plus the three filter-term weights."""

    patch: int = 8
    lambda_x: float = DEFAULT_LAMBDA_TOTAL / 3
    lambda_y: float = DEFAULT_LAMBDA_TOTAL / 3
    lambda_l: float = DEFAULT_LAMBDA_TOTAL / 3

    def __post_init__(self):
        if self.patch < 2:
            raise ConfigError("variance patch side must be >= 2")
        for lam in (self.lambda_x, self.lambda_y, self.lambda_l):
            if not math.isfinite(lam) or lam < 0:
                raise ConfigError("filter-term weights must be finite and >= 0")


def gray_conv_params() -> ConvParams:
    """Gray conversion expressed as a 1x1 conv so both execution styles share it."""
    w = np.array(GRAY_WEIGHTS, dtype=np.float32).reshape(1, 3, 1, 1)
    return ConvParams(w, np.zeros(1, dtype=np.float32), (0, 0))


def gradient_conv_params(filter_name: str) -> ConvParams:
    if filter_name not in GRADIENT_FILTERS:
        raise ConfigError(f"no gradient filter named {filter_name!r}")
    w = get_filter(filter_name).reshape(1, 1, 3, 3)
    return ConvParams(w, np.zeros(1, dtype=np.float32), (1, 1))


def to_gray(img: Tensor) -> Tensor:
    """Luma as 0.299 R + 0.587 G + 0.114 B on [0,1] data."""
    if img.c != 3:
        raise DimensionError(f"gray conversion expects 3 channels, got {img.c}")
    return tops.conv2d(img, gray_conv_params())


def gradient_map(gray: Tensor, filter_name: str) -> Tensor:
    """Same-size response of one fixed 3x3 filter on a single-channel image."""
    if gray.c != 1:
        raise DimensionError(f"gradient maps are defined on 1 channel, got {gray.c}")
    return tops.conv2d(gray, gradient_conv_params(filter_name))


def crop_to_multiple(x: Tensor, n: int) -> Tensor:
    """Centre-crop spatial dims down to the largest multiples of n."""
    hh, ww = (x.h // n) * n, (x.w // n) * n
    if hh == 0 or ww == 0:
        raise InputError(f"image {x.h}x{x.w} is smaller than the {n}x{n} patch")
    y0, x0 = (x.h - hh) // 2, (x.w - ww) // 2
    if (hh, ww) == (x.h, x.w):
        return x
    return Tensor(x.data[:, :, y0:y0 + hh, x0:x0 + ww])


def variance_map(gmap: Tensor, n: int) -> Tensor:
    """Unbiased sample variance of each non-overlapping n-by-n patch."""
    if n < 2:
        raise ConfigError("variance patch side must be >= 2")
    g = crop_to_multiple(gmap, n)
    tiles = g.data.reshape(g.n, g.c, g.h // n, n, g.w // n, n)
    v = tiles.var(axis=(3, 5), ddof=1, dtype=np.float64)
    return Tensor(v.astype(np.float32))


def _gv_from_maps(vs: np.ndarray, vh: np.ndarray) -> float:
    diff = (vh.astype(np.float64) - vs.astype(np.float64)).reshape(vs.shape[0], -1)
    patches = diff.shape[1]
    return float(np.mean(np.sqrt((diff ** 2).sum(axis=1)) / patches))


def gv_loss(sr: Tensor, hr: Tensor, filter_name: str, n: int = 8) -> float:
    """Per-image Euclidean distance between patch-variance maps of the filtered
    gray images, divided by the patch count, averaged over the batch."""
    if sr.dims != hr.dims:
        raise InputError(f"image pair dims differ: {sr.dims} vs {hr.dims}")
    vs = variance_map(gradient_map(to_gray(sr), filter_name), n)
    vh = variance_map(gradient_map(to_gray(hr), filter_name), n)
    return _gv_from_maps(vs.data, vh.data)


def l1_loss(a: Tensor, b: Tensor) -> float:
    if a.dims != b.dims:
        raise InputError(f"image pair dims differ: {a.dims} vs {b.dims}")
    return float(np.mean(np.abs(a.data.astype(np.float64) - b.data.astype(np.float64))))


def l2_loss(a: Tensor, b: Tensor) -> float:
    if a.dims != b.dims:
        raise InputError(f"image pair dims differ: {a.dims} vs {b.dims}")
    return float(np.mean((a.data.astype(np.float64) - b.data.astype(np.float64)) ** 2))


def eg_loss(sr: Tensor, hr: Tensor, cfg: LossConfig = LossConfig()):
    """Edge-enhanced loss: L1 plus the three weighted gradient-variance terms.

    Returns (total, components) where components holds the unweighted values
    keyed "l1", "sobel_x", "sobel_y", "laplacian".
    """
    comps = {"l1": l1_loss(sr, hr)}
    for name in GRADIENT_FILTERS:
        comps[name] = gv_loss(sr, hr, name, cfg.patch)
    total = (comps["l1"]
             + cfg.lambda_x * comps["sobel_x"]
             + cfg.lambda_y * comps["sobel_y"]
             + cfg.lambda_l * comps["laplacian"])
    return total, comps


def derive_lambdas(sx, sy, sl, total: float = DEFAULT_LAMBDA_TOTAL):
    """Split a total weight budget across the three filter terms in proportion
    to the mean absolute scale of each fixed-filter branch; equal thirds when
    every scale is zero."""
    if not math.isfinite(total) or total < 0:
        raise ConfigError("lambda budget must be finite and >= 0")
    mags = [float(np.mean(np.abs(np.asarray(s, dtype=np.float64)))) for s in (sx, sy, sl)]
    denom = sum(mags)
    if denom == 0.0:
        return (total / 3, total / 3, total / 3)
    return tuple(total * m / denom for m in mags)


def config_from_scales(scales: dict, total: float = DEFAULT_LAMBDA_TOTAL, patch: int = 8) -> LossConfig:
    """LossConfig whose weights are derived from a trained model's filter-branch
    scale vectors (falling back to equal thirds when none are available)."""
    if scales and set(GRADIENT_FILTERS) <= set(scales):
        lx, ly, ll = derive_lambdas(scales["sobel_x"], scales["sobel_y"],
                                    scales["laplacian"], total)
    else:
        lx = ly = ll = total / 3
    return LossConfig(patch=patch, lambda_x=lx, lambda_y=ly, lambda_l=ll)
