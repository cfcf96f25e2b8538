"""Image I/O, bicubic resampling, and Y-channel PSNR/SSIM evaluation.

Files are 8-bit RGB PNGs (16-bit inputs are rounded down to 8 bits on load).
In memory, images travel as rank-4 tensors in [0,1]; metrics convert to
studio-range luma on the 0-255 scale, matching how super-resolution results
are conventionally reported.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import DimensionError, InputError
from .tensor import Tensor, conv2d_raw

CUBIC_A = -0.5
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
LUMA_PEAK = 255.0

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class Image:
    """An 8-bit RGB raster."""

    pixels: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise DimensionError(f"image must be (H,W,3), got {px.shape}")
        if px.dtype != np.uint8:
            raise DimensionError(f"image must be uint8, got {px.dtype}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


def tensor_from_image(img: Image) -> Tensor:
    """(H,W,3) uint8 -> (1,3,H,W) float in [0,1]."""
    x = img.pixels.astype(np.float32) / 255.0
    return Tensor(x.transpose(2, 0, 1)[None])


def image_from_tensor(t: Tensor) -> Image:
    """First batch item, clipped to [0,1] and rounded to 8 bits."""
    if t.n != 1 or t.c != 3:
        raise DimensionError(f"expected a single 3-channel image, got dims {t.dims}")
    x = np.clip(t.data[0], 0.0, 1.0)
    px = np.round(x * 255.0).astype(np.uint8).transpose(1, 2, 0)
    return Image(px)


def load_png(path) -> Image:
    """Read an RGB PNG; 16-bit files are converted with rounding (v / 257)."""
    path = str(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(26)
    except OSError as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
    if len(head) < 26 or not head.startswith(_PNG_SIGNATURE):
        raise InputError(f"cannot read image {path}: not a PNG file")
    bit_depth = head[24]
    if bit_depth == 16:
        import cv2

        raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise InputError(f"cannot read image {path}: undecodable 16-bit PNG")
        if raw.ndim == 2:
            raw = np.stack([raw] * 3, axis=2)
        if raw.shape[2] == 4:
            raw = raw[:, :, :3]
        rgb16 = raw[:, :, ::-1].astype(np.float64)
        return Image(np.round(rgb16 / 257.0).astype(np.uint8))
    from PIL import Image as PilImage

    try:
        with PilImage.open(path) as pil:
            rgb = pil.convert("RGB")
            return Image(np.asarray(rgb, dtype=np.uint8))
    except Exception as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc


def save_png(img: Image, path):
    from PIL import Image as PilImage

    PilImage.fromarray(img.pixels, mode="RGB").save(str(path), format="PNG")


# ---------------------------------------------------------------------------
# bicubic resampling
# ---------------------------------------------------------------------------

def _cubic(x):
    x = np.abs(x)
    a = CUBIC_A
    near = (a + 2) * x ** 3 - (a + 3) * x ** 2 + 1
    far = a * x ** 3 - 5 * a * x ** 2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def bicubic_weight_matrix(in_len: int, out_len: int) -> np.ndarray:
    """Row-stochastic (out_len, in_len) resampling matrix.

    Output position i samples source coordinate (i+0.5)/scale - 0.5. On
    downscale the kernel is widened by 1/scale (antialias); sample indices are
    clamped to the edges and each row is normalized to sum exactly 1.
    """
    if out_len < 1:
        raise InputError(f"resize to {out_len} samples is empty")
    scale = out_len / in_len
    kscale = min(scale, 1.0)
    support = 2.0 / kscale
    m = np.zeros((out_len, in_len), dtype=np.float64)
    for i in range(out_len):
        s = (i + 0.5) / scale - 0.5
        lo = int(math.floor(s - support)) + 1
        hi = int(math.floor(s + support))
        idx = np.arange(lo, hi + 1)
        w = _cubic((s - idx) * kscale)
        np.add.at(m[i], np.clip(idx, 0, in_len - 1), w)
        m[i] /= m[i].sum()
    return m


def bicubic_resize(img: Tensor, scale: float) -> Tensor:
    """Separable cubic-convolution resampling by a positive scale factor."""
    if scale <= 0:
        raise InputError(f"scale must be positive, got {scale}")
    out_h = int(round(img.h * scale))
    out_w = int(round(img.w * scale))
    if out_h < 1 or out_w < 1:
        raise InputError(f"resize of {img.h}x{img.w} by {scale} is empty")
    mh = bicubic_weight_matrix(img.h, out_h)
    mw = bicubic_weight_matrix(img.w, out_w)
    x = img.data.astype(np.float64)
    y = np.einsum("oh,nchw->ncow", mh, x, optimize=True)
    y = np.einsum("pw,ncow->ncop", mw, y, optimize=True)
    return Tensor(y.astype(np.float32))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def luma_y(img: Tensor) -> np.ndarray:
    """Studio-range luma on the 0-255 scale: 16 + 65.481 R + 128.553 G + 24.966 B."""
    if img.c != 3:
        raise DimensionError(f"luma expects 3 channels, got {img.c}")
    r, g, b = (img.data[:, i].astype(np.float64) for i in range(3))
    return 16.0 + 65.481 * r + 128.553 * g + 24.966 * b


def _shave(y: np.ndarray, s: int) -> np.ndarray:
    if s < 0:
        raise InputError("shave must be >= 0")
    if s == 0:
        return y
    if 2 * s >= y.shape[1] or 2 * s >= y.shape[2]:
        raise InputError(f"shave {s} leaves no pixels of {y.shape[1]}x{y.shape[2]}")
    return y[:, s:-s, s:-s]


def psnr(a: np.ndarray, b: np.ndarray, peak: float = None) -> float:
    """PSNR between two arrays; peak defaults to the dynamic range of `a`.
    Identical inputs give the positive-infinity sentinel."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    if peak is None:
        peak = float(a.max() - a.min())
        if peak == 0.0:
            peak = 1.0
    return 10.0 * math.log10(peak * peak / mse)


def psnr_y(sr: Tensor, hr: Tensor, shave: int = 0) -> float:
    """Y-channel PSNR in dB on the 0-255 scale; inf when identical."""
    if sr.dims != hr.dims:
        raise InputError(f"image pair dims differ: {sr.dims} vs {hr.dims}")
    ys = _shave(luma_y(sr), shave)
    yh = _shave(luma_y(hr), shave)
    return psnr(ys, yh, peak=LUMA_PEAK)


def _gaussian_window() -> np.ndarray:
    half = (SSIM_WINDOW - 1) / 2.0
    i = np.arange(SSIM_WINDOW) - half
    g = np.exp(-(i ** 2) / (2.0 * SSIM_SIGMA ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim_y(sr: Tensor, hr: Tensor, shave: int = 0) -> float:
    """Mean structural similarity on Y, Gaussian 11x11 window (sigma 1.5),
    valid windows only, on the 0-255 scale."""
    if sr.dims != hr.dims:
        raise InputError(f"image pair dims differ: {sr.dims} vs {hr.dims}")
    ys = _shave(luma_y(sr), shave)[:, None]
    yh = _shave(luma_y(hr), shave)[:, None]
    if ys.shape[2] < SSIM_WINDOW or ys.shape[3] < SSIM_WINDOW:
        raise InputError(f"image {ys.shape[2]}x{ys.shape[3]} smaller than the "
                         f"{SSIM_WINDOW}x{SSIM_WINDOW} window")
    win = _gaussian_window().reshape(1, 1, SSIM_WINDOW, SSIM_WINDOW)
    zero = np.zeros(1, dtype=np.float64)

    def blur(z):
        return conv2d_raw(z, win, zero, (0, 0))

    c1 = (SSIM_K1 * LUMA_PEAK) ** 2
    c2 = (SSIM_K2 * LUMA_PEAK) ** 2
    mu1, mu2 = blur(ys), blur(yh)
    s11 = blur(ys * ys) - mu1 * mu1
    s22 = blur(yh * yh) - mu2 * mu2
    s12 = blur(ys * yh) - mu1 * mu2
    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))
