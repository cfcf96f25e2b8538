"""Dataset helpers: procedural high-resolution crops for desk-scale training,
directory loading, and bicubic low-resolution pair synthesis."""

import os

import numpy as np

from .errors import InputError
from .imaging import bicubic_resize, load_png, tensor_from_image
from .tensor import Tensor


def _edge_crop(rng, size):
    """A soft step edge at a random angle and offset, two random colors."""
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    theta = rng.uniform(0, np.pi)
    offset = rng.uniform(0.3, 0.7)
    d = (xx - 0.5) * np.cos(theta) + (yy - 0.5) * np.sin(theta) + 0.5 - offset
    soft = 1.0 / (1.0 + np.exp(-d * rng.uniform(20, 60)))
    c0, c1 = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
    img = c0[:, None, None] + (c1 - c0)[:, None, None] * soft[None]
    return img


def _gradient_crop(rng, size):
    """A linear color ramp in a random direction."""
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    theta = rng.uniform(0, 2 * np.pi)
    t = (xx - 0.5) * np.cos(theta) + (yy - 0.5) * np.sin(theta) + 0.5
    c0, c1 = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
    return c0[:, None, None] + (c1 - c0)[:, None, None] * t[None]


def _texture_crop(rng, size):
    """Band-limited noise (upsampled coarse noise) plus a faint grating."""
    coarse = rng.uniform(0, 1, (1, 3, size // 4, size // 4)).astype(np.float32)
    smooth = bicubic_resize(Tensor(coarse), 4.0).data[0].astype(np.float64)
    yy, xx = np.mgrid[0:size, 0:size] / size
    freq = rng.uniform(2, 6)
    theta = rng.uniform(0, np.pi)
    grating = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)))
    mix = 0.7 * smooth + 0.3 * grating[None]
    return mix


_KINDS = (_edge_crop, _gradient_crop, _texture_crop)


def synthetic_hr_crops(count: int, size: int, rng) -> list:
    """Procedural HR crops cycling through edges, gradients, and textures.
    Deterministic for a given generator state."""
    crops = []
    for i in range(count):
        img = _KINDS[i % len(_KINDS)](rng, size)
        crops.append(Tensor(np.clip(img, 0.0, 1.0)[None].astype(np.float32)))
    return crops


def degrade(hr: Tensor, scale: int) -> Tensor:
    """Bicubic low-resolution counterpart of an HR image."""
    if hr.h % scale or hr.w % scale:
        raise InputError(f"HR size {hr.h}x{hr.w} not divisible by scale {scale}")
    return bicubic_resize(hr, 1.0 / scale)


def make_pairs(hr_crops, scale: int) -> list:
    """(lr, hr) tuples for training."""
    return [(degrade(hr, scale), hr) for hr in hr_crops]


def list_pngs(directory) -> list:
    directory = str(directory)
    if not os.path.isdir(directory):
        raise InputError(f"not a directory: {directory}")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".png"))
    if not names:
        raise InputError(f"no PNG files in {directory}")
    return names


def load_image_dir(directory) -> list:
    """Sorted (name, tensor) pairs for every PNG in a directory."""
    return [(name, tensor_from_image(load_png(os.path.join(str(directory), name))))
            for name in list_pngs(directory)]
