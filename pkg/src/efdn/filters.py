"""Fixed 3x3 filter constants used by both the re-parameterizable block and the loss.

Single source of truth: the edge filters inside the trainable block and the
filters driving the gradient-variance loss must be identical, so every module
looks them up here by name.
"""

import numpy as np

from .errors import ConfigError

SOBEL_X = np.array(
    [[-1.0, 0.0, 1.0],
     [-2.0, 0.0, 2.0],
     [-1.0, 0.0, 1.0]], dtype=np.float32)

SOBEL_Y = SOBEL_X.T.copy()

# 4-neighbour Laplacian.
LAPLACIAN = np.array(
    [[0.0, 1.0, 0.0],
     [1.0, -4.0, 1.0],
     [0.0, 1.0, 0.0]], dtype=np.float32)

# 3x3 box mean, used only by the avgpool ablation branch.
AVGPOOL = np.full((3, 3), 1.0 / 9.0, dtype=np.float32)

_REGISTRY = {
    "sobel_x": SOBEL_X,
    "sobel_y": SOBEL_Y,
    "laplacian": LAPLACIAN,
    "avgpool": AVGPOOL,
}

# Identifiers written into weights files so an alternative constant (e.g. an
# 8-neighbour Laplacian added later) stays loadable by name.
FILTER_IDS = {
    "sobel_x": "sobel3_x",
    "sobel_y": "sobel3_y",
    "laplacian": "laplacian_4n",
    "avgpool": "box3_mean",
}

_ID_TO_NAME = {v: k for k, v in FILTER_IDS.items()}


def get_filter(name: str) -> np.ndarray:
    """Return the fixed 3x3 kernel registered under ``name``."""
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown fixed filter {name!r}; known: {sorted(_REGISTRY)}") from None


def filter_names() -> tuple:
    return tuple(sorted(_REGISTRY))


def name_from_id(filter_id: str) -> str:
    """Map a stored filter identifier back to its registry name."""
    try:
        return _ID_TO_NAME[filter_id]
    except KeyError:
        raise ConfigError(f"unknown fixed-filter identifier {filter_id!r}") from None
