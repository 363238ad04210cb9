"""Input validation helpers shared across the package.

All numeric work happens in float64; these helpers coerce inputs once at
the public boundary so the numerical code can assume clean arrays.
"""

import numpy as np

from .exceptions import ShapeMismatchError


def as_feature_stack(maps) -> np.ndarray:
    """Coerce ``maps`` to a valid k x n x n feature stack.

    A feature stack holds k square maps of rectified (non-negative,
    finite) activations, k >= 2.
    """
    arr = np.asarray(maps, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeMismatchError(f"feature stack must be 3-D (k, n, n), got shape {arr.shape}")
    k, n, m = arr.shape
    if n != m:
        raise ShapeMismatchError(f"feature maps must be square, got {n}x{m}")
    if k < 2:
        raise ShapeMismatchError(f"need at least 2 feature maps, got {k}")
    if n < 1:
        raise ShapeMismatchError("feature maps must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature stack contains non-finite values")
    if np.any(arr < 0):
        raise ValueError("feature stack contains negative values; activations must be rectified")
    return arr


def as_square_map(entries, k: int | None = None) -> np.ndarray:
    """Coerce ``entries`` to a k x k float64 matrix, optionally checking k."""
    arr = np.asarray(entries, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeMismatchError(f"expected a square matrix, got shape {arr.shape}")
    if k is not None and arr.shape[0] != k:
        raise ShapeMismatchError(f"expected a {k}x{k} matrix, got {arr.shape[0]}x{arr.shape[0]}")
    return arr


def as_embedding_rows(rows) -> np.ndarray:
    """Coerce ``rows`` to a valid n_c x h embedding matrix (n_c >= 2, h >= 1)."""
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"embeddings must be 2-D (n_c, h), got shape {arr.shape}")
    n_c, h = arr.shape
    if n_c < 2 or h < 1:
        raise ShapeMismatchError(f"need n_c >= 2 and h >= 1, got {n_c}x{h}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("embeddings contain non-finite values")
    if np.any(arr < 0):
        raise ValueError("embeddings contain negative values")
    return arr


def as_image(pixels) -> np.ndarray:
    """Coerce ``pixels`` to an H x W x C float64 image, C in {1, 3}.

    A bare 2-D array is promoted to a single channel.
    """
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ShapeMismatchError(f"image must be H x W x C with C in {{1, 3}}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    return arr


def check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not (epsilon > 0 and np.isfinite(epsilon)):
        raise ValueError(f"epsilon must be a finite positive real, got {epsilon}")
    return epsilon
