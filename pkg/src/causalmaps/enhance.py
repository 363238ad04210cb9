"""Feature enhancement: inject causality information into a feature stack.

Four schemes, all returning a flat payload tagged with its layout:

* ``cat``      - append the flattened causality map to the flattened stack
* ``mulcat``   - append a factor-weighted copy of the stack to the original
* ``cab``      - rescale factors to [0, 1] and add the weighted copy
                 element-wise, preserving the stack's shape (parameter-free)
* ``damaged_cat`` - cat with a seeded random map, for ablations

Concatenation order is fixed: original features first, causal block
second, row-major flattening throughout.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeMismatchError
from .validation import as_feature_stack, as_square_map

LAYOUT_BASELINE = "baseline"
LAYOUT_CAT = "cat"
LAYOUT_MULCAT = "mulcat"
LAYOUT_CAB = "cab"


def layout_length(layout: str, k: int, n: int) -> int:
    """Payload length implied by a layout tag for a k x n x n stack."""
    base = k * n * n
    if layout == LAYOUT_BASELINE:
        return base
    if layout == LAYOUT_CAT:
        return base + k * k
    if layout == LAYOUT_MULCAT:
        return 2 * base
    if layout == LAYOUT_CAB:
        return base
    raise ValueError(f"unknown layout {layout!r}")


@dataclass(frozen=True)
class EnhancedFeatures:
    """Flat feature payload plus the layout tag that fixes its meaning."""

    payload: np.ndarray
    layout: str
    k: int
    n: int

    def __post_init__(self):
        expected = layout_length(self.layout, self.k, self.n)
        if self.payload.ndim != 1 or self.payload.size != expected:
            raise ShapeMismatchError(
                f"{self.layout} payload for k={self.k}, n={self.n} must have length "
                f"{expected}, got shape {self.payload.shape}"
            )

    def as_stack(self) -> np.ndarray:
        """Reshape shape-preserving layouts back to (k, n, n)."""
        if self.layout not in (LAYOUT_BASELINE, LAYOUT_CAB):
            raise ShapeMismatchError(f"layout {self.layout!r} does not preserve the stack shape")
        return self.payload.reshape(self.k, self.n, self.n)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.payload, dtype=dtype)


def _check_factors(factors, k: int) -> np.ndarray:
    w = np.asarray(factors, dtype=np.float64).ravel()
    if w.size != k:
        raise ShapeMismatchError(f"factor vector has length {w.size}, stack has k={k} maps")
    return w


def baseline_features(stack) -> EnhancedFeatures:
    """The unenhanced stack, flattened."""
    arr = as_feature_stack(stack)
    k, n, _ = arr.shape
    return EnhancedFeatures(payload=arr.ravel(), layout=LAYOUT_BASELINE, k=k, n=n)


def enhance_cat(stack, cmap) -> EnhancedFeatures:
    """Concatenate the flattened causality map after the flattened stack."""
    arr = as_feature_stack(stack)
    k, n, _ = arr.shape
    entries = as_square_map(np.asarray(cmap), k=k)
    payload = np.concatenate([arr.ravel(), entries.ravel()])
    return EnhancedFeatures(payload=payload, layout=LAYOUT_CAT, k=k, n=n)


def enhance_mulcat(stack, factors) -> EnhancedFeatures:
    """Concatenate a factor-weighted copy of the stack after the original.

    Each map i is multiplied by factors[i]; the stack is used as given
    (normalization policy is the caller's concern).
    """
    arr = as_feature_stack(stack)
    k, n, _ = arr.shape
    w = _check_factors(factors, k)
    weighted = w[:, np.newaxis, np.newaxis] * arr
    payload = np.concatenate([arr.ravel(), weighted.ravel()])
    return EnhancedFeatures(payload=payload, layout=LAYOUT_MULCAT, k=k, n=n)


def enhance_cab(stack, factors) -> EnhancedFeatures:
    """Add a rescaled factor-weighted copy of each map to itself.

    Factors are divided by k - 1 (the largest possible win count) so the
    per-map gain 1 + factor/(k-1) stays in [1, 2]; the output keeps the
    input's shape and adds no parameters downstream.
    """
    arr = as_feature_stack(stack)
    k, n, _ = arr.shape
    w = _check_factors(factors, k)
    gains = 1.0 + w / (k - 1)
    out = gains[:, np.newaxis, np.newaxis] * arr
    return EnhancedFeatures(payload=out.ravel(), layout=LAYOUT_CAB, k=k, n=n)


def damaged_cat(stack, rng_seed: int = 0) -> EnhancedFeatures:
    """cat with the computed map replaced by seeded uniform [0, 1] noise."""
    arr = as_feature_stack(stack)
    k, n, _ = arr.shape
    rng = np.random.default_rng(rng_seed)
    fake = rng.random((k, k))
    payload = np.concatenate([arr.ravel(), fake.ravel()])
    return EnhancedFeatures(payload=payload, layout=LAYOUT_CAT, k=k, n=n)
