"""Causality maps from stacks of non-negative feature maps.

A stack of k rectified n x n feature maps, normalized to [0, 1] by its
global maximum, can be read as per-location presence probabilities. For
every ordered pair of maps (i, j) we estimate the conditional probability
P(i | j) of feature i appearing given feature j, producing a k x k
*causality map* whose off-diagonal asymmetries carry weak directional
signals about feature co-occurrence.

Two estimators are supported:

* ``max``: P(i | j) = max(F_i) * max(F_j) / sum(F_j)
* ``lehmer``: P(i | j) = LM_p(products of all element pairs of F_i, F_j)
  / LM_p(F_j), where LM_p(x) = sum(x^(p+1)) / sum(x^p) is the generalized
  Lehmer mean with exponent p.

The Lehmer numerator is mathematically a mean over the n^4 pairwise
products, but since sum((a*b)^q) over all pairs factorizes into
sum(a^q) * sum(b^q), it is computed in O(n^2) without materializing the
product vector. Tests check this against the literal construction.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyVectorError, NumericOverflowError, ZeroStackError
from .validation import as_feature_stack, check_epsilon

METHOD_MAX = "max"
METHOD_LEHMER = "lehmer"

#: Lehmer exponents explored in the original study; the library accepts any finite p.
LEHMER_P_GRID = (-100.0, -2.0, -1.0, 0.0, 1.0, 100.0)

DEFAULT_EPSILON = 1e-12


@dataclass(frozen=True)
class EstimatorConfig:
    """How to turn a feature stack into a causality map.

    ``lehmer_p`` is only consulted when ``method == "lehmer"``.
    ``epsilon`` guards denominators (and, for negative exponents, the
    individual activations) against zero.
    """

    method: str = METHOD_MAX
    lehmer_p: float = 0.0
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.method not in (METHOD_MAX, METHOD_LEHMER):
            raise ValueError(f"method must be '{METHOD_MAX}' or '{METHOD_LEHMER}', got {self.method!r}")
        if not np.isfinite(self.lehmer_p):
            raise ValueError("lehmer_p must be finite")
        check_epsilon(self.epsilon)


@dataclass(frozen=True)
class CausalityMap:
    """A k x k matrix of pairwise conditional-probability estimates.

    ``entries[i, j]`` estimates P(feature i | feature j). ``method`` tags
    the estimator that produced it.
    """

    entries: np.ndarray
    method: str

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def normalize_stack(stack) -> np.ndarray:
    """Divide a feature stack by its global maximum activation.

    Raises :class:`ZeroStackError` when the stack is all zero: such a
    stack carries no co-occurrence signal.
    """
    arr = as_feature_stack(stack)
    peak = arr.max()
    if peak <= 0.0:
        raise ZeroStackError("feature stack is all zero; nothing to normalize")
    return arr / peak


def lehmer_mean(x, p: float, epsilon: float = DEFAULT_EPSILON) -> float:
    """Generalized Lehmer mean sum(x^(p+1)) / sum(x^p) of a non-negative vector.

    Interpolates between min and max of ``x`` as p varies: p = -1 is the
    harmonic mean, p = 0 the arithmetic mean, p = 1 the contraharmonic
    mean. For p < 0, elements below ``epsilon`` are clamped to ``epsilon``
    before exponentiation so negative powers stay finite.
    """
    epsilon = check_epsilon(epsilon)
    v = np.asarray(x, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyVectorError("lehmer_mean of an empty vector")
    if np.any(v < 0):
        raise ValueError("lehmer_mean requires non-negative elements")
    if p < 0:
        v = np.maximum(v, epsilon)
    with np.errstate(over="ignore", invalid="ignore"):
        num = np.sum(v ** (p + 1.0))
        den = np.sum(v**p)
    return float(num / max(den, epsilon))


def _max_entries(flat: np.ndarray, epsilon: float) -> np.ndarray:
    """Max-estimator map from per-map flattened activations (k, m)."""
    maxima = flat.max(axis=1)
    sums = flat.sum(axis=1)
    den = np.maximum(sums, epsilon)
    return np.outer(maxima, maxima) / den[np.newaxis, :]


def _lehmer_entries(flat: np.ndarray, p: float, epsilon: float) -> np.ndarray:
    """Lehmer-estimator map from per-map flattened activations (k, m).

    Clamping happens once, on the activations, before any product is
    formed; this keeps the factorized power sums exactly equal to the
    literal n^4 construction.
    """
    if p < 0:
        flat = np.maximum(flat, epsilon)
    with np.errstate(over="ignore", invalid="ignore"):
        hi = np.sum(flat ** (p + 1.0), axis=1)  # per-map sum x^(p+1)
        lo = np.sum(flat**p, axis=1)  # per-map sum x^p
        pair_num = hi[:, np.newaxis] * hi[np.newaxis, :]
        pair_den = np.maximum(lo[:, np.newaxis] * lo[np.newaxis, :], epsilon)
        lm_pairs = pair_num / pair_den
        lm_single = hi / np.maximum(lo, epsilon)
        entries = lm_pairs / np.maximum(lm_single, epsilon)[np.newaxis, :]
    return entries


def compute_causality_map(stack, cfg: EstimatorConfig | None = None) -> CausalityMap:
    """Estimate the k x k causality map of a feature stack.

    The stack is normalized internally by its global maximum, so the
    result is invariant to positive rescaling of the input. Diagonal
    entries are computed like any other pair.

    Raises :class:`ZeroStackError` for an all-zero stack and
    :class:`NumericOverflowError` when an intermediate overflows (the
    Lehmer exponent is too extreme for the data).
    """
    if cfg is None:
        cfg = EstimatorConfig()
    norm = normalize_stack(stack)
    k = norm.shape[0]
    flat = norm.reshape(k, -1)
    if cfg.method == METHOD_MAX:
        entries = _max_entries(flat, cfg.epsilon)
    else:
        entries = _lehmer_entries(flat, cfg.lehmer_p, cfg.epsilon)
    if not np.all(np.isfinite(entries)):
        raise NumericOverflowError(
            f"causality map has non-finite entries (method={cfg.method}, p={cfg.lehmer_p}); "
            "the exponent is too extreme for this stack's value range"
        )
    return CausalityMap(entries=entries, method=cfg.method)
