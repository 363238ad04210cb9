"""Alignment losses that pull causality maps toward priors.

Two penalties, both plain non-negative MSE quantities to be *added* to a
training objective:

* task-prior loss: distance between the causality map computed from
  learned class embeddings and a ground-truth map supplied as data.
* mini-batch alignment loss: distance between each sample's causality
  map and the mean map of its class within the batch.

Reductions are means over elements so the magnitudes do not grow with
map size.
"""

import numpy as np

from .cmap import DEFAULT_EPSILON, _max_entries
from .exceptions import EmptyBatchError, ShapeMismatchError, ZeroStackError
from .validation import as_embedding_rows, check_epsilon

#: Weight on the task-prior penalty. The full-scale study used 100 inside a
#: much larger objective; 1.0 is a neutral default for small setups.
DEFAULT_PRIOR_WEIGHT = 1.0

#: Site order and weights for the hierarchical alignment total.
ALIGNMENT_SITES = ("v1", "pfc", "it")
DEFAULT_SITE_WEIGHTS = (0.7, 0.5, 0.1)


def embedding_causality_map(q, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Max-estimator causality map over the rows of an embedding matrix.

    ``q`` is an n_c x h matrix of non-negative per-class embeddings. It
    is normalized by its global maximum, then entry [i, j] is
    max(q_i) * max(q_j) / sum(q_j) with the denominator clamped at
    ``epsilon``.
    """
    epsilon = check_epsilon(epsilon)
    rows = as_embedding_rows(q)
    peak = rows.max()
    if peak <= 0.0:
        raise ZeroStackError("embedding matrix is all zero")
    return _max_entries(rows / peak, epsilon)


def task_prior_loss(c, c_gt) -> float:
    """Mean squared difference between a causality map and its prior."""
    a = np.asarray(c, dtype=np.float64)
    b = np.asarray(c_gt, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"map shapes disagree: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def minibatch_alignment_loss(maps, labels) -> float:
    """Average squared distance of each sample's map to its class mean.

    ``maps`` is a stack of B per-sample k x k causality maps, ``labels``
    a length-B vector of class ids. The distance is the squared
    Frobenius norm; the result is 0 exactly when every class's maps are
    identical (a singleton class is its own mean).
    """
    arr = np.asarray(maps, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ShapeMismatchError(f"expected (B, k, k) maps, got shape {arr.shape}")
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != arr.shape[0]:
        raise ShapeMismatchError(f"labels shape {y.shape} does not match batch of {arr.shape[0]}")
    batch = arr.shape[0]
    if batch == 0:
        raise EmptyBatchError("mini-batch alignment loss of an empty batch")
    total = 0.0
    for cls in np.unique(y):
        members = arr[y == cls]
        mean_map = members.mean(axis=0)
        total += float(((members - mean_map) ** 2).sum())
    return total / batch


def weighted_total_alignment(losses, weights=DEFAULT_SITE_WEIGHTS) -> float:
    """Weighted sum of per-site alignment losses.

    The default weights (0.7, 0.5, 0.1) correspond to the early, middle,
    and late attachment sites in the hierarchical setup.
    """
    values = np.asarray(losses, dtype=np.float64).ravel()
    w = np.asarray(weights, dtype=np.float64).ravel()
    if values.shape != w.shape:
        raise ShapeMismatchError(f"{values.size} losses but {w.size} weights")
    if np.any(w < 0):
        raise ValueError("site weights must be non-negative")
    return float(np.dot(w, values))
