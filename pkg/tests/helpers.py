"""Shared test oracles, independent of the library's vectorized paths."""

import numpy as np

from causalmaps.cmap import METHOD_MAX


def oracle_causality_map(stack, cfg) -> np.ndarray:
    """Scalar double-loop evaluation of the defining estimator equations.

    Normalizes by the global maximum, then walks every ordered pair
    (i, j). The Lehmer branch materializes the literal n^4 product
    vector per pair, which the production code is allowed to factorize
    away.
    """
    arr = np.asarray(stack, dtype=np.float64)
    peak = arr.max()
    norm = arr / peak
    k = norm.shape[0]
    flat = norm.reshape(k, -1)
    eps = cfg.epsilon
    if cfg.method != METHOD_MAX and cfg.lehmer_p < 0:
        flat = np.maximum(flat, eps)
    out = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            xi, xj = flat[i], flat[j]
            if cfg.method == METHOD_MAX:
                out[i, j] = xi.max() * xj.max() / max(xj.sum(), eps)
            else:
                p = cfg.lehmer_p
                products = np.outer(xi, xj).ravel()  # all n^4 pairwise products
                lm_pair = products ** (p + 1.0)
                lm_pair = lm_pair.sum() / max((products**p).sum(), eps)
                lm_j = (xj ** (p + 1.0)).sum() / max((xj**p).sum(), eps)
                out[i, j] = lm_pair / max(lm_j, eps)
    return out


def oracle_counts(entries) -> tuple[np.ndarray, np.ndarray]:
    """Ordered-pair loop definition of the causes/effects counts."""
    m = np.asarray(entries, dtype=np.float64)
    k = m.shape[0]
    causes = np.zeros(k, dtype=np.int64)
    effects = np.zeros(k, dtype=np.int64)
    for i in range(k):
        for j in range(k):
            if i != j and m[i, j] > m[j, i]:
                causes[i] += 1
                effects[j] += 1
    return causes, effects


def finite_difference_grad(fn, img, h=1e-5) -> np.ndarray:
    """Central finite differences of a scalar-valued image function."""
    img = np.array(img, dtype=np.float64)
    grad = np.zeros_like(img)
    flat, gflat = img.ravel(), grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(img)
        flat[i] = orig - h
        down = fn(img)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(a, b) -> float:
    """Norm-wise relative difference, safe at zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm((a - b).ravel()) / denom)


def random_stack(rng, k=None, n=None, low=0.0) -> np.ndarray:
    """Random non-negative stack; ``low`` bounds values away from zero."""
    if k is None:
        k = int(rng.integers(2, 17))
    if n is None:
        n = int(rng.integers(1, 9))
    return low + (1.0 - low) * rng.random((k, n, n))


def nudge_off_histogram_kinks(img, n_bins, lo=0.0, hi=1.0, margin=1e-4):
    """Move pixels off the triangular kernel's kink points.

    The soft histogram is piecewise linear in each pixel with kinks at
    the bin centers; finite differences straddling a kink are
    meaningless, so gradient checks sample away from them.
    """
    img = np.array(img, dtype=np.float64)
    width = (hi - lo) / n_bins
    pos = (img - lo) / width - 0.5
    near = np.abs(pos - np.round(pos)) * width < margin
    img[near] += 2.0 * margin
    return img
