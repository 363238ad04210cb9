"""Per-feature weights from causality-map asymmetries.

For an ordered pair (i, j), feature i is counted as a *cause* of feature
j when entries[i, j] > entries[j, i] strictly; ties contribute to
neither side. Each feature's weight is the rectified difference between
how often it wins as a cause and how often it loses as an effect (or the
reverse, depending on the configured direction), optionally collapsed to
{0, 1} in bool mode.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeMismatchError
from .validation import as_square_map

DIRECTION_CAUSES = "causes"
DIRECTION_EFFECTS = "effects"
MODE_FULL = "full"
MODE_BOOL = "bool"


@dataclass(frozen=True)
class FactorConfig:
    """Direction of analysis and weighing mode for factor extraction."""

    direction: str = DIRECTION_CAUSES
    mode: str = MODE_FULL

    def __post_init__(self):
        if self.direction not in (DIRECTION_CAUSES, DIRECTION_EFFECTS):
            raise ValueError(f"direction must be 'causes' or 'effects', got {self.direction!r}")
        if self.mode not in (MODE_FULL, MODE_BOOL):
            raise ValueError(f"mode must be 'full' or 'bool', got {self.mode!r}")


@dataclass(frozen=True)
class FactorVector:
    """Non-negative per-feature multipliers plus their provenance.

    ``direction`` is None for randomly generated (damaged) vectors, where
    the notion does not apply.
    """

    weights: np.ndarray
    mode: str
    direction: str | None = None

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)


def count_causes_effects(cmap) -> tuple[np.ndarray, np.ndarray]:
    """Count directed co-occurrence wins for each feature.

    Returns integer vectors ``(causes, effects)`` where ``causes[i]`` is
    the number of features j != i with entries[i, j] > entries[j, i] and
    ``effects[j]`` counts the features that beat j. Comparisons are
    strict and exact: no tolerance band is applied, so exactly equal
    opposite entries form no edge.
    """
    m = as_square_map(np.asarray(cmap))
    if m.shape[0] < 2:
        raise ShapeMismatchError("causality map must be at least 2x2")
    upper = np.triu(m, 1)
    lower = np.tril(m, -1).T
    # wins[i, j] == True  <=>  entries[i, j] > entries[j, i]
    wins = (upper > lower) | (lower > upper).T
    causes = wins.sum(axis=1).astype(np.int64)
    effects = wins.sum(axis=0).astype(np.int64)
    return causes, effects


def extract_factors(cmap, cfg: FactorConfig | None = None) -> FactorVector:
    """Turn a causality map into a vector of feature weights.

    direction = causes keeps max(0, causes - effects) per feature,
    direction = effects the reverse; bool mode then maps every positive
    weight to 1.
    """
    if cfg is None:
        cfg = FactorConfig()
    causes, effects = count_causes_effects(cmap)
    if cfg.direction == DIRECTION_CAUSES:
        diff = causes - effects
    else:
        diff = effects - causes
    weights = np.maximum(diff, 0).astype(np.float64)
    if cfg.mode == MODE_BOOL:
        weights = (weights > 0).astype(np.float64)
    return FactorVector(weights=weights, mode=cfg.mode, direction=cfg.direction)


def damaged_factors(k: int, mode: str = MODE_FULL, rng_seed: int = 0) -> FactorVector:
    """Random replacement weights for ablation runs.

    full mode draws uniform integers in {0, ..., k-1}, bool mode uniform
    {0, 1}. Reproducible across platforms: the generator is numpy's
    default PCG64 seeded with ``rng_seed``.
    """
    if k < 2:
        raise ValueError(f"need k >= 2, got {k}")
    if mode not in (MODE_FULL, MODE_BOOL):
        raise ValueError(f"mode must be 'full' or 'bool', got {mode!r}")
    rng = np.random.default_rng(rng_seed)
    high = k if mode == MODE_FULL else 2
    weights = rng.integers(0, high, size=k).astype(np.float64)
    return FactorVector(weights=weights, mode=mode, direction=None)
