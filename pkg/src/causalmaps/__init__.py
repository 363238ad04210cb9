"""causalmaps: weak causality signals from feature co-occurrence.

The package computes k x k causality maps from stacks of non-negative
feature maps, turns their asymmetries into per-feature weights, applies
those weights back to the features (cat / mulcat / cab schemes), defines
the matching prior-alignment losses, and ships an activation-maximization
lab plus a desk-scale trainable classifier to exercise everything
end to end.
"""

from .am import (
    AmConfig,
    am_run,
    combined_prior_loss,
    frequency_loss,
    histogram_loss,
    noise_loss,
    quadratic_scorer,
    symmetry_loss,
)
from .cmap import (
    LEHMER_P_GRID,
    METHOD_LEHMER,
    METHOD_MAX,
    CausalityMap,
    EstimatorConfig,
    compute_causality_map,
    lehmer_mean,
    normalize_stack,
)
from .enhance import (
    EnhancedFeatures,
    baseline_features,
    damaged_cat,
    enhance_cab,
    enhance_cat,
    enhance_mulcat,
    layout_length,
)
from .estimators import (
    CausalityFactorTransformer,
    CausalityMapTransformer,
    DeskNetClassifier,
    FeatureEnhancer,
)
from .exceptions import (
    CausalmapsError,
    DegenerateTargetError,
    DivergedLossError,
    EmptyBatchError,
    EmptyVectorError,
    NonFiniteGradientError,
    NumericOverflowError,
    ShapeMismatchError,
    ZeroStackError,
)
from .factors import (
    DIRECTION_CAUSES,
    DIRECTION_EFFECTS,
    MODE_BOOL,
    MODE_FULL,
    FactorConfig,
    FactorVector,
    count_causes_effects,
    damaged_factors,
    extract_factors,
)
from .losses import (
    ALIGNMENT_SITES,
    DEFAULT_PRIOR_WEIGHT,
    DEFAULT_SITE_WEIGHTS,
    embedding_causality_map,
    minibatch_alignment_loss,
    task_prior_loss,
    weighted_total_alignment,
)

__version__ = "0.1.0"

__all__ = [
    "AmConfig", "am_run", "combined_prior_loss", "frequency_loss",
    "histogram_loss", "noise_loss", "quadratic_scorer", "symmetry_loss",
    "LEHMER_P_GRID", "METHOD_LEHMER", "METHOD_MAX", "CausalityMap",
    "EstimatorConfig", "compute_causality_map", "lehmer_mean", "normalize_stack",
    "EnhancedFeatures", "baseline_features", "damaged_cat", "enhance_cab",
    "enhance_cat", "enhance_mulcat", "layout_length",
    "CausalityFactorTransformer", "CausalityMapTransformer",
    "DeskNetClassifier", "FeatureEnhancer",
    "CausalmapsError", "DegenerateTargetError", "DivergedLossError",
    "EmptyBatchError", "EmptyVectorError", "NonFiniteGradientError",
    "NumericOverflowError", "ShapeMismatchError", "ZeroStackError",
    "DIRECTION_CAUSES", "DIRECTION_EFFECTS", "MODE_BOOL", "MODE_FULL",
    "FactorConfig", "FactorVector", "count_causes_effects",
    "damaged_factors", "extract_factors",
    "ALIGNMENT_SITES", "DEFAULT_PRIOR_WEIGHT", "DEFAULT_SITE_WEIGHTS",
    "embedding_causality_map", "minibatch_alignment_loss", "task_prior_loss",
    "weighted_total_alignment",
]
