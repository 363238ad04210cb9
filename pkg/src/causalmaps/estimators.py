"""scikit-learn style wrappers around the functional core.

These make the stack -> map -> factors -> enhanced-features chain and
the desk classifier compose with the wider ecosystem (``Pipeline``,
``clone``, grid search). All transformers are stateless: ``fit`` only
validates. Samples ride along the first axis throughout.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import desknet
from .cmap import EstimatorConfig, compute_causality_map
from .enhance import damaged_cat, enhance_cab, enhance_cat, enhance_mulcat
from .exceptions import ShapeMismatchError
from .factors import FactorConfig, damaged_factors, extract_factors


def _as_stack_batch(X) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[np.newaxis]
    if arr.ndim != 4 or arr.shape[2] != arr.shape[3]:
        raise ShapeMismatchError(
            f"expected stacks of shape (n_samples, k, n, n), got {arr.shape}"
        )
    return arr


class CausalityMapTransformer(BaseEstimator, TransformerMixin):
    """Per-sample causality maps from batches of feature stacks.

    transform maps (n_samples, k, n, n) to (n_samples, k, k).
    """

    def __init__(self, method="max", lehmer_p=0.0, epsilon=1e-12):
        self.method = method
        self.lehmer_p = lehmer_p
        self.epsilon = epsilon

    def _config(self) -> EstimatorConfig:
        return EstimatorConfig(method=self.method, lehmer_p=self.lehmer_p, epsilon=self.epsilon)

    def fit(self, X, y=None):
        self._config()
        _as_stack_batch(X)
        return self

    def transform(self, X):
        cfg = self._config()
        stacks = _as_stack_batch(X)
        return np.stack([compute_causality_map(s, cfg).entries for s in stacks])


class CausalityFactorTransformer(BaseEstimator, TransformerMixin):
    """Per-sample factor vectors from batches of causality maps.

    transform maps (n_samples, k, k) to (n_samples, k).
    """

    def __init__(self, direction="causes", mode="full"):
        self.direction = direction
        self.mode = mode

    def _config(self) -> FactorConfig:
        return FactorConfig(direction=self.direction, mode=self.mode)

    def fit(self, X, y=None):
        self._config()
        return self

    def transform(self, X):
        cfg = self._config()
        maps = np.asarray(X, dtype=np.float64)
        if maps.ndim == 2:
            maps = maps[np.newaxis]
        if maps.ndim != 3 or maps.shape[1] != maps.shape[2]:
            raise ShapeMismatchError(f"expected (n_samples, k, k) maps, got {maps.shape}")
        return np.stack([extract_factors(m, cfg).weights for m in maps])


class FeatureEnhancer(BaseEstimator, TransformerMixin):
    """Full enhancement chain as one transformer, flat payloads out.

    transform maps (n_samples, k, n, n) to (n_samples, width) where the
    width follows the variant's layout; the output plugs straight into
    any downstream classifier.
    """

    def __init__(
        self,
        variant="mulcat",
        method="max",
        lehmer_p=0.0,
        epsilon=1e-12,
        direction="causes",
        mode="full",
        random_state=0,
    ):
        self.variant = variant
        self.method = method
        self.lehmer_p = lehmer_p
        self.epsilon = epsilon
        self.direction = direction
        self.mode = mode
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.variant not in ("baseline", "cat", "mulcat", "cab", "damaged_cat", "damaged_mulcat"):
            raise ValueError(f"unknown variant {self.variant!r}")
        _as_stack_batch(X)
        return self

    def _enhance_one(self, stack, est_cfg, fac_cfg):
        if self.variant == "baseline":
            return stack.ravel()
        if self.variant == "cat":
            return enhance_cat(stack, compute_causality_map(stack, est_cfg).entries).payload
        if self.variant == "damaged_cat":
            return damaged_cat(stack, self.random_state).payload
        if self.variant == "damaged_mulcat":
            factors = damaged_factors(stack.shape[0], self.mode, self.random_state)
            return enhance_mulcat(stack, factors.weights).payload
        factors = extract_factors(compute_causality_map(stack, est_cfg), fac_cfg)
        if self.variant == "mulcat":
            return enhance_mulcat(stack, factors.weights).payload
        return enhance_cab(stack, factors.weights).payload

    def transform(self, X):
        if self.variant not in ("baseline", "cat", "mulcat", "cab", "damaged_cat", "damaged_mulcat"):
            raise ValueError(f"unknown variant {self.variant!r}")
        est_cfg = EstimatorConfig(method=self.method, lehmer_p=self.lehmer_p, epsilon=self.epsilon)
        fac_cfg = FactorConfig(direction=self.direction, mode=self.mode)
        stacks = _as_stack_batch(X)
        return np.stack([self._enhance_one(s, est_cfg, fac_cfg) for s in stacks])


class DeskNetClassifier(BaseEstimator, ClassifierMixin):
    """The desk-scale convolutional classifier behind a fit/predict API.

    ``X`` can be (n_samples, 256), (n_samples, 16, 16) or
    (n_samples, 1, 16, 16) images with values in [0, 1]; ``y`` must hold
    exactly two classes.
    """

    def __init__(
        self,
        variant="baseline",
        method="max",
        lehmer_p=0.0,
        epsilon=1e-12,
        direction="causes",
        mode="full",
        epochs=15,
        batch_size=32,
        learning_rate=0.02,
        cmap_backprop=True,
        random_state=0,
    ):
        self.variant = variant
        self.method = method
        self.lehmer_p = lehmer_p
        self.epsilon = epsilon
        self.direction = direction
        self.mode = mode
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.cmap_backprop = cmap_backprop
        self.random_state = random_state

    def _config(self) -> desknet.TrainConfig:
        return desknet.TrainConfig(
            variant=self.variant,
            factor_cfg=FactorConfig(direction=self.direction, mode=self.mode),
            estimator=EstimatorConfig(method=self.method, lehmer_p=self.lehmer_p, epsilon=self.epsilon),
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.random_state,
            cmap_backprop=self.cmap_backprop,
        )

    @staticmethod
    def _as_images(X) -> np.ndarray:
        arr = np.asarray(X, dtype=np.float64)
        side = desknet.IMAGE_SIDE
        if arr.ndim == 2 and arr.shape[1] == side * side:
            arr = arr.reshape(-1, 1, side, side)
        elif arr.ndim == 3 and arr.shape[1:] == (side, side):
            arr = arr[:, np.newaxis]
        if arr.ndim != 4 or arr.shape[1:] != (1, side, side):
            raise ShapeMismatchError(
                f"X must be (n, {side * side}), (n, {side}, {side}) or (n, 1, {side}, {side}); got {arr.shape}"
            )
        return arr

    def fit(self, X, y):
        images = self._as_images(X)
        y = np.asarray(y).ravel()
        if y.shape[0] != images.shape[0]:
            raise ShapeMismatchError(f"{images.shape[0]} samples but {y.shape[0]} labels")
        self.classes_ = np.unique(y)
        if self.classes_.size != desknet.N_CLASSES:
            raise ValueError(f"need exactly {desknet.N_CLASSES} classes, got {self.classes_.size}")
        labels = np.searchsorted(self.classes_, y)
        cfg = self._config()
        self.params_ = desknet.init_params(cfg)
        rng = np.random.default_rng([cfg.seed, 2])
        self.history_ = desknet.sgd_fit(self.params_, images, labels, cfg, rng)
        self.n_features_in_ = desknet.IMAGE_SIDE**2
        return self

    def _logits(self, X) -> np.ndarray:
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before predict")
        logits, _ = desknet._forward_batch(self.params_, self._as_images(X), self._config())
        return logits

    def predict(self, X):
        logits = self._logits(X)
        return self.classes_[logits.argmax(axis=1)]

    def predict_proba(self, X):
        logits = self._logits(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)
