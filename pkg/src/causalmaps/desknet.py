"""A small convolutional classifier with hand-rolled backprop.

The network is deliberately tiny so experiments run on one CPU core:
conv(8 filters 3x3, pad 1) -> ReLU -> 2x2 max pool -> conv(16 filters)
-> ReLU -> 2x2 max pool, giving a 16 x 4 x 4 non-negative feature stack
that feeds one of the causality-based enhancement variants, then a
linear classifier over the flat payload.

Gradient policy: causality factors come from hard comparisons and are
treated as constants in backprop (gradients still reach the features
through the multiplication's other operand). The causality map used by
the ``cat`` variant is differentiable under the max estimator; routing
gradients through its max/sum nodes is a config switch, on by default
and forced off for the Lehmer estimator. Max nodes route to the first
maximal element in row-major order on ties.

The synthetic dataset encodes a *relational* signal: in class 1 two blob
types co-occur at a fixed offset, in class 0 they are placed
independently, so per-pixel statistics match across classes and only
the co-occurrence separates them.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cmap import METHOD_MAX, EstimatorConfig
from .enhance import (
    LAYOUT_BASELINE,
    LAYOUT_CAB,
    LAYOUT_CAT,
    LAYOUT_MULCAT,
    layout_length,
)
from .exceptions import (
    DivergedLossError,
    EmptyBatchError,
    NumericOverflowError,
    ShapeMismatchError,
)
from .factors import DIRECTION_CAUSES, MODE_BOOL, FactorConfig, damaged_factors

IMAGE_SIDE = 16
CONV1_FILTERS = 8
CONV2_FILTERS = 16
FEATURE_MAPS = CONV2_FILTERS  # k of the final stack
FEATURE_SIDE = 4  # n of the final stack (two 2x2 pools)
N_CLASSES = 2

VARIANT_BASELINE = "baseline"
VARIANT_CAT = "cat"
VARIANT_MULCAT = "mulcat"
VARIANT_CAB = "cab"
VARIANT_DAMAGED_CAT = "damaged_cat"
VARIANT_DAMAGED_MULCAT = "damaged_mulcat"
VARIANTS = (
    VARIANT_BASELINE,
    VARIANT_CAT,
    VARIANT_MULCAT,
    VARIANT_CAB,
    VARIANT_DAMAGED_CAT,
    VARIANT_DAMAGED_MULCAT,
)

_VARIANT_LAYOUT = {
    VARIANT_BASELINE: LAYOUT_BASELINE,
    VARIANT_CAT: LAYOUT_CAT,
    VARIANT_DAMAGED_CAT: LAYOUT_CAT,
    VARIANT_MULCAT: LAYOUT_MULCAT,
    VARIANT_DAMAGED_MULCAT: LAYOUT_MULCAT,
    VARIANT_CAB: LAYOUT_CAB,
}


def classifier_width(variant: str, k: int = FEATURE_MAPS, n: int = FEATURE_SIDE) -> int:
    """Flat feature width the classifier sees for a variant."""
    return layout_length(_VARIANT_LAYOUT[variant], k, n)


@dataclass
class DeskNetParams:
    """All trainable parameters; also the shape of the gradient record."""

    w1: np.ndarray  # (8, 1, 3, 3)
    b1: np.ndarray  # (8,)
    w2: np.ndarray  # (16, 8, 3, 3)
    b2: np.ndarray  # (16,)
    wc: np.ndarray  # (n_classes, width)
    bc: np.ndarray  # (n_classes,)

    GROUPS = ("w1", "b1", "w2", "b2", "wc", "bc")

    def copy(self) -> "DeskNetParams":
        return DeskNetParams(**{g: getattr(self, g).copy() for g in self.GROUPS})

    def n_parameters(self) -> int:
        return sum(getattr(self, g).size for g in self.GROUPS)


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run depends on, seed included."""

    variant: str = VARIANT_BASELINE
    factor_cfg: FactorConfig = field(default_factory=FactorConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    # 15 epochs at 0.02 is the mid-training regime where the weighting
    # variants separate cleanly; longer schedules let every variant saturate
    epochs: int = 15
    batch_size: int = 32
    learning_rate: float = 0.02
    seed: int = 0
    cmap_backprop: bool = True
    n_samples: int = 3000
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.epochs <= 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")
        if self.n_samples < 10:
            raise ValueError("need at least 10 samples to split")
        if abs(sum(self.split) - 1.0) > 1e-9 or any(f <= 0 for f in self.split):
            raise ValueError("split fractions must be positive and sum to 1")

    @property
    def cmap_backprop_effective(self) -> bool:
        # Lehmer exponent gradients are numerically hostile; forward-only.
        return self.cmap_backprop and self.estimator.method == METHOD_MAX


@dataclass(frozen=True)
class SyntheticSample:
    image: np.ndarray  # (1, 16, 16), values in [0, 1]
    label: int


@dataclass(frozen=True)
class ArchitectureSpec:
    """Enough to count parameters: stack geometry, classes, variant.

    ``backbone_params`` is the parameter count of everything before the
    classifier; it cancels in variant-to-variant deltas.
    """

    k: int
    n: int
    n_classes: int
    variant: str
    backbone_params: int = 0


# --------------------------------------------------------------------------
# synthetic co-occurrence dataset

_BLOB_A = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.float64)
_BLOB_B = np.array([[1, 0, 1], [0, 1, 0], [1, 0, 1]], dtype=np.float64)
# diffuse and dim: feature maps it drives carry a lot of mass but little
# peak, the opposite signature of the compact A/B blobs
_BLOB_DISTRACTOR = np.full((5, 5), 0.55, dtype=np.float64)

#: Class-1 images place blob B at this offset from blob A.
PAIR_OFFSET = (4, 4)
NOISE_SIGMA = 0.05
#: Per-image blob amplitude range: positional templates must cope with
#: intensity variation, while the (normalization-invariant) causality
#: machinery does not see it.
AMPLITUDE_RANGE = (0.35, 1.0)


def _stamp(img: np.ndarray, blob: np.ndarray, row: int, col: int, gain: float) -> None:
    reach = blob.shape[0] // 2
    window = img[row - reach : row + reach + 1, col - reach : col + reach + 1]
    window[...] = np.maximum(window, gain * blob)


def generate_dataset(n_samples: int, seed: int) -> list[SyntheticSample]:
    """Balanced two-class co-occurrence dataset, deterministic per seed.

    Both classes contain one A blob, one B blob and 0-2 distractor bars,
    all drawn at a per-image random amplitude; in class 1 the B blob
    sits at ``PAIR_OFFSET`` from A, in class 0 its position is
    independent (resampled away from the offset). Gaussian pixel noise
    sigma 0.05, clipped to [0, 1].
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    n_pos = n_samples // 2
    labels = np.array([1] * n_pos + [0] * (n_samples - n_pos))
    rng.shuffle(labels)
    dr, dc = PAIR_OFFSET
    samples = []
    for label in labels:
        img = np.zeros((IMAGE_SIDE, IMAGE_SIDE))
        gain = rng.uniform(*AMPLITUDE_RANGE)
        a_row, a_col = rng.integers(1, 11, size=2)
        if label == 1:
            b_row, b_col = a_row + dr, a_col + dc
        else:
            while True:
                b_row, b_col = rng.integers(5, 15, size=2)
                if max(abs(b_row - a_row - dr), abs(b_col - a_col - dc)) >= 2:
                    break
        _stamp(img, _BLOB_A, a_row, a_col, gain)
        _stamp(img, _BLOB_B, b_row, b_col, gain)
        for _ in range(rng.integers(0, 3)):
            d_row, d_col = rng.integers(2, 14, size=2)
            _stamp(img, _BLOB_DISTRACTOR, d_row, d_col, gain)
        img = np.clip(img + rng.normal(0.0, NOISE_SIGMA, img.shape), 0.0, 1.0)
        samples.append(SyntheticSample(image=img[np.newaxis, :, :], label=int(label)))
    return samples


def samples_to_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    """Stack a sample list into (images (B,1,16,16), labels (B,))."""
    images = np.stack([s.image for s in samples]).astype(np.float64)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return images, labels


def export_dataset_csv(samples, path) -> None:
    """Write samples for inspection: label plus row-major pixels per line."""
    from . import fileio

    lines = [f"# label,pixel_0..pixel_{IMAGE_SIDE * IMAGE_SIDE - 1}"]
    for sample in samples:
        pixels = ",".join(fileio.FLOAT_FMT % v for v in sample.image.ravel())
        lines.append(f"{sample.label},{pixels}")
    fileio.atomic_write_text(path, "\n".join(lines) + "\n")


def import_dataset_csv(path) -> list[SyntheticSample]:
    """Read back a dataset written by :func:`export_dataset_csv`."""
    from . import fileio

    _, rows = fileio._read_lines(path)
    samples = []
    for row in rows:
        values = row.split(",")
        image = np.array([float(v) for v in values[1:]], dtype=np.float64)
        samples.append(
            SyntheticSample(image=image.reshape(1, IMAGE_SIDE, IMAGE_SIDE), label=int(values[0]))
        )
    return samples


def pair_offset_oracle(images: np.ndarray) -> np.ndarray:
    """Template-matching reference classifier for the synthetic data.

    Locates the A and B blobs by best 3x3 correlation and predicts class
    1 when their displacement matches ``PAIR_OFFSET`` to within one
    pixel. Used to certify the dataset carries a relational signal.
    """

    def best_center(img: np.ndarray, blob: np.ndarray) -> tuple[int, int]:
        win = sliding_window_view(img, (3, 3))
        score = np.tensordot(win, blob, axes=([2, 3], [0, 1]))
        flat = int(score.argmax())
        return flat // score.shape[1] + 1, flat % score.shape[1] + 1

    preds = np.empty(images.shape[0], dtype=np.int64)
    for i, img in enumerate(images[:, 0]):
        ar, ac = best_center(img, _BLOB_A)
        br, bc = best_center(img, _BLOB_B)
        hit = abs(br - ar - PAIR_OFFSET[0]) <= 1 and abs(bc - ac - PAIR_OFFSET[1]) <= 1
        preds[i] = int(hit)
    return preds


# --------------------------------------------------------------------------
# layers

def _im2col(x: np.ndarray) -> np.ndarray:
    """Contiguous (B*H*W, C*9) patch matrix for a pad-1 3x3 convolution."""
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (B, C, H, W, 3, 3)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b * h * w, c * 9)


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """3x3 convolution, stride 1, zero pad 1; x (B,C,H,W) -> (B,O,H,W).

    Also returns the patch matrix so the backward pass reuses it.
    """
    bs, c, h, wd = x.shape
    col = _im2col(x)
    out = col @ w.reshape(w.shape[0], -1).T + b
    return np.ascontiguousarray(out.reshape(bs, h, wd, -1).transpose(0, 3, 1, 2)), col


def _conv_backward(col: np.ndarray, x_shape, w: np.ndarray, dout: np.ndarray):
    """Gradients of _conv_forward w.r.t. weights, bias and input."""
    bs, c, h, wd = x_shape
    o = w.shape[0]
    dout_2d = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(-1, o)
    dw = (dout_2d.T @ col).reshape(w.shape)
    db = dout_2d.sum(axis=0)
    dcol = (dout_2d @ w.reshape(o, -1)).reshape(bs, h, wd, c, 3, 3)
    dxp = np.zeros((bs, c, h + 2, wd + 2))
    for i in range(3):
        for j in range(3):
            dxp[:, :, i : i + h, j : j + wd] += dcol[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dw, db, dxp[:, :, 1:-1, 1:-1]


def _pool_forward(x: np.ndarray):
    """2x2 max pool, stride 2; keeps the argmax (first on ties) per window."""
    b, c, h, w = x.shape
    windows = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    windows = windows.reshape(b, c, h // 2, w // 2, 4)
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dout: np.ndarray, idx: np.ndarray, in_shape) -> np.ndarray:
    b, c, h, w = in_shape
    dwin = np.zeros((b, c, h // 2, w // 2, 4))
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    return dwin.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)


# --------------------------------------------------------------------------
# batched causality machinery (mirrors cmap/factors on a per-sample basis)

def _batched_entries(flat: np.ndarray, est: EstimatorConfig):
    """Per-sample causality maps from (B, k, m) non-negative activations.

    Returns (entries (B,k,k), cache) where the cache holds what the max
    estimator's backward pass needs. All-zero samples yield a zero map
    and are masked out of backprop.
    """
    b, k, m = flat.shape
    eps = est.epsilon
    peak = flat.reshape(b, -1).max(axis=1)
    nonzero = peak > 0
    safe_peak = np.where(nonzero, peak, 1.0)
    norm = flat / safe_peak[:, None, None]
    if est.method == METHOD_MAX:
        maxima = norm.max(axis=2)
        sums = norm.sum(axis=2)
        den = np.maximum(sums, eps)
        entries = maxima[:, :, None] * maxima[:, None, :] / den[:, None, :]
    else:
        work = np.maximum(norm, eps) if est.lehmer_p < 0 else norm
        with np.errstate(over="ignore", invalid="ignore"):
            hi = np.sum(work ** (est.lehmer_p + 1.0), axis=2)
            lo = np.sum(work**est.lehmer_p, axis=2)
            lm_single = hi / np.maximum(lo, eps)
            pair_den = np.maximum(lo[:, :, None] * lo[:, None, :], eps)
            entries = (hi[:, :, None] * hi[:, None, :]) / pair_den
            entries = entries / np.maximum(lm_single, eps)[:, None, :]
        if not np.all(np.isfinite(entries[nonzero])):
            raise NumericOverflowError(
                f"lehmer map overflowed at p={est.lehmer_p}; use a milder exponent"
            )
        maxima = sums = den = None
    entries[~nonzero] = 0.0
    cache = {
        "flat": flat,
        "norm": norm,
        "peak": safe_peak,
        "nonzero": nonzero,
        "maxima": maxima,
        "sums": sums,
        "den": den,
        "global_argmax": flat.reshape(b, -1).argmax(axis=1),
        "map_argmax": None if maxima is None else norm.argmax(axis=2),
        "epsilon": eps,
    }
    return entries, cache


def _batched_entries_backward(g: np.ndarray, cache) -> np.ndarray:
    """Backprop dL/dentries (B,k,k) to the raw activations (max estimator)."""
    norm = cache["norm"]
    maxima, sums, den = cache["maxima"], cache["sums"], cache["den"]
    b, k, m = norm.shape
    ratio = maxima / den  # (B, k)
    dmax = (g * ratio[:, None, :]).sum(axis=2) + (g * maxima[:, :, None]).sum(axis=1) / den
    dsums = -(g * maxima[:, :, None]).sum(axis=1) * maxima / den**2
    dsums[sums < cache["epsilon"]] = 0.0  # clamped denominators are constants
    dnorm = np.broadcast_to(dsums[:, :, None], norm.shape).copy()
    np.put_along_axis(dnorm, cache["map_argmax"][:, :, None], (dsums + dmax)[:, :, None], axis=2)
    # undo the global-max normalization: norm = flat / peak
    peak = cache["peak"]
    dflat = dnorm / peak[:, None, None]
    correction = (dnorm * norm).sum(axis=(1, 2)) / peak
    dflat = dflat.reshape(b, -1)
    dflat[np.arange(b), cache["global_argmax"]] -= correction
    dflat[~cache["nonzero"]] = 0.0
    return dflat.reshape(b, k, m)


def _batched_factors(entries: np.ndarray, fc: FactorConfig) -> np.ndarray:
    """Per-sample factor vectors from (B, k, k) maps; constants in backprop."""
    wins = entries > entries.transpose(0, 2, 1)
    causes = wins.sum(axis=2)
    effects = wins.sum(axis=1)
    diff = causes - effects if fc.direction == DIRECTION_CAUSES else effects - causes
    weights = np.maximum(diff, 0).astype(np.float64)
    if fc.mode == MODE_BOOL:
        weights = (weights > 0).astype(np.float64)
    return weights


# --------------------------------------------------------------------------
# network

def init_params(cfg: TrainConfig, rng=None) -> DeskNetParams:
    """He-scaled Gaussian weights, zero biases, variant-sized classifier."""
    if rng is None:
        rng = np.random.default_rng([cfg.seed, 1])
    width = classifier_width(cfg.variant)
    return DeskNetParams(
        w1=rng.normal(0.0, np.sqrt(2.0 / 9.0), (CONV1_FILTERS, 1, 3, 3)),
        b1=np.zeros(CONV1_FILTERS),
        w2=rng.normal(0.0, np.sqrt(2.0 / (CONV1_FILTERS * 9.0)), (CONV2_FILTERS, CONV1_FILTERS, 3, 3)),
        b2=np.zeros(CONV2_FILTERS),
        wc=rng.normal(0.0, np.sqrt(1.0 / width), (N_CLASSES, width)),
        bc=np.zeros(N_CLASSES),
    )


def _check_images(images: np.ndarray) -> np.ndarray:
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[np.newaxis]
    if arr.ndim != 4 or arr.shape[1:] != (1, IMAGE_SIDE, IMAGE_SIDE):
        raise ShapeMismatchError(
            f"expected images of shape (B, 1, {IMAGE_SIDE}, {IMAGE_SIDE}), got {arr.shape}"
        )
    return arr


def _sample_damage_seed(run_seed: int, image: np.ndarray) -> int:
    """Per-sample seed for damaged variants.

    Derived from the run seed and the image bytes, so replacements look
    random across samples yet stay a pure function of the input:
    duplicated samples damage identically and reruns reproduce exactly.
    """
    digest = hashlib.blake2b(digest_size=8)
    digest.update(int(run_seed).to_bytes(8, "little", signed=True))
    digest.update(image.tobytes())
    return int.from_bytes(digest.digest(), "little")


def _damaged_maps(images: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    return np.stack(
        [
            np.random.default_rng(_sample_damage_seed(cfg.seed, img)).random(
                (FEATURE_MAPS, FEATURE_MAPS)
            )
            for img in images
        ]
    )


def _damaged_factor_rows(images: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    return np.stack(
        [
            damaged_factors(
                FEATURE_MAPS, cfg.factor_cfg.mode, _sample_damage_seed(cfg.seed, img)
            ).weights
            for img in images
        ]
    )


def _forward_batch(params: DeskNetParams, images: np.ndarray, cfg: TrainConfig):
    width = classifier_width(cfg.variant)
    if params.wc.shape != (N_CLASSES, width):
        raise ShapeMismatchError(
            f"classifier weights {params.wc.shape} do not fit variant "
            f"{cfg.variant!r} (expected ({N_CLASSES}, {width}))"
        )
    z1, col1 = _conv_forward(images, params.w1, params.b1)
    a1 = np.maximum(z1, 0.0)
    p1, idx1 = _pool_forward(a1)
    z2, col2 = _conv_forward(p1, params.w2, params.b2)
    a2 = np.maximum(z2, 0.0)
    stack, idx2 = _pool_forward(a2)  # (B, 16, 4, 4), non-negative

    b = images.shape[0]
    flat = stack.reshape(b, FEATURE_MAPS, -1)
    cache = {
        "images": images, "z1": z1, "col1": col1, "a1": a1, "idx1": idx1,
        "p1": p1, "z2": z2, "col2": col2, "a2": a2, "idx2": idx2, "stack": stack,
        "cmap_cache": None, "factors": None, "gains": None,
    }

    if cfg.variant == VARIANT_BASELINE:
        feats = flat.reshape(b, -1)
    elif cfg.variant == VARIANT_CAT:
        entries, cmap_cache = _batched_entries(flat, cfg.estimator)
        cache["cmap_cache"] = cmap_cache
        feats = np.concatenate([flat.reshape(b, -1), entries.reshape(b, -1)], axis=1)
    elif cfg.variant == VARIANT_DAMAGED_CAT:
        fake = _damaged_maps(images, cfg).reshape(b, -1)
        feats = np.concatenate([flat.reshape(b, -1), fake], axis=1)
    elif cfg.variant in (VARIANT_MULCAT, VARIANT_DAMAGED_MULCAT):
        if cfg.variant == VARIANT_MULCAT:
            entries, _ = _batched_entries(flat, cfg.estimator)
            factors = _batched_factors(entries, cfg.factor_cfg)
        else:
            factors = _damaged_factor_rows(images, cfg)
        cache["factors"] = factors
        weighted = factors[:, :, None] * flat
        feats = np.concatenate([flat.reshape(b, -1), weighted.reshape(b, -1)], axis=1)
    elif cfg.variant == VARIANT_CAB:
        entries, _ = _batched_entries(flat, cfg.estimator)
        factors = _batched_factors(entries, cfg.factor_cfg)
        gains = 1.0 + factors / (FEATURE_MAPS - 1)
        cache["gains"] = gains
        feats = (gains[:, :, None] * flat).reshape(b, -1)
    else:  # pragma: no cover
        raise ValueError(cfg.variant)

    cache["feats"] = feats
    logits = feats @ params.wc.T + params.bc
    return logits, cache


def forward(params: DeskNetParams, image, cfg: TrainConfig):
    """Logits (and the backprop cache) for one image or a batch."""
    arr = np.asarray(image, dtype=np.float64)
    single = arr.ndim == 3
    logits, cache = _forward_batch(params, _check_images(arr), cfg)
    return (logits[0], cache) if single else (logits, cache)


def _backward_from_dfeats(params, cfg, cache, dfeats, need_input_grad=False):
    b = dfeats.shape[0]
    base = FEATURE_MAPS * FEATURE_SIDE**2

    if cfg.variant in (VARIANT_BASELINE, VARIANT_DAMAGED_CAT):
        dflat = dfeats[:, :base].reshape(b, FEATURE_MAPS, -1)
    elif cfg.variant == VARIANT_CAT:
        dflat = dfeats[:, :base].reshape(b, FEATURE_MAPS, -1).copy()
        if cfg.cmap_backprop_effective:
            g = dfeats[:, base:].reshape(b, FEATURE_MAPS, FEATURE_MAPS)
            dflat += _batched_entries_backward(g, cache["cmap_cache"])
    elif cfg.variant in (VARIANT_MULCAT, VARIANT_DAMAGED_MULCAT):
        dorig = dfeats[:, :base].reshape(b, FEATURE_MAPS, -1)
        dweighted = dfeats[:, base:].reshape(b, FEATURE_MAPS, -1)
        dflat = dorig + cache["factors"][:, :, None] * dweighted
    elif cfg.variant == VARIANT_CAB:
        dflat = cache["gains"][:, :, None] * dfeats.reshape(b, FEATURE_MAPS, -1)
    else:  # pragma: no cover
        raise ValueError(cfg.variant)

    dstack = dflat.reshape(cache["stack"].shape)
    da2 = _pool_backward(dstack, cache["idx2"], cache["a2"].shape)
    dz2 = da2 * (cache["z2"] > 0)
    dw2, db2, dp1 = _conv_backward(cache["col2"], cache["p1"].shape, params.w2, dz2)
    da1 = _pool_backward(dp1, cache["idx1"], cache["a1"].shape)
    dz1 = da1 * (cache["z1"] > 0)
    dw1, db1, dimages = _conv_backward(cache["col1"], cache["images"].shape, params.w1, dz1)
    grads = {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}
    return grads, (dimages if need_input_grad else None)


def loss_and_grads(params: DeskNetParams, batch, cfg: TrainConfig):
    """Mean softmax cross-entropy over a batch and its parameter gradients.

    ``batch`` is an ``(images, labels)`` pair. Returns
    ``(loss, DeskNetParams-shaped gradients)``.
    """
    loss, grads, _ = _loss_grads_logits(params, batch, cfg)
    return loss, grads


def _loss_grads_logits(params, batch, cfg):
    images, labels = batch
    images = _check_images(images)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    b = images.shape[0]
    if b == 0:
        raise EmptyBatchError("loss over an empty batch")
    if labels.shape[0] != b:
        raise ShapeMismatchError(f"{b} images but {labels.shape[0]} labels")

    # overflow surfaces as a non-finite loss, which the trainer turns
    # into DivergedLossError; silence the intermediate warnings
    with np.errstate(over="ignore", invalid="ignore"):
        logits, cache = _forward_batch(params, images, cfg)
        shifted = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        log_probs = shifted - logz[:, None]
        loss = float(-log_probs[np.arange(b), labels].mean())
        probs = np.exp(log_probs)
        dlogits = probs
        dlogits[np.arange(b), labels] -= 1.0
        dlogits /= b

        feats = cache["feats"]
        dwc = dlogits.T @ feats
        dbc = dlogits.sum(axis=0)
        dfeats = dlogits @ params.wc
        conv_grads, _ = _backward_from_dfeats(params, cfg, cache, dfeats)
    grads = DeskNetParams(wc=dwc, bc=dbc, **conv_grads)
    return loss, grads, logits


def logit_scorer(params: DeskNetParams, cfg: TrainConfig, class_idx: int):
    """Scorer for activation maximization: one class logit and its input gradient.

    Accepts 16 x 16 x 1 images (the AM convention) and differentiates the
    selected logit back to the pixels, subject to the same gradient
    policy as training.
    """
    if not 0 <= class_idx < N_CLASSES:
        raise ValueError(f"class_idx must be in [0, {N_CLASSES}), got {class_idx}")

    def scorer(img):
        arr = np.asarray(img, dtype=np.float64)
        if arr.shape != (IMAGE_SIDE, IMAGE_SIDE, 1):
            raise ShapeMismatchError(
                f"scorer expects ({IMAGE_SIDE}, {IMAGE_SIDE}, 1) images, got {arr.shape}"
            )
        batch = arr[:, :, 0][np.newaxis, np.newaxis]
        logits, cache = _forward_batch(params, batch, cfg)
        dlogits = np.zeros_like(logits)
        dlogits[0, class_idx] = 1.0
        dfeats = dlogits @ params.wc
        _, dimages = _backward_from_dfeats(params, cfg, cache, dfeats, need_input_grad=True)
        return float(logits[0, class_idx]), dimages[0, 0][:, :, np.newaxis]

    return scorer


# --------------------------------------------------------------------------
# training loop

def evaluate(params: DeskNetParams, images, labels, cfg: TrainConfig, chunk: int = 512):
    """Mean cross-entropy loss and accuracy over a labeled set."""
    images = _check_images(images)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    total_loss = 0.0
    correct = 0
    for start in range(0, images.shape[0], chunk):
        sl = slice(start, start + chunk)
        logits, _ = _forward_batch(params, images[sl], cfg)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1))[:, None]
        total_loss += float(-log_probs[np.arange(logits.shape[0]), labels[sl]].sum())
        correct += int((logits.argmax(axis=1) == labels[sl]).sum())
    n = images.shape[0]
    return total_loss / n, correct / n


def stratified_split(labels: np.ndarray, fractions) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index arrays for a per-class train/val/test split.

    The incoming order within each class is kept (the dataset generator
    already shuffles), so the split is deterministic.
    """
    f_train, f_val, _ = fractions
    train_idx, val_idx, test_idx = [], [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        n_train = int(np.floor(f_train * idx.size))
        n_val = int(np.floor(f_val * idx.size))
        train_idx.append(idx[:n_train])
        val_idx.append(idx[n_train : n_train + n_val])
        test_idx.append(idx[n_train + n_val :])
    return (
        np.concatenate(train_idx),
        np.concatenate(val_idx),
        np.concatenate(test_idx),
    )


def sgd_fit(params: DeskNetParams, images, labels, cfg: TrainConfig, rng, val=None):
    """In-place mini-batch gradient descent; returns per-epoch history rows."""
    n = images.shape[0]
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            loss, grads, logits = _loss_grads_logits(params, (images[sel], labels[sel]), cfg)
            if not np.isfinite(loss):
                raise DivergedLossError(f"loss became non-finite at epoch {epoch + 1}")
            for group in DeskNetParams.GROUPS:
                getattr(params, group)[...] -= cfg.learning_rate * getattr(grads, group)
            epoch_loss += loss * sel.size
            correct += int((logits.argmax(axis=1) == labels[sel]).sum())
        row = {
            "epoch": epoch + 1,
            "train_loss": epoch_loss / n,
            "train_accuracy": correct / n,
        }
        if val is not None:
            val_loss, val_acc = evaluate(params, val[0], val[1], cfg)
            row["val_loss"] = val_loss
            row["val_accuracy"] = val_acc
        history.append(row)
    return history


@dataclass(frozen=True)
class TrainResult:
    variant: str
    seed: int
    test_accuracy: float
    parameter_count: int
    history: list
    params: DeskNetParams = field(repr=False, compare=False, default=None)

    def to_dict(self) -> dict:
        """JSON-ready metrics record (weights are left out on purpose)."""
        return {
            "variant": self.variant,
            "seed": self.seed,
            "test_accuracy": self.test_accuracy,
            "parameter_count": self.parameter_count,
            "history": self.history,
        }


def train(cfg: TrainConfig) -> TrainResult:
    """Full desk-scale experiment: data, split, fit, test. Deterministic per seed."""
    samples = generate_dataset(cfg.n_samples, cfg.seed)
    images, labels = samples_to_arrays(samples)
    train_idx, val_idx, test_idx = stratified_split(labels, cfg.split)
    params = init_params(cfg)
    rng = np.random.default_rng([cfg.seed, 2])
    history = sgd_fit(
        params,
        images[train_idx],
        labels[train_idx],
        cfg,
        rng,
        val=(images[val_idx], labels[val_idx]),
    )
    _, test_acc = evaluate(params, images[test_idx], labels[test_idx], cfg)
    return TrainResult(
        variant=cfg.variant,
        seed=cfg.seed,
        test_accuracy=test_acc,
        parameter_count=params.n_parameters(),
        history=history,
        params=params,
    )


DESK_BACKBONE_PARAMS = (
    CONV1_FILTERS * 9 + CONV1_FILTERS + CONV2_FILTERS * CONV1_FILTERS * 9 + CONV2_FILTERS
)


def desk_architecture(variant: str) -> ArchitectureSpec:
    return ArchitectureSpec(
        k=FEATURE_MAPS,
        n=FEATURE_SIDE,
        n_classes=N_CLASSES,
        variant=variant,
        backbone_params=DESK_BACKBONE_PARAMS,
    )


def count_parameters(arch: ArchitectureSpec) -> int:
    """Exact trainable-parameter count for an architecture spec.

    The classifier width depends on the enhancement variant; ``cab`` adds
    nothing over the baseline.
    """
    width = layout_length(_VARIANT_LAYOUT[arch.variant], arch.k, arch.n)
    return arch.backbone_params + width * arch.n_classes + arch.n_classes
