"""Activation maximization with image-prior regularizers.

``am_run`` performs gradient ascent on an input image to maximize a
caller-supplied scorer, with the usual stabilizers: random jitter
(circular shift, undone after each step), periodic box blur, and
stochastic clipping of out-of-range pixels.

The prior losses encode regularities of structured grayscale imagery:

* ``symmetry_loss``   - MSE between the left half and the mirrored right half
* ``histogram_loss``  - symmetric KL between a soft intensity histogram
                        and a target distribution
* ``noise_loss``      - local mean should equal local variance
                        (Poisson-like mottle)
* ``frequency_loss``  - MSE between DFT magnitude spectra

Each returns ``(value, gradient)`` with the gradient taken analytically
w.r.t. the image; tests check every gradient against finite differences.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .exceptions import (
    DegenerateTargetError,
    NonFiniteGradientError,
    ShapeMismatchError,
)
from .validation import as_image, check_epsilon

DEFAULT_EPSILON = 1e-12


@dataclass(frozen=True)
class AmConfig:
    """Knobs for the gradient-ascent loop.

    ``prior_weights`` are the multipliers (histogram, noise, symmetry,
    frequency) used by :func:`combined_prior_loss`; ``prior_stride``
    applies regularizers every that many iterations. The pooling
    constants parameterize the noise prior.
    """

    step_size: float = 0.1
    iterations: int = 200
    jitter_px: int = 0
    blur_every: int = 0
    clip_lo: float = 0.0
    clip_hi: float = 1.0
    seed: int = 0
    prior_weights: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    prior_stride: int = 1
    pool_kernel: int = 5
    pool_stride: int = 1
    pool_padding: int = 2

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.jitter_px < 0 or self.blur_every < 0:
            raise ValueError("jitter_px and blur_every must be non-negative")
        if not self.clip_lo < self.clip_hi:
            raise ValueError("need clip_lo < clip_hi")
        if len(self.prior_weights) != 4 or any(w < 0 for w in self.prior_weights):
            raise ValueError("prior_weights must be four non-negative reals")
        if self.prior_stride < 1:
            raise ValueError("prior_stride must be >= 1")


def box_blur(img: np.ndarray) -> np.ndarray:
    """3x3 box filter per channel, edges replicated."""
    return uniform_filter(img, size=(3, 3, 1), mode="nearest")


def _stochastic_clip(img: np.ndarray, lo: float, hi: float, rng) -> np.ndarray:
    out_of_range = (img < lo) | (img > hi)
    n_bad = int(out_of_range.sum())
    if n_bad:
        img[out_of_range] = rng.uniform(lo, hi, size=n_bad)
    return img


def quadratic_scorer(target):
    """Concave test scorer a(X) = -||X - target||^2 with its gradient.

    Has the unique maximizer X = target, so the ascent's convergence is
    checkable exactly.
    """
    target = as_image(target)

    def scorer(img):
        diff = img - target
        return float(-(diff**2).sum()), -2.0 * diff

    return scorer


def am_run(scorer, init, cfg: AmConfig, regularizers=(), on_iteration=None) -> np.ndarray:
    """Gradient-ascent feature visualization loop.

    ``scorer`` maps an image to ``(activation, gradient)``;
    ``regularizers`` is a sequence of callables with the same signature
    whose gradients are *subtracted* (weights should be baked in, e.g.
    via :func:`combined_prior_loss`). Each iteration: jitter, score,
    step X + step_size * grad_a - grad_r, un-jitter, then blur on
    schedule and stochastically clip. Deterministic given ``cfg.seed``.

    ``on_iteration(t, activation, regularizer_total)`` is invoked once
    per step when given, with the values measured at the pre-update
    image.
    """
    img = as_image(init).copy()
    rng = np.random.default_rng(cfg.seed)
    for t in range(cfg.iterations):
        if cfg.jitter_px > 0:
            dy, dx = rng.integers(-cfg.jitter_px, cfg.jitter_px + 1, size=2)
        else:
            dy = dx = 0
        shifted = np.roll(img, (dy, dx), axis=(0, 1))

        activation, grad = scorer(shifted)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != shifted.shape:
            raise ShapeMismatchError(
                f"scorer gradient shape {grad.shape} does not match image {shifted.shape}"
            )
        if not (np.isfinite(activation) and np.all(np.isfinite(grad))):
            raise NonFiniteGradientError(t)

        reg_total = 0.0
        step = cfg.step_size * grad
        if regularizers and t % cfg.prior_stride == 0:
            for reg in regularizers:
                value, rgrad = reg(shifted)
                rgrad = np.asarray(rgrad, dtype=np.float64)
                if not (np.isfinite(value) and np.all(np.isfinite(rgrad))):
                    raise NonFiniteGradientError(t)
                reg_total += float(value)
                step -= rgrad

        img = np.roll(shifted + step, (-dy, -dx), axis=(0, 1))
        if cfg.blur_every > 0 and (t + 1) % cfg.blur_every == 0:
            img = box_blur(img)
        img = _stochastic_clip(img, cfg.clip_lo, cfg.clip_hi, rng)

        if on_iteration is not None:
            on_iteration(t, float(activation), reg_total)
    return img


def symmetry_loss(img) -> tuple[float, np.ndarray]:
    """Mean squared difference between the left half and the mirrored right.

    For odd widths the center column is excluded and gets zero gradient.
    """
    img = as_image(img)
    h, w, c = img.shape
    half = w // 2
    left = img[:, :half, :]
    right = img[:, w - half :, :]
    diff = left - right[:, ::-1, :]
    n = diff.size
    loss = float((diff**2).sum() / n)
    grad = np.zeros_like(img)
    scaled = 2.0 * diff / n
    grad[:, :half, :] += scaled
    grad[:, w - half :, :] -= scaled[:, ::-1, :]
    return loss, grad


def histogram_loss(
    img,
    target,
    value_range: tuple[float, float] = (0.0, 1.0),
    epsilon: float = 1e-8,
) -> tuple[float, np.ndarray]:
    """Symmetric KL divergence between a soft image histogram and a target.

    The histogram uses triangular-kernel (linear interpolation) binning
    over ``value_range`` so the loss is differentiable in the pixels; the
    number of bins is taken from the target (64 is the usual choice).
    Both distributions are floored by epsilon-smoothing and renormalized.
    Pixels outside the outer bin centers contribute constant mass and
    zero gradient.
    """
    img = as_image(img)
    t = np.asarray(target, dtype=np.float64).ravel()
    if t.size < 2:
        raise DegenerateTargetError("target needs at least 2 bins")
    if np.any(t < 0):
        raise DegenerateTargetError("target distribution has negative mass")
    if abs(t.sum() - 1.0) > 1e-9:
        raise DegenerateTargetError(f"target must sum to 1, got {t.sum()!r}")
    nb = t.size
    lo, hi = value_range
    width = (hi - lo) / nb

    x = img.ravel()
    n_pix = x.size
    # fractional position between bin centers; each pixel splits its unit
    # mass linearly over the two nearest bins
    pos = (x - lo) / width - 0.5
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    inside = (i0 >= 0) & (i0 <= nb - 2)
    below = i0 < 0
    above = i0 > nb - 2

    counts = np.zeros(nb)
    np.add.at(counts, i0[inside], 1.0 - frac[inside])
    np.add.at(counts, i0[inside] + 1, frac[inside])
    counts[0] += float(below.sum())
    counts[nb - 1] += float(above.sum())

    hist = counts / n_pix
    h = (hist + epsilon) / (1.0 + nb * epsilon)
    tt = (t + epsilon) / (1.0 + nb * epsilon)
    loss = float(0.5 * (np.sum(h * np.log(h / tt)) + np.sum(tt * np.log(tt / h))))

    # d loss / d h, chained through the smoothing and the 1/n_pix scale
    dloss_dh = 0.5 * (np.log(h / tt) + 1.0 - tt / h)
    dloss_dcounts = dloss_dh / (1.0 + nb * epsilon) / n_pix
    grad_flat = np.zeros_like(x)
    grad_flat[inside] = (dloss_dcounts[i0[inside] + 1] - dloss_dcounts[i0[inside]]) / width
    return loss, grad_flat.reshape(img.shape)


def _zero_padded_mean(x: np.ndarray, kernel: int) -> np.ndarray:
    """Same-size average pool: window mean counting zero padding."""
    return uniform_filter(x, size=kernel, mode="constant", cval=0.0)


def noise_loss(
    img, kernel: int = 5, stride: int = 1, padding: int = 2
) -> tuple[float, np.ndarray]:
    """Penalty for local mean differing from local variance.

    Poisson-like radiographic noise has equal local mean and variance;
    both are estimated with a zero-padded average pool (kernel 5, stride
    1, padding 2 keeps the image size). Single-channel images only.
    """
    img = as_image(img)
    if img.shape[2] != 1:
        raise ShapeMismatchError("noise loss is defined for single-channel images")
    if stride != 1 or padding != kernel // 2:
        raise ValueError("only stride 1 with size-preserving padding (kernel // 2) is supported")
    x = img[:, :, 0]
    mu = _zero_padded_mean(x, kernel)
    var = _zero_padded_mean(x * x, kernel) - mu**2
    d = mu - var
    n = d.size
    loss = float((d**2).sum() / n)
    # d = A(x) - A(x^2) + A(x)^2 with A self-adjoint (symmetric kernel,
    # zero padding), so each term transposes back through A
    w = 2.0 * d / n
    aw = _zero_padded_mean(w, kernel)
    grad = aw - 2.0 * x * aw + 2.0 * _zero_padded_mean(mu * w, kernel)
    return loss, grad[:, :, np.newaxis]


def frequency_loss(img, reference, epsilon: float = DEFAULT_EPSILON) -> tuple[float, np.ndarray]:
    """Mean squared difference between DFT magnitude spectra.

    Shift-invariant: circularly translating either image leaves its
    magnitude spectrum unchanged. Magnitudes below ``epsilon`` are
    treated as ``epsilon`` (with zero gradient) so the derivative of
    |F| stays finite. Single-channel images only.
    """
    epsilon = check_epsilon(epsilon)
    img = as_image(img)
    ref = as_image(reference)
    if img.shape != ref.shape:
        raise ShapeMismatchError(f"image shape {img.shape} != reference shape {ref.shape}")
    if img.shape[2] != 1:
        raise ShapeMismatchError("frequency loss is defined for single-channel images")
    spectrum = np.fft.fft2(img[:, :, 0])
    mag = np.abs(spectrum)
    mag_ref = np.abs(np.fft.fft2(ref[:, :, 0]))
    mag_c = np.maximum(mag, epsilon)
    diff = mag_c - np.maximum(mag_ref, epsilon)
    n = diff.size
    loss = float((diff**2).sum() / n)
    # d|F_k|/dx_n = Re(conj(F_k)/|F_k| * exp(-2 pi i k.n / N)), so the
    # pixel gradient is the real part of a forward DFT of the weighted
    # conjugate spectrum; clamped bins are constants
    coeff = np.where(mag >= epsilon, (2.0 / n) * diff * np.conj(spectrum) / mag_c, 0.0)
    grad = np.real(np.fft.fft2(coeff))
    return loss, grad[:, :, np.newaxis]


def combined_prior_loss(
    img, cfg: AmConfig, target=None, reference=None
) -> tuple[float, np.ndarray]:
    """Weighted sum of the four prior losses and their gradients.

    Weights come from ``cfg.prior_weights`` in the order (histogram,
    noise, symmetry, frequency); terms with zero weight are skipped, so
    ``target``/``reference`` are only required when their term is active.
    """
    img = as_image(img)
    w_hist, w_noise, w_sym, w_freq = cfg.prior_weights
    total = 0.0
    grad = np.zeros_like(img)
    if w_hist > 0:
        value, g = histogram_loss(img, target, value_range=(cfg.clip_lo, cfg.clip_hi))
        total += w_hist * value
        grad += w_hist * g
    if w_noise > 0:
        value, g = noise_loss(img, cfg.pool_kernel, cfg.pool_stride, cfg.pool_padding)
        total += w_noise * value
        grad += w_noise * g
    if w_sym > 0:
        value, g = symmetry_loss(img)
        total += w_sym * value
        grad += w_sym * g
    if w_freq > 0:
        value, g = frequency_loss(img, reference)
        total += w_freq * value
        grad += w_freq * g
    return total, grad
