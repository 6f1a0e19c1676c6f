"""Training objectives with analytic gradients w.r.t. the generator output.

Each loss returns ``(value, grad)`` where ``grad`` has the shape of the
generator estimate ``xhat``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

PROB_CLAMP = 1e-12

# Shipped defaults for the feature (alpha) and adversarial (beta) weights are
# not published values; they only satisfy alpha, beta > 0 and alpha + beta < 1.
DEFAULT_ALPHA = 0.3
DEFAULT_BETA = 0.01


@dataclass(frozen=True)
class LossWeights:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    epsilon: float = 1e-3

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"loss weights must be >= 0, got alpha={self.alpha}, beta={self.beta}")
        if self.alpha + self.beta >= 1:
            raise ConfigError(f"alpha + beta must be < 1, got {self.alpha + self.beta}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")

    @property
    def pixel(self):
        return 1.0 - self.alpha - self.beta

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"LossWeights: unknown keys {sorted(unknown)}")
        return cls(**data)


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def mse_loss(x, xhat, reduction="mean"):
    """Squared error between target ``x`` and estimate ``xhat``.

    ``reduction="sum"`` gives the squared l2 norm; the default averages over
    all elements so the step size does not depend on the patch size.
    """
    _same_shape(x, xhat, "mse_loss")
    diff = xhat - x
    if reduction == "sum":
        return float(np.sum(diff * diff)), 2.0 * diff
    if reduction == "mean":
        n = diff.size
        return float(np.sum(diff * diff)) / n, (2.0 / n) * diff
    raise ConfigError(f"unknown reduction {reduction!r}")


def charbonnier(xhat, x, epsilon=1e-3):
    """Sum of sqrt(d^2 + eps^2) over every element, a smooth l1 distance."""
    _same_shape(x, xhat, "charbonnier")
    if epsilon <= 0:
        raise ConfigError("epsilon must be > 0")
    diff = xhat - x
    root = np.sqrt(diff * diff + epsilon * epsilon)
    return float(np.sum(root)), diff / root


def l2_distance(xhat, x):
    """Summed squared difference; drop-in replacement for :func:`charbonnier`."""
    _same_shape(x, xhat, "l2_distance")
    diff = xhat - x
    return float(np.sum(diff * diff)), 2.0 * diff


def pixel_distance(xhat, x, epsilon, mode="charbonnier"):
    if mode == "charbonnier":
        return charbonnier(xhat, x, epsilon)
    if mode == "l2":
        return l2_distance(xhat, x)
    raise ConfigError(f"unknown distance mode {mode!r}")


def feature_charbonnier(xhat, x, feature_net, epsilon=1e-3, mode="charbonnier"):
    """Distance between tapped feature maps, backpropagated to ``xhat``.

    The feature network is frozen: its parameters get no gradient.
    """
    _same_shape(x, xhat, "feature_charbonnier")
    target = [t.copy() for t in feature_net.forward(x)]
    estimate = feature_net.forward(xhat)
    total = 0.0
    tap_grads = []
    for fe, ft in zip(estimate, target):
        value, g = pixel_distance(fe, ft, epsilon, mode)
        total += value
        tap_grads.append(g)
    return total, feature_net.backward(tap_grads)


@dataclass
class GanLosses:
    loss_d: float
    loss_g: float
    grad_real: np.ndarray     # dL_D / d_real
    grad_fake_d: np.ndarray   # dL_D / d_fake
    grad_fake_g: np.ndarray   # dL_G / d_fake


def _clamped(p, what):
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise NumericError(f"{what}: probabilities outside [0, 1]")
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def gan_losses(d_real, d_fake, generator_mode="minimax"):
    """Discriminator and generator adversarial losses from D's outputs.

    ``L_D = -mean(log d_real) - mean(log(1 - d_fake))``. The generator loss is
    ``mean(log(1 - d_fake))`` in minimax mode or ``-mean(log d_fake)`` in
    non-saturating mode. Probabilities are clamped to [1e-12, 1 - 1e-12].
    """
    pr = _clamped(np.asarray(d_real, dtype=float), "d_real")
    pf = _clamped(np.asarray(d_fake, dtype=float), "d_fake")
    nr, nf = pr.size, pf.size
    loss_d = -float(np.mean(np.log(pr))) - float(np.mean(np.log1p(-pf)))
    grad_real = -1.0 / (nr * pr)
    grad_fake_d = 1.0 / (nf * (1.0 - pf))
    if generator_mode == "minimax":
        loss_g = float(np.mean(np.log1p(-pf)))
        grad_fake_g = -1.0 / (nf * (1.0 - pf))
    elif generator_mode == "nonsaturating":
        loss_g = -float(np.mean(np.log(pf)))
        grad_fake_g = -1.0 / (nf * pf)
    else:
        raise ConfigError(f"unknown generator mode {generator_mode!r}")
    return GanLosses(loss_d, loss_g, grad_real, grad_fake_d, grad_fake_g)


def generator_objective(x, xhat, discriminator, feature_net, weights,
                        generator_mode="minimax", mode="charbonnier"):
    """Weighted feature + adversarial + pixel objective at a given estimate.

    Returns ``(value, grad_xhat, parts)`` with ``parts`` holding the
    unweighted ``pixel``, ``feature`` and ``adversarial`` terms. Terms with a
    zero weight are skipped and contribute exactly zero.
    """
    _same_shape(x, xhat, "generator_objective")
    parts = {"pixel": 0.0, "feature": 0.0, "adversarial": 0.0}
    grad = np.zeros_like(xhat)
    value_feat = value_adv = value_pix = 0.0
    if weights.alpha > 0:
        parts["feature"], g = feature_charbonnier(xhat, x, feature_net, weights.epsilon, mode)
        value_feat = weights.alpha * parts["feature"]
        grad += weights.alpha * g
    if weights.beta > 0:
        d_fake = discriminator.forward(xhat, train=True)
        gl = gan_losses(np.full_like(d_fake, 0.5), d_fake, generator_mode)
        parts["adversarial"] = gl.loss_g
        value_adv = weights.beta * gl.loss_g
        grad += weights.beta * discriminator.backward(gl.grad_fake_g, accumulate=False)
    parts["pixel"], g = pixel_distance(xhat, x, weights.epsilon, mode)
    value_pix = weights.pixel * parts["pixel"]
    grad += weights.pixel * g
    return value_feat + value_adv + value_pix, grad, parts


def total_loss(x, frames, generator, discriminator, feature_net, weights,
               generator_mode="minimax", mode="charbonnier"):
    """Full generator objective for target ``x`` and input frames.

    Runs the generator forward (leaving its caches ready for ``backward``)
    and returns ``(value, grad_xhat, parts)``.
    """
    xhat = generator.forward(frames)
    return generator_objective(x, xhat, discriminator, feature_net, weights,
                               generator_mode, mode)
