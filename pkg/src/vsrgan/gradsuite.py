"""Registered finite-difference checks for every layer, loss and network.

Each check builds a fixed tiny problem from a seed, probes
``sum(R * layer(x))`` by central differences and reports the max relative
error against the hand-written backward pass. Single layers must agree to
1e-6, composites (losses through networks, full networks) to 1e-4.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import losses
from .models import (
    Discriminator,
    DiscriminatorConfig,
    FeatureNet,
    FeatureNetSpec,
    Generator,
    GeneratorConfig,
    ResidualBlock,
)
from .tensor_core import ops
from .tensor_core.gradcheck import gradient_check
from .tensor_core.layers import AvgPool2, BatchNorm2d, Conv2d, Linear, ReLU, Sigmoid

LAYER_TOL = 1e-6
COMPOSITE_TOL = 1e-4
STEP = 1e-5


@dataclass(frozen=True)
class GradCheck:
    group: str
    name: str
    tol: float
    run: object  # callable returning the max relative error

    @property
    def row(self):
        return f"{self.group}/{self.name}"


@dataclass
class GradResult:
    check: GradCheck
    error: float
    seconds: float

    @property
    def passed(self):
        return bool(np.isfinite(self.error) and self.error < self.check.tol)


def _away_from_zero(rng, shape, margin=0.05):
    """Random values with |v| >= margin so kinks stay out of the FD stencil."""
    v = rng.uniform(margin, 1.0, shape)
    return v * rng.choice([-1.0, 1.0], shape)


def _coords(rng, size, limit):
    if limit is None or size <= limit:
        return None
    return sorted(rng.choice(size, limit, replace=False).tolist())


def _input_check(forward, backward, x, rng, limit=None):
    """Check d sum(R * forward(x)) / dx against ``backward(R)``."""
    r = rng.standard_normal(forward(x).shape)

    def f(z):
        out = forward(z)
        return float(np.sum(out * r)), backward(r)

    return lambda: gradient_check(f, x, STEP, _coords(rng, x.size, limit))


def _param_check(module_params, param, forward, backward, x, rng, limit=None):
    """Check the accumulated gradient of ``param`` for ``sum(R * forward(x))``."""
    r = rng.standard_normal(forward(x).shape)

    def f(w):
        saved = param.value.copy()
        param.value[...] = w
        for p in module_params:
            p.zero_grad()
        out = forward(x)
        backward(r)
        param.value[...] = saved
        return float(np.sum(out * r)), param.grad.copy()

    return lambda: gradient_check(f, param.value.copy(), STEP,
                                  _coords(rng, param.value.size, limit))


def _module_checks(group, tol, module, forward, backward, x, rng, limit=None, name_prefix=""):
    checks = [GradCheck(group, f"{name_prefix}input", tol,
                        _input_check(forward, backward, x, rng, limit))]
    params = list(module.parameters())
    for p in params:
        short = p.name.split(".", 1)[-1] if "." in p.name else p.name
        label = p.name if limit is not None else short
        checks.append(GradCheck(group, f"{name_prefix}{label}", tol,
                                _param_check(params, p, forward, backward, x, rng, limit)))
    return checks


def _conv_checks(seed):
    out = []
    for stride, tag in ((1, ""), (2, "stride2/")):
        rng = np.random.default_rng(seed + stride)
        conv = Conv2d("conv", 3, 4, 3, stride=stride, rng=rng)
        conv.bias.value[...] = rng.standard_normal(4)
        x = rng.standard_normal((2, 3, 7, 7))
        out += _module_checks("conv2d", LAYER_TOL, conv, conv.forward, conv.backward, x, rng,
                              name_prefix=tag)
    return out


def _simple(group, layer, shape, seed, positive=False):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.2, 2.0, shape) if positive else _away_from_zero(rng, shape)
    return [GradCheck(group, "input", LAYER_TOL, _input_check(layer.forward, layer.backward, x, rng))]


def _batchnorm_checks(seed):
    rng = np.random.default_rng(seed)
    bn = BatchNorm2d("bn", 3)
    bn.gamma.value[...] = rng.uniform(0.5, 1.5, 3)
    bn.beta.value[...] = rng.standard_normal(3)
    x = rng.standard_normal((4, 3, 3, 3))
    return _module_checks("batchnorm", LAYER_TOL, bn, lambda z: bn.forward(z, train=True),
                          bn.backward, x, rng)


def _linear_checks(seed):
    rng = np.random.default_rng(seed)
    fc = Linear("fc", 12, 3, rng=rng)
    fc.bias.value[...] = rng.standard_normal(3)
    x = rng.standard_normal((4, 2, 2, 3))
    return _module_checks("fully_connected", LAYER_TOL, fc, fc.forward,
                          lambda g: fc.backward(g).reshape(x.shape), x, rng)


def _add_checks(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 3, 4, 4))

    def via(first):
        def fwd(z):
            return ops.add_forward(z, b) if first else ops.add_forward(a, z)

        def bwd(g):
            return ops.add_backward(g)[0 if first else 1]

        return fwd, bwd

    out = []
    for first, name in ((True, "lhs"), (False, "rhs")):
        fwd, bwd = via(first)
        out.append(GradCheck("add", name, LAYER_TOL,
                             _input_check(fwd, bwd, a if first else b, rng)))
    return out


def _concat_checks(seed):
    rng = np.random.default_rng(seed)
    parts = [rng.standard_normal((2, c, 3, 3)) for c in (1, 2, 3)]
    out = []
    for k in range(3):
        def fwd(z, k=k):
            xs = list(parts)
            xs[k] = z
            return ops.channel_concat(xs)

        def bwd(g, k=k):
            return ops.channel_concat_backward(g, [1, 2, 3])[k]

        out.append(GradCheck("channel_concat", f"part{k}", LAYER_TOL,
                             _input_check(fwd, bwd, parts[k], rng)))
    return out


def _residual_checks(seed):
    rng = np.random.default_rng(seed)
    blk = ResidualBlock("res", 3, 3, rng)
    for conv in (blk.conv_a, blk.conv_b):
        conv.bias.value[...] = 0.1 * rng.standard_normal(3)
    x = rng.standard_normal((2, 3, 5, 5))
    return _module_checks("residual_block", COMPOSITE_TOL, blk, blk.forward, blk.backward, x, rng)


def _loss_checks(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (2, 1, 6, 6))
    xhat = x + _away_from_zero(rng, x.shape, 0.01) * 0.2
    out = []
    for reduction in ("mean", "sum"):
        out.append(GradCheck("mse", reduction, LAYER_TOL,
                             lambda reduction=reduction: gradient_check(
                                 lambda z: losses.mse_loss(x, z, reduction), xhat, STEP)))
    out.append(GradCheck("charbonnier", "xhat", LAYER_TOL, lambda: gradient_check(
        lambda z: losses.charbonnier(z, x, 1e-3), xhat, STEP)))
    out.append(GradCheck("l2_distance", "xhat", LAYER_TOL, lambda: gradient_check(
        lambda z: losses.l2_distance(z, x), xhat, STEP)))

    d_real = rng.uniform(0.1, 0.9, (5, 1))
    d_fake = rng.uniform(0.1, 0.9, (5, 1))
    out.append(GradCheck("gan_loss", "d_real", LAYER_TOL, lambda: gradient_check(
        lambda z: (losses.gan_losses(z, d_fake).loss_d, losses.gan_losses(z, d_fake).grad_real),
        d_real, STEP)))
    out.append(GradCheck("gan_loss", "d_fake", LAYER_TOL, lambda: gradient_check(
        lambda z: (losses.gan_losses(d_real, z).loss_d, losses.gan_losses(d_real, z).grad_fake_d),
        d_fake, STEP)))
    for mode in ("minimax", "nonsaturating"):
        out.append(GradCheck("gan_loss", f"generator_{mode}", LAYER_TOL,
                             lambda mode=mode: gradient_check(
                                 lambda z: (losses.gan_losses(d_real, z, mode).loss_g,
                                            losses.gan_losses(d_real, z, mode).grad_fake_g),
                                 d_fake, STEP)))
    return out


_SMALL_G = GeneratorConfig(input_frames=5, base_channels=4, num_res_blocks=2, patch_size=8)
_SMALL_D = DiscriminatorConfig(conv_channels=(4, 6), input_size=12)
_SMALL_F = FeatureNetSpec(channels=(4, 4, 6, 6))


def _generator_checks(seed):
    rng = np.random.default_rng(seed)
    gen = Generator(_SMALL_G, seed=seed)
    for p in gen.parameters():
        if p.name.endswith(".bias"):
            p.value[...] = 0.05 * rng.standard_normal(p.shape)
    frames = rng.uniform(0, 1, (2, 5, 1, 8, 8))
    return _module_checks(
        "generator", COMPOSITE_TOL, gen, gen.forward,
        lambda g: gen.backward(g, need_input_grad=True), frames, rng, limit=12,
    )


def _discriminator_checks(seed):
    rng = np.random.default_rng(seed)
    disc = Discriminator(_SMALL_D, seed=seed)
    for bn in disc.norms:
        bn.beta.value[...] = 0.1 * rng.standard_normal(bn.beta.shape)
    x = rng.uniform(0, 1, (3, 1, 12, 12))
    return _module_checks("discriminator", COMPOSITE_TOL, disc,
                          lambda z: disc.forward(z, train=True), disc.backward, x, rng, limit=12)


def _featurenet_checks(seed):
    rng = np.random.default_rng(seed)
    net = FeatureNet(_SMALL_F)
    x = rng.uniform(0, 1, (2, 1, 8, 8))
    taps = net.forward(x)
    rs = [rng.standard_normal(t.shape) for t in taps]

    def f(z):
        out = net.forward(z)
        return float(sum(np.sum(o * r) for o, r in zip(out, rs))), net.backward(rs)

    checks = [GradCheck("featurenet", "input", COMPOSITE_TOL,
                        lambda: gradient_check(f, x, STEP, _coords(rng, x.size, 24)))]
    y = x + 0.1 * rng.standard_normal(x.shape)
    for mode in ("charbonnier", "l2"):
        checks.append(GradCheck("feature_loss", mode, COMPOSITE_TOL, lambda mode=mode: gradient_check(
            lambda z: losses.feature_charbonnier(z, x, net, 1e-3, mode), y, STEP,
            _coords(rng, y.size, 24))))
    return checks


def _objective_checks(seed):
    rng = np.random.default_rng(seed)
    disc = Discriminator(_SMALL_D, seed=seed)
    net = FeatureNet(_SMALL_F)
    x = rng.uniform(0, 1, (3, 1, 12, 12))
    xhat = np.clip(x + 0.1 * rng.standard_normal(x.shape), 0, 1)
    weights = losses.LossWeights(alpha=0.3, beta=0.2)
    out = []
    for gmode in ("minimax", "nonsaturating"):
        for mode in ("charbonnier", "l2"):
            def f(z, gmode=gmode, mode=mode):
                v, g, _ = losses.generator_objective(x, z, disc, net, weights, gmode, mode)
                return v, g
            out.append(GradCheck("generator_objective", f"{gmode}/{mode}", COMPOSITE_TOL,
                                 lambda f=f: gradient_check(f, xhat, STEP,
                                                            _coords(rng, xhat.size, 16))))
    return out


def registry(seed=0):
    """Every registered check, in display order."""
    checks = []
    checks += _conv_checks(seed)
    checks += _simple("relu", ReLU(), (2, 3, 4, 4), seed)
    checks += _simple("leaky_relu", ReLU(0.2), (2, 3, 4, 4), seed)
    checks += _batchnorm_checks(seed)
    checks += _linear_checks(seed)
    checks += _simple("sigmoid", Sigmoid(), (4, 3), seed)
    checks += _simple("avg_pool2", AvgPool2(), (2, 3, 6, 6), seed)
    checks += _add_checks(seed)
    checks += _concat_checks(seed)
    checks += _loss_checks(seed)
    checks += _residual_checks(seed)
    checks += _featurenet_checks(seed)
    checks += _generator_checks(seed)
    checks += _discriminator_checks(seed)
    checks += _objective_checks(seed)
    return checks


def groups(seed=0):
    seen = []
    for c in registry(seed):
        if c.group not in seen:
            seen.append(c.group)
    return seen


def run_checks(which="all", seed=0):
    """Run checks whose group matches ``which`` (``all`` runs everything)."""
    checks = registry(seed)
    if which != "all":
        checks = [c for c in checks if c.group == which]
        if not checks:
            raise KeyError(f"unknown gradient check {which!r}; known: {', '.join(groups(seed))}")
    results = []
    for c in checks:
        t0 = time.perf_counter()
        err = c.run()
        results.append(GradResult(c, err, time.perf_counter() - t0))
    return results


def format_table(results):
    lines = [f"{'check':44s} {'max_rel_err':>12s} {'tol':>8s}  result"]
    for r in results:
        lines.append(f"{r.check.row:44s} {r.error:12.3e} {r.check.tol:8.0e}  "
                     f"{'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
