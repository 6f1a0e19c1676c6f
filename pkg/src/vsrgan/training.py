"""ADAM, the learning-rate schedule, MSE pretraining and adversarial training."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import checkpoint as ckpt_io
from .errors import CheckpointError, ConfigError, NumericError, TrainingAborted
from .losses import LossWeights, gan_losses, generator_objective, mse_loss

log = logging.getLogger(__name__)

COLLAPSE_LOSS = 1e-3
COLLAPSE_STEPS = 100


@dataclass(frozen=True)
class TrainConfig:
    scale: int = 2
    batch_size: int = 64
    pretrain_epochs: int = 100
    pretrain_lr: float = 1e-3
    lr_drop_epochs: tuple = (50, 75)
    lr_drop_factor: float = 10.0
    gan_epochs: int = 30
    gan_lr: float = 1e-4
    weight_decay_g: float = 1e-4
    weight_decay_d: float = 1e-3
    loss_weights: LossWeights = field(default_factory=LossWeights)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    d_steps_per_g_step: int = 1
    charbonnier_mode: str = "charbonnier"
    generator_mode: str = "minimax"
    mse_reduction: str = "mean"
    max_steps: int | None = None        # stop after this many updates (None: run all epochs)
    checkpoint_every: int = 0           # epochs between periodic checkpoints (0: off)

    def __post_init__(self):
        object.__setattr__(self, "lr_drop_epochs", tuple(int(e) for e in self.lr_drop_epochs))
        if isinstance(self.loss_weights, dict):
            object.__setattr__(self, "loss_weights", LossWeights.from_dict(self.loss_weights))
        for name in ("pretrain_lr", "gan_lr", "lr_drop_factor", "adam_eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.weight_decay_g < 0 or self.weight_decay_d < 0:
            raise ConfigError("weight decay must be >= 0")
        if self.batch_size < 1 or self.d_steps_per_g_step < 1:
            raise ConfigError("batch_size and d_steps_per_g_step must be >= 1")
        if self.pretrain_epochs < 0 or self.gan_epochs < 0:
            raise ConfigError("epoch counts must be >= 0")
        drops = self.lr_drop_epochs
        if any(b <= a for a, b in zip(drops, drops[1:])):
            raise ConfigError("lr_drop_epochs must be strictly increasing")
        if drops and self.pretrain_epochs and drops[-1] >= self.pretrain_epochs:
            raise ConfigError("lr_drop_epochs must lie below pretrain_epochs")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("ADAM betas must lie in [0, 1)")
        if self.charbonnier_mode not in ("charbonnier", "l2"):
            raise ConfigError(f"charbonnier_mode must be charbonnier or l2, got {self.charbonnier_mode!r}")
        if self.generator_mode not in ("minimax", "nonsaturating"):
            raise ConfigError(f"unknown generator_mode {self.generator_mode!r}")
        if self.mse_reduction not in ("mean", "sum"):
            raise ConfigError(f"unknown mse_reduction {self.mse_reduction!r}")
        if self.max_steps is not None and self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")

    def to_dict(self):
        d = asdict(self)
        d["lr_drop_epochs"] = list(self.lr_drop_epochs)
        return d

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"TrainConfig: unknown keys {sorted(unknown)}")
        return cls(**data)


def adam_step(param, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0, t=1):
    """One ADAM update in place; weight decay is added to the gradient (L2)."""
    if t < 1:
        raise ValueError("ADAM step index starts at 1")
    if not np.all(np.isfinite(param.grad)):
        raise NumericError(f"non-finite gradient in parameter {param.name!r}")
    g = param.grad + weight_decay * param.value if weight_decay else param.grad
    param.adam_m *= beta1
    param.adam_m += (1.0 - beta1) * g
    param.adam_v *= beta2
    param.adam_v += (1.0 - beta2) * (g * g)
    m_hat = param.adam_m / (1.0 - beta1 ** t)
    v_hat = param.adam_v / (1.0 - beta2 ** t)
    param.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return param


class Adam:
    """ADAM over a fixed parameter list; moments live on the Parameters."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0, t=0):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = t

    def step(self, lr):
        self.t += 1
        for p in self.params:
            adam_step(p, lr, self.beta1, self.beta2, self.eps, self.weight_decay, self.t)


def lr_at_epoch(config, epoch):
    drops = sum(1 for e in config.lr_drop_epochs if e <= epoch)
    return config.pretrain_lr / config.lr_drop_factor ** drops


@dataclass
class LogRecord:
    epoch: int
    step: int
    loss_d: float
    loss_g: float
    loss_pixel: float
    loss_feat: float
    lr: float
    seconds: float


LOG_HEADER = [f.name for f in fields(LogRecord)]


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def append(self, record):
        for name in ("loss_d", "loss_g", "loss_pixel", "loss_feat"):
            if not math.isfinite(getattr(record, name)):
                raise NumericError(f"non-finite {name} at step {record.step}")
        if self.records and (record.epoch, record.step) <= (self.records[-1].epoch, self.records[-1].step):
            raise ValueError("log records must be in increasing (epoch, step) order")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def values(self):
        """Records without wall-clock time, for determinism comparisons."""
        return [tuple(getattr(r, n) for n in LOG_HEADER if n != "seconds") for r in self.records]

    def to_csv(self, zero_time=False):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_HEADER)
        for r in self.records:
            row = asdict(r)
            if zero_time:
                row["seconds"] = 0.0
            writer.writerow([repr(row[n]) if isinstance(row[n], float) else row[n] for n in LOG_HEADER])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != LOG_HEADER:
            raise ValueError(f"unexpected log header {header}")
        out = cls()
        for row in reader:
            out.records.append(LogRecord(int(row[0]), int(row[1]), *map(float, row[2:])))
        return out


def _batches(n, batch_size, seed, epoch):
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def _done(config, step):
    return config.max_steps is not None and step >= config.max_steps


def pretrain(generator, dataset, config, start_epoch=0, adam_t=0, on_epoch_end=None):
    """MSE pretraining of the generator.

    ``on_epoch_end(epoch, optimizer)`` may write a checkpoint and return its
    path. Resuming from such a checkpoint with ``start_epoch=epoch + 1`` and
    ``adam_t=optimizer.t`` continues the run bit for bit.
    """
    if len(dataset) == 0:
        raise ConfigError("empty dataset")
    opt = Adam(generator.parameters(), config.adam_beta1, config.adam_beta2,
               config.adam_eps, 0.0, t=adam_t)
    tlog = TrainLog()
    last_ckpt = None
    t0 = time.perf_counter()
    for epoch in range(start_epoch, config.pretrain_epochs):
        if _done(config, opt.t):
            break
        lr = lr_at_epoch(config, epoch)
        for idx in _batches(len(dataset), config.batch_size, config.seed, epoch):
            if _done(config, opt.t):
                break
            generator.zero_grads()
            xhat = generator.forward(dataset.lr[idx])
            loss, grad = mse_loss(dataset.hr[idx], xhat, config.mse_reduction)
            if not math.isfinite(loss):
                raise TrainingAborted(f"non-finite MSE at epoch {epoch}, step {opt.t + 1}", last_ckpt)
            generator.backward(grad)
            try:
                opt.step(lr)
            except NumericError as exc:
                raise TrainingAborted(str(exc), last_ckpt) from exc
            tlog.append(LogRecord(epoch, opt.t, 0.0, loss, loss, 0.0, lr, time.perf_counter() - t0))
        if on_epoch_end is not None:
            last_ckpt = on_epoch_end(epoch, opt) or last_ckpt
    return generator, tlog


def train_gan(generator, discriminator, feature_net, dataset, config, pretrained=True,
              start_epoch=0, adam_t=(0, 0), on_epoch_end=None):
    """Alternating discriminator / generator updates on the weighted objective.

    Per minibatch: ``d_steps_per_g_step`` discriminator updates on real
    patches versus the current (detached) estimates, then one generator
    update on feature + adversarial + pixel distance. Each network has its
    own ADAM state and weight decay; the learning rate is constant.
    """
    if len(dataset) == 0:
        raise ConfigError("empty dataset")
    weights = config.loss_weights
    if not pretrained:
        log.warning("adversarial training from an untrained generator; pretrain it first")
    if weights.alpha <= 0 or weights.beta <= 0:
        log.warning("alpha=%g, beta=%g: degenerate weights, not a full adversarial run",
                    weights.alpha, weights.beta)
    opt_g = Adam(generator.parameters(), config.adam_beta1, config.adam_beta2,
                 config.adam_eps, config.weight_decay_g, t=adam_t[0])
    opt_d = Adam(discriminator.parameters(), config.adam_beta1, config.adam_beta2,
                 config.adam_eps, config.weight_decay_d, t=adam_t[1])
    lr = config.gan_lr
    tlog = TrainLog()
    last_ckpt = None
    low_streak = 0
    t0 = time.perf_counter()
    for epoch in range(start_epoch, config.gan_epochs):
        if _done(config, opt_g.t):
            break
        for idx in _batches(len(dataset), config.batch_size, config.seed, epoch):
            if _done(config, opt_g.t):
                break
            x = dataset.hr[idx]
            xhat = generator.forward(dataset.lr[idx])
            fake = xhat.copy()  # detached copy for the discriminator
            loss_d = 0.0
            for _ in range(config.d_steps_per_g_step):
                # real and fake halves run as separate batches; the gradient
                # for the real half depends on d_real only
                discriminator.zero_grads()
                d_real = discriminator.forward(x, train=True)
                discriminator.backward(gan_losses(d_real, np.full_like(d_real, 0.5)).grad_real)
                d_fake = discriminator.forward(fake, train=True)
                gl = gan_losses(d_real, d_fake, config.generator_mode)
                discriminator.backward(gl.grad_fake_d)
                loss_d = gl.loss_d
                try:
                    opt_d.step(lr)
                except NumericError as exc:
                    raise TrainingAborted(str(exc), last_ckpt) from exc

            generator.zero_grads()
            value, grad, parts = generator_objective(
                x, xhat, discriminator, feature_net, weights,
                config.generator_mode, config.charbonnier_mode,
            )
            if not (math.isfinite(value) and math.isfinite(loss_d)):
                raise TrainingAborted(f"non-finite loss at epoch {epoch}, step {opt_g.t + 1}",
                                      last_ckpt)
            generator.backward(grad)
            try:
                opt_g.step(lr)
            except NumericError as exc:
                raise TrainingAborted(str(exc), last_ckpt) from exc
            tlog.append(LogRecord(epoch, opt_g.t, loss_d, value, parts["pixel"],
                                  parts["feature"], lr, time.perf_counter() - t0))
            low_streak = low_streak + 1 if loss_d < COLLAPSE_LOSS else 0
            if low_streak == COLLAPSE_STEPS:
                msg = (f"discriminator loss below {COLLAPSE_LOSS:g} for {COLLAPSE_STEPS} "
                       f"consecutive steps (step {opt_g.t})")
                log.warning(msg)
                tlog.warnings.append(msg)
        if on_epoch_end is not None:
            last_ckpt = on_epoch_end(epoch, opt_g, opt_d) or last_ckpt
    return generator, discriminator, tlog


def transfer_init(source, generator):
    """Copy every generator tensor from a trained checkpoint; reset ADAM moments.

    ``source`` is a checkpoint path or a loaded :class:`~.checkpoint.Checkpoint`.
    """
    ckpt = ckpt_io.load(source) if not isinstance(source, ckpt_io.Checkpoint) else source
    if ckpt.kind != generator.kind:
        raise CheckpointError(f"transfer source is a {ckpt.kind}, expected {generator.kind}")
    ckpt_io.check_tensor_names(generator, ckpt.tensors, source="transfer source")
    if ckpt.config != ckpt_io.network_config_dict(generator):
        raise CheckpointError(
            f"transfer source config {ckpt.config} differs from target "
            f"{ckpt_io.network_config_dict(generator)}"
        )
    generator.load_state_tensors(ckpt.tensors)
    for p in generator.parameters():
        p.reset_moments()
        p.zero_grad()
    return generator


def with_overrides(config, **changes):
    return replace(config, **changes)
