"""VSRResNet generator, patch discriminator and the frozen feature network."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor_core import ops
from .tensor_core.layers import AvgPool2, BatchNorm2d, Conv2d, Linear, Module, ReLU, Sigmoid


def _from_dict(cls, data):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown keys {sorted(unknown)}")
    return cls(**data)


@dataclass(frozen=True)
class GeneratorConfig:
    input_frames: int = 5
    base_channels: int = 64
    num_res_blocks: int = 15
    kernel: int = 3
    patch_size: int = 36

    def __post_init__(self):
        if self.input_frames < 1 or self.input_frames % 2 == 0:
            raise ConfigError(f"input_frames must be odd and >= 1, got {self.input_frames}")
        if self.num_res_blocks < 0:
            raise ConfigError("num_res_blocks must be >= 0")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be odd, got {self.kernel}")
        if self.base_channels < 1 or self.patch_size < 1:
            raise ConfigError("base_channels and patch_size must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return _from_dict(cls, data)


@dataclass(frozen=True)
class DiscriminatorConfig:
    conv_channels: tuple = (64, 128, 256)
    kernel: int = 3
    stride: int = 2
    leaky_slope: float = 0.2
    input_size: int = 36

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if not self.conv_channels:
            raise ConfigError("discriminator needs at least one convolution")
        if self.kernel % 2 == 0 or self.stride < 1:
            raise ConfigError("discriminator kernel must be odd and stride >= 1")
        if not 0.0 <= self.leaky_slope < 1.0:
            raise ConfigError("leaky_slope must lie in [0, 1)")
        if self.final_size() < 1:
            raise ConfigError("spatial extent vanishes before the dense layer")

    def final_size(self):
        size = self.input_size
        for _ in self.conv_channels:
            size = (size + 2 * (self.kernel // 2) - self.kernel) // self.stride + 1
        return size

    def to_dict(self):
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, data):
        return _from_dict(cls, data)


@dataclass(frozen=True)
class FeatureNetSpec:
    """Layer list of the frozen feature extractor.

    ``pool_after`` and ``taps`` use 1-based layer numbers; pooling is a 2x2
    average applied after the named layer's ReLU, taps emit that ReLU output.
    """

    channels: tuple = (16, 16, 32, 32)
    pool_after: tuple = (2,)
    taps: tuple = (3, 4)
    kernel: int = 3
    seed: int = 42
    weight_file: str | None = None

    def __post_init__(self):
        for name in ("channels", "pool_after", "taps"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        n = len(self.channels)
        if not self.taps:
            raise ConfigError("feature network needs at least one tap point")
        if any(not 1 <= t <= n for t in self.taps + self.pool_after):
            raise ConfigError("tap/pool layer numbers must lie in 1..len(channels)")

    def architecture(self):
        d = self.to_dict()
        d.pop("weight_file")
        d.pop("seed")
        return d

    def to_dict(self):
        d = asdict(self)
        for name in ("channels", "pool_after", "taps"):
            d[name] = list(d[name])
        return d

    @classmethod
    def from_dict(cls, data):
        return _from_dict(cls, data)


# He-initialized residual branches compound over the trunk (activations grow
# by orders of magnitude at 15 blocks); the second conv of each branch starts
# at a tenth of its He scale so every block begins close to the identity.
RESIDUAL_INIT_SCALE = 0.1


class ResidualBlock(Module):
    """conv, ReLU, conv, then the block input is added to the result."""

    def __init__(self, name, channels, kernel, rng):
        self.conv_a = Conv2d(f"{name}.conv_a", channels, channels, kernel, rng=rng)
        self.relu = ReLU()
        self.conv_b = Conv2d(f"{name}.conv_b", channels, channels, kernel, rng=rng)
        self.conv_b.weight.value *= RESIDUAL_INIT_SCALE

    def forward(self, x):
        return ops.add_forward(x, self.conv_b.forward(self.relu.forward(self.conv_a.forward(x))))

    def backward(self, grad_out, accumulate=True):
        g_skip, g_branch = ops.add_backward(grad_out)
        g = self.conv_b.backward(g_branch, accumulate=accumulate)
        g = self.conv_a.backward(self.relu.backward(g), accumulate=accumulate)
        return g_skip + g


class Generator(Module):
    """VSRResNet: per-frame feature extraction, late fusion, residual trunk.

    Input ``(B, F, 1, N, N)`` of bicubically upsampled frames, output the
    ``(B, 1, N, N)`` estimate of the center frame.
    """

    kind = "generator"

    def __init__(self, config=None, seed=0):
        self.config = config or GeneratorConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        c, k = cfg.base_channels, cfg.kernel
        self.frame_conv = Conv2d("frame_conv", 1, c, k, rng=rng)
        self.frame_relu = ReLU()
        self.fusion = Conv2d("fusion", cfg.input_frames * c, c, k, rng=rng)
        self.fusion_relu = ReLU()
        self.post_fusion = Conv2d("post_fusion", c, c, k, rng=rng)
        self.post_fusion_relu = ReLU()
        self.blocks = [ResidualBlock(f"res{i:02d}", c, k, rng) for i in range(cfg.num_res_blocks)]
        self.output = Conv2d("output", c, 1, k, rng=rng)

    def conv_layers(self):
        convs = [self.frame_conv, self.fusion, self.post_fusion]
        for blk in self.blocks:
            convs += [blk.conv_a, blk.conv_b]
        return convs + [self.output]

    def forward(self, frames):
        cfg = self.config
        if frames.ndim != 5 or frames.shape[1] != cfg.input_frames or frames.shape[2] != 1:
            raise ShapeError(
                f"generator expects (B, {cfg.input_frames}, 1, N, N), got {frames.shape}"
            )
        if min(frames.shape[3:]) < cfg.kernel:
            raise ShapeError(f"spatial size {frames.shape[3:]} smaller than kernel")
        b, f, _, h, w = frames.shape
        self._frames_shape = frames.shape
        # one shared convolution applied to every frame
        feat = self.frame_relu.forward(self.frame_conv.forward(frames.reshape(b * f, 1, h, w)))
        # frame-major reshape == channel concat of the per-frame maps
        fused = feat.reshape(b, f * cfg.base_channels, h, w)
        x = self.fusion_relu.forward(self.fusion.forward(fused))
        x = self.post_fusion_relu.forward(self.post_fusion.forward(x))
        for blk in self.blocks:
            x = blk.forward(x)
        return self.output.forward(x)

    def backward(self, grad_out, need_input_grad=False, accumulate=True):
        g = self.output.backward(grad_out, accumulate=accumulate)
        for blk in reversed(self.blocks):
            g = blk.backward(g, accumulate=accumulate)
        g = self.post_fusion.backward(self.post_fusion_relu.backward(g), accumulate=accumulate)
        g = self.fusion.backward(self.fusion_relu.backward(g), accumulate=accumulate)
        b, f, _, h, w = self._frames_shape
        g = g.reshape(b * f, self.config.base_channels, h, w)
        g = self.frame_conv.backward(
            self.frame_relu.backward(g), need_input_grad=need_input_grad, accumulate=accumulate
        )
        return None if g is None else g.reshape(self._frames_shape)


class Discriminator(Module):
    """Strided conv + BN + LeakyReLU stages, a dense layer and a sigmoid."""

    kind = "discriminator"

    def __init__(self, config=None, seed=0):
        self.config = config or DiscriminatorConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        self.convs, self.norms, self.acts = [], [], []
        cin = 1
        for i, cout in enumerate(cfg.conv_channels, start=1):
            # bias is redundant ahead of batch norm
            self.convs.append(Conv2d(f"conv{i}", cin, cout, cfg.kernel, stride=cfg.stride,
                                     bias=False, rng=rng))
            self.norms.append(BatchNorm2d(f"bn{i}", cout))
            self.acts.append(ReLU(cfg.leaky_slope))
            cin = cout
        s = cfg.final_size()
        self.fc = Linear("fc", cin * s * s, 1, rng=rng)
        self.sigmoid = Sigmoid()

    def forward(self, patch, train=True):
        n = self.config.input_size
        if patch.ndim != 4 or patch.shape[1:] != (1, n, n):
            raise ShapeError(f"discriminator expects (B, 1, {n}, {n}), got {patch.shape}")
        x = patch
        for conv, bn, act in zip(self.convs, self.norms, self.acts):
            x = act.forward(bn.forward(conv.forward(x), train=train))
        self._trunk_shape = x.shape
        return self.sigmoid.forward(self.fc.forward(x))

    def backward(self, grad_out, accumulate=True):
        g = self.fc.backward(self.sigmoid.backward(grad_out), accumulate=accumulate)
        g = g.reshape(self._trunk_shape)
        for conv, bn, act in zip(reversed(self.convs), reversed(self.norms), reversed(self.acts)):
            g = conv.backward(bn.backward(act.backward(g), accumulate=accumulate),
                              accumulate=accumulate)
        return g


class FeatureNet(Module):
    """Frozen convolutional feature extractor standing in for VGG."""

    kind = "featurenet"

    def __init__(self, spec=None):
        self.spec = spec or FeatureNetSpec()
        rng = np.random.default_rng(self.spec.seed)
        self.convs, self.acts = [], []
        cin = 1
        for i, cout in enumerate(self.spec.channels, start=1):
            self.convs.append(Conv2d(f"feat{i}", cin, cout, self.spec.kernel, rng=rng))
            self.acts.append(ReLU())
            cin = cout
        self.pools = {i: AvgPool2() for i in self.spec.pool_after}

    @property
    def config(self):
        return self.spec

    def forward(self, image):
        if image.ndim != 4 or image.shape[1] != 1:
            raise ShapeError(f"feature network expects (B, 1, N, N), got {image.shape}")
        taps = []
        x = image
        for i, (conv, act) in enumerate(zip(self.convs, self.acts), start=1):
            x = act.forward(conv.forward(x))
            if i in self.spec.taps:
                taps.append(x)
            if i in self.pools:
                x = self.pools[i].forward(x)
        return taps

    def backward(self, tap_grads):
        """Gradient w.r.t. the input image; weights stay frozen."""
        grads = dict(zip(self.spec.taps, tap_grads))
        g = None
        n = len(self.convs)
        for i in range(n, 0, -1):
            if i in self.pools and g is not None:
                g = self.pools[i].backward(g)
            if i in grads:
                g = grads[i] if g is None else g + grads[i]
            if g is None:
                continue
            g = self.convs[i - 1].backward(self.acts[i - 1].backward(g), accumulate=False)
        return g


def param_count(network):
    return sum(p.size for p in network.parameters())


def conv_count(network):
    """Number of distinct convolution operations (a shared layer counts once)."""
    if isinstance(network, Generator):
        return len(network.conv_layers())
    if isinstance(network, Discriminator):
        return len(network.convs)
    if isinstance(network, FeatureNet):
        return len(network.convs)
    raise TypeError(f"unknown network type {type(network).__name__}")


def zero_parameters(network):
    for p in network.parameters():
        p.value[...] = 0.0
    return network


def passthrough_generator(config=None):
    """Generator whose output equals the center input frame for inputs >= 0.

    One channel carries the center frame through every layer via unit center
    taps; residual branches are zero.
    """
    gen = zero_parameters(Generator(config))
    cfg = gen.config
    mid = cfg.kernel // 2
    center = cfg.input_frames // 2
    gen.frame_conv.weight.value[0, 0, mid, mid] = 1.0
    gen.fusion.weight.value[0, center * cfg.base_channels, mid, mid] = 1.0
    gen.post_fusion.weight.value[0, 0, mid, mid] = 1.0
    gen.output.weight.value[0, 0, mid, mid] = 1.0
    return gen


def build_network(kind, config, seed=0):
    if kind == "generator":
        return Generator(config, seed=seed)
    if kind == "discriminator":
        return Discriminator(config, seed=seed)
    if kind == "featurenet":
        return FeatureNet(config)
    raise ConfigError(f"unknown network kind {kind!r}")


CONFIG_TYPES = {
    "generator": GeneratorConfig,
    "discriminator": DiscriminatorConfig,
    "featurenet": FeatureNetSpec,
}
