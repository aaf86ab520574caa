"""Generator and discriminator networks for 64 x 84 piano rolls.

Generators end in a sigmoid so outputs are note probabilities in (0, 1).
Internally each generator pads its input to a shape its strides divide and
crops the result back, so the interface shape is always 64 x 84.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeMismatch, UnsupportedShape
from .pianoroll_io import ROLL_SHAPE

INIT_STD = 0.02


@dataclass(frozen=True)
class GeneratorConfig:
    kind: str = "resnet9"  # "resnet9" or "unet128"
    base_channels: int = 64
    n_blocks: int = 9  # residual blocks (resnet only)


@dataclass(frozen=True)
class DiscriminatorConfig:
    base_channels: int = 64
    n_layers: int = 3  # stride-2 convolutions; 3 gives the 70 x 70 receptive field


def init_weights(module: nn.Module, seed: int) -> None:
    """Gaussian(0, 0.02) conv weights, zero biases, from a private generator."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * INIT_STD)
                if m.bias is not None:
                    m.bias.zero_()


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.body(x)


class ResnetGenerator(nn.Module):
    """7x7 stem, two stride-2 convs, residual blocks, two stride-1/2 transposed convs, 7x7 head."""

    pad_to = (64, 88)

    def __init__(self, base_channels: int = 64, n_blocks: int = 9):
        super().__init__()
        c = base_channels
        layers = [nn.ReflectionPad2d(3), nn.Conv2d(1, c, 7), nn.InstanceNorm2d(c), nn.ReLU(True)]
        for mult in (1, 2):
            layers += [nn.Conv2d(c * mult, c * mult * 2, 3, stride=2, padding=1),
                       nn.InstanceNorm2d(c * mult * 2), nn.ReLU(True)]
        layers += [ResidualBlock(c * 4) for _ in range(n_blocks)]
        for mult in (4, 2):
            layers += [nn.ConvTranspose2d(c * mult, c * mult // 2, 3, stride=2, padding=1,
                                          output_padding=1),
                       nn.InstanceNorm2d(c * mult // 2), nn.ReLU(True)]
        layers += [nn.ReflectionPad2d(3), nn.Conv2d(c, 1, 7)]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        h, w = x.shape[-2:]
        x = F.pad(x, (0, self.pad_to[1] - w, 0, self.pad_to[0] - h))
        return torch.sigmoid(self.model(x)[..., :h, :w])


class UnetBlock(nn.Module):
    """One level of a U-Net: down conv, inner block, up conv, skip concatenation."""

    def __init__(self, outer: int, inner: int, submodule: nn.Module | None = None,
                 in_channels: int | None = None, outermost: bool = False):
        super().__init__()
        self.outermost = outermost
        in_channels = outer if in_channels is None else in_channels
        down = nn.Conv2d(in_channels, inner, 4, stride=2, padding=1)
        if outermost:
            up = nn.ConvTranspose2d(inner * 2, outer, 4, stride=2, padding=1)
            seq = [down, submodule, nn.ReLU(True), up]
        elif submodule is None:
            up = nn.ConvTranspose2d(inner, outer, 4, stride=2, padding=1)
            seq = [nn.LeakyReLU(0.2, True), down, nn.ReLU(True), up, nn.InstanceNorm2d(outer)]
        else:
            up = nn.ConvTranspose2d(inner * 2, outer, 4, stride=2, padding=1)
            seq = [nn.LeakyReLU(0.2, True), down, nn.InstanceNorm2d(inner), submodule,
                   nn.ReLU(True), up, nn.InstanceNorm2d(outer)]
        self.model = nn.Sequential(*seq)

    def forward(self, x):
        if self.outermost:
            return self.model(x)
        # LeakyReLU(inplace) would clobber the skip input
        return torch.cat([x, self.model(x.clone())], dim=1)


class UnetGenerator(nn.Module):
    """The 128 x 128 U-Net (seven stride-2 levels) with a sigmoid head."""

    pad_to = (128, 128)

    def __init__(self, base_channels: int = 64, num_downs: int = 7):
        super().__init__()
        c = base_channels
        block = UnetBlock(c * 8, c * 8)
        for _ in range(num_downs - 5):
            block = UnetBlock(c * 8, c * 8, block)
        block = UnetBlock(c * 4, c * 8, block)
        block = UnetBlock(c * 2, c * 4, block)
        block = UnetBlock(c, c * 2, block)
        self.model = UnetBlock(1, c, block, in_channels=1, outermost=True)

    def forward(self, x):
        h, w = x.shape[-2:]
        if h > self.pad_to[0] or w > self.pad_to[1]:
            raise UnsupportedShape(f"U-Net input {h}x{w} exceeds {self.pad_to}")
        x = F.pad(x, (0, self.pad_to[1] - w, 0, self.pad_to[0] - h))
        return torch.sigmoid(self.model(x)[..., :h, :w])


class PatchDiscriminator(nn.Module):
    """PatchGAN: one raw score per overlapping 70 x 70 patch (no sigmoid)."""

    def __init__(self, base_channels: int = 64, n_layers: int = 3):
        super().__init__()
        c = base_channels
        layers = [nn.Conv2d(1, c, 4, stride=2, padding=1), nn.LeakyReLU(0.2, True)]
        mult = 1
        for n in range(1, n_layers):
            prev, mult = mult, min(2 ** n, 8)
            layers += [nn.Conv2d(c * prev, c * mult, 4, stride=2, padding=1),
                       nn.InstanceNorm2d(c * mult), nn.LeakyReLU(0.2, True)]
        prev, mult = mult, min(2 ** n_layers, 8)
        layers += [nn.Conv2d(c * prev, c * mult, 4, stride=1, padding=1),
                   nn.InstanceNorm2d(c * mult), nn.LeakyReLU(0.2, True)]
        self.trunk = nn.Sequential(*layers)
        self.head = nn.Conv2d(c * mult, 1, 4, stride=1, padding=1)

    def forward(self, x):
        return self.head(self.trunk(x))


def conv_layers(d: PatchDiscriminator) -> list[nn.Conv2d]:
    return [m for m in d.modules() if isinstance(m, nn.Conv2d)]


def receptive_field(d: PatchDiscriminator) -> int:
    rf = 1
    for conv in reversed(conv_layers(d)):
        rf = (rf - 1) * conv.stride[0] + conv.kernel_size[0]
    return rf


def score_map_shape(d: PatchDiscriminator, shape=ROLL_SHAPE) -> tuple[int, int]:
    h, w = shape
    for conv in conv_layers(d):
        k, s, p = conv.kernel_size[0], conv.stride[0], conv.padding[0]
        h, w = (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1
    return h, w


def build_generator(config: GeneratorConfig = GeneratorConfig(), seed: int = 0) -> nn.Module:
    if config.kind == "resnet9":
        net = ResnetGenerator(config.base_channels, config.n_blocks)
    elif config.kind == "unet128":
        net = UnetGenerator(config.base_channels)
    else:
        raise ValueError(f"unknown generator kind {config.kind!r}")
    init_weights(net, seed)
    return net


def build_discriminator(config: DiscriminatorConfig = DiscriminatorConfig(), seed: int = 0) -> PatchDiscriminator:
    net = PatchDiscriminator(config.base_channels, config.n_layers)
    init_weights(net, seed)
    return net


def n_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def _to_batch(x) -> tuple[torch.Tensor, int]:
    """Coerce input to N x 1 x 64 x 84, remembering how many leading dims to strip."""
    t = torch.as_tensor(np.asarray(x) if not isinstance(x, torch.Tensor) else x)
    if not t.is_floating_point():
        t = t.float()
    if t.shape[-2:] != ROLL_SHAPE:
        raise ShapeMismatch(f"expected trailing shape {ROLL_SHAPE}, got {tuple(t.shape)}")
    if t.dim() == 2:
        return t[None, None], 2
    if t.dim() == 3:
        return t[:, None], 1
    if t.dim() == 4 and t.shape[1] == 1:
        return t, 0
    raise ShapeMismatch(f"unsupported input shape {tuple(t.shape)}")


def _param_dtype(net: nn.Module) -> torch.dtype:
    return next(net.parameters()).dtype


def forward_generator(gen: nn.Module, x) -> torch.Tensor:
    """Apply a generator to one roll or a batch; the output has the input's shape."""
    batch, strip = _to_batch(x)
    out = gen(batch.to(_param_dtype(gen)))
    return out[0, 0] if strip == 2 else out[:, 0] if strip == 1 else out


def forward_discriminator(disc: nn.Module, x) -> torch.Tensor:
    """Score map(s): ``(h, w)`` for one roll, ``(N, h, w)`` for a batch, ``(N, 1, h, w)`` for 4-D input."""
    batch, strip = _to_batch(x)
    out = disc(batch.to(_param_dtype(disc)))
    return out[0, 0] if strip == 2 else out[:, 0] if strip == 1 else out


@dataclass(frozen=True)
class ModelConfig:
    generator: GeneratorConfig = GeneratorConfig()
    discriminator: DiscriminatorConfig = DiscriminatorConfig()
    use_aux: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(GeneratorConfig(**d["generator"]), DiscriminatorConfig(**d["discriminator"]),
                   bool(d["use_aux"]))


class TransferModel(nn.Module):
    """Both generators, both domain discriminators and, optionally, the two auxiliary ones.

    ``d_a`` judges real domain-A rolls against ``g_b2a`` output and ``d_b``
    real domain-B rolls against ``g_a2b`` output. ``d_a_aux`` judges mixed-set
    rolls against ``g_a2b`` output, ``d_b_aux`` against ``g_b2a`` output.
    """

    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = seed
        seeds = np.random.SeedSequence(seed).generate_state(6)
        self.g_a2b = build_generator(config.generator, int(seeds[0]))
        self.g_b2a = build_generator(config.generator, int(seeds[1]))
        self.d_a = build_discriminator(config.discriminator, int(seeds[2]))
        self.d_b = build_discriminator(config.discriminator, int(seeds[3]))
        if config.use_aux:
            self.d_a_aux = build_discriminator(config.discriminator, int(seeds[4]))
            self.d_b_aux = build_discriminator(config.discriminator, int(seeds[5]))
        else:
            self.d_a_aux = self.d_b_aux = None

    def generators(self) -> list[nn.Module]:
        return [self.g_a2b, self.g_b2a]

    def discriminators(self) -> list[nn.Module]:
        return [d for d in (self.d_a, self.d_b, self.d_a_aux, self.d_b_aux) if d is not None]

    def generator_for(self, direction: str) -> nn.Module:
        return {"A2B": self.g_a2b, "B2A": self.g_b2a}[direction]
