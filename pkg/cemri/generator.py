"""Hierarchical fusion generator.

Each input sequence (T1 and one DWI per b-value) has its own encoder of
stacked conv groups. At every scale the per-sequence features are fused:

    concat[T1; DWI b0..bN; WDM outputs of the b-value pairs]
        -> multi-sequence attention -> 1x1 mix to the scale's width

The fused maps feed a U-Net style synthesis decoder through skip
connections at the matching scale, ending in a 1x1 projection and a sigmoid.
Every encoder also drives a reconstruction decoder whose l1 error is a
training term, which keeps the per-sequence features faithful to their
inputs.

The ablation mode switches parts off: IF replaces the per-sequence encoders
by one encoder over the channel-stacked inputs (no reconstruction, no
fusion block), HF fuses without WDM and attention, HFWD adds the WDM and
FULL adds attention.

Input layout: a (B, K, H, W) tensor with K = 1 + len(b_values) channels in
``sequence_keys`` order (T1 first, then DWIs by ascending b).

Example:
    >>> generator = build_generator(TrainConfig(image_size=64))
    >>> output = generator(inputs)        # inputs: (B, 5, 64, 64)
    >>> output.ce.shape
    torch.Size([B, 1, 64, 64])
"""
from dataclasses import dataclass, field

import torch
import torch.nn as nn

try:
    from . import debug
    from .attention import MultiSequenceAttention
    from .config import AblationMode, TrainConfig
    from .constants import BN_EPS, INIT_STD, dwi_key, sequence_keys
    from .errors import NumericFault
    from .wdm import BValuePair, WeightedDifferenceModule

except ImportError:
    import debug
    from attention import MultiSequenceAttention
    from config import AblationMode, TrainConfig
    from constants import BN_EPS, INIT_STD, dwi_key, sequence_keys
    from errors import NumericFault
    from wdm import BValuePair, WeightedDifferenceModule


class ConvGroup(nn.Sequential):
    """Two 3x3 same-padded convs with strides 1 and 2, each with BN + act.

    Encoders use LeakyReLU(0.2), decoders ReLU. The second conv halves the
    spatial size of even inputs.
    """

    def __init__(self, in_channels: int, out_channels: int,
                 leaky: bool = True):
        def act():
            return nn.LeakyReLU(0.2) if leaky else nn.ReLU()

        super().__init__(
            nn.Conv2d(in_channels, out_channels, 3, stride=1, padding=1),
            nn.BatchNorm2d(out_channels, eps=BN_EPS),
            act(),
            nn.Conv2d(out_channels, out_channels, 3, stride=2, padding=1),
            nn.BatchNorm2d(out_channels, eps=BN_EPS),
            act(),
        )


class UpGroup(nn.Sequential):
    """Decoder group: stride-2 transposed 3x3 conv then a stride-1 3x3 conv."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__(
            nn.ConvTranspose2d(in_channels, out_channels, 3, stride=2,
                               padding=1, output_padding=1),
            nn.BatchNorm2d(out_channels, eps=BN_EPS),
            nn.ReLU(),
            nn.Conv2d(out_channels, out_channels, 3, stride=1, padding=1),
            nn.BatchNorm2d(out_channels, eps=BN_EPS),
            nn.ReLU(),
        )


class Encoder(nn.Module):
    """Stack of conv groups returning one feature map per scale."""

    def __init__(self, in_channels: int, channels: list[int]):
        super().__init__()
        widths = [in_channels] + list(channels)
        self.groups = nn.ModuleList(
            ConvGroup(c_in, c_out, leaky=True)
            for c_in, c_out in zip(widths, widths[1:])
        )


    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        features = []

        for group in self.groups:
            x = group(x)
            features.append(x)

        return features


class ReconstructionDecoder(nn.Module):
    """Decodes the deepest feature map of one encoder back to its input."""

    def __init__(self, channels: list[int]):
        super().__init__()
        widths = list(reversed(channels)) + [channels[0]]
        self.groups = nn.Sequential(*(
            UpGroup(c_in, c_out) for c_in, c_out in zip(widths, widths[1:])
        ))
        self.head = nn.Conv2d(channels[0], 1, 1)


    def forward(self, features: list[torch.Tensor]) -> torch.Tensor:
        return torch.sigmoid(self.head(self.groups(features[-1])))


class FusionBlock(nn.Module):
    """Fuses the per-sequence features of one scale.

    Args:
        channels: Width of every per-sequence map at this scale; also the
            output width.
        keys: Sequence keys in concatenation order.
        pairs: b-value pairs of the WDM (empty disables it).
        attention: Whether to gate the concatenation.
        reduction_ratio: Attention bottleneck divisor.
    """

    def __init__(self, channels: int, keys: tuple[str, ...],
                 pairs: list[BValuePair], attention: bool,
                 reduction_ratio: int = 8):
        super().__init__()
        self.keys = keys
        self.wdm = nn.ModuleList(
            WeightedDifferenceModule(channels, pair) for pair in pairs
        )
        concat_channels = channels * (len(keys) + len(pairs))
        self.attention = (
            MultiSequenceAttention(concat_channels, reduction_ratio)
            if attention else None
        )
        self.mix = nn.Conv2d(concat_channels, channels, 1)


    def forward(self, features: dict[str, torch.Tensor]) -> torch.Tensor:
        return fuse_scale(features, self)


def fuse_scale(features: dict[str, torch.Tensor],
               block: FusionBlock) -> torch.Tensor:
    """Concatenate, gate and mix the per-sequence maps of one scale.

    Raises:
        ValueError: If the sequence maps differ in shape or one is missing.
    """
    missing = [key for key in block.keys if key not in features]

    if missing:
        raise ValueError(f"missing sequence feature(s): {', '.join(missing)}")

    shapes = {key: tuple(features[key].shape) for key in block.keys}

    if len(set(shapes.values())) != 1:
        raise ValueError(f"sequence feature shapes differ: {shapes}")

    parts = [features[key] for key in block.keys]

    for module in block.wdm:
        parts.append(module(
            features[dwi_key(module.pair.b_l)],
            features[dwi_key(module.pair.b_h)],
        ))

    concat = torch.cat(parts, dim=1)

    if block.attention is not None:
        concat = block.attention(concat)

    return block.mix(concat)


class SynthesisDecoder(nn.Module):
    """U-Net decoder over the fused maps, one skip connection per scale."""

    def __init__(self, channels: list[int]):
        super().__init__()
        depth = len(channels)
        self.ups = nn.ModuleList()

        for i in range(depth - 2, -1, -1):
            c_in = channels[i + 1] if i == depth - 2 else 2 * channels[i + 1]
            self.ups.append(UpGroup(c_in, channels[i]))

        final_in = 2 * channels[0] if depth > 1 else channels[0]
        self.final = UpGroup(final_in, channels[0])
        self.head = nn.Conv2d(channels[0], 1, 1)


    def forward(self, fused: list[torch.Tensor],
                drop_skips: tuple[int, ...] = ()) -> torch.Tensor:
        """Decode; scales listed in ``drop_skips`` get a zero skip."""
        x = fused[-1]

        for up, scale in zip(self.ups, range(len(fused) - 2, -1, -1)):
            skip = fused[scale]

            if scale in drop_skips:
                skip = torch.zeros_like(skip)

            x = torch.cat([up(x), skip], dim=1)

        return torch.sigmoid(self.head(self.final(x)))


@dataclass
class GeneratorOutput:
    """Synthetic CE plus the intermediates of one forward pass."""
    ce: torch.Tensor
    reconstructions: dict[str, torch.Tensor] = field(default_factory=dict)
    fused: list[torch.Tensor] = field(default_factory=list)
    attention: list[torch.Tensor | None] = field(default_factory=list)


class HierarchicalFusionGenerator(nn.Module):
    """Ablation-aware generator G(d1, ..., dN, t1).

    Args:
        channels: Channel width per scale.
        b_values: DWI b-values in channel order.
        b_pairs: (b_l, b_h) pairs for the WDM.
        mode: Ablation mode.
        reduction_ratio: Attention bottleneck divisor.
        attention_scope: "per_scale" or "deepest".
    """

    def __init__(self, channels: list[int], b_values: list[int],
                 b_pairs: list[list[int]], mode: AblationMode = AblationMode.FULL,
                 reduction_ratio: int = 8, attention_scope: str = "per_scale"):
        super().__init__()
        self.channels = list(channels)
        self.keys = sequence_keys(b_values)
        self.mode = mode
        depth = len(channels)

        if mode.uses_hierarchy:
            self.encoders = nn.ModuleDict(
                {key: Encoder(1, channels) for key in self.keys}
            )
            self.input_encoder = None
        else:
            self.encoders = nn.ModuleDict()
            self.input_encoder = Encoder(len(self.keys), channels)

        self.reconstructors = nn.ModuleDict(
            {key: ReconstructionDecoder(channels) for key in self.keys}
            if mode.uses_reconstruction else {}
        )

        pairs = [BValuePair(*pair) for pair in b_pairs] if mode.uses_wdm else []

        self.fusion = nn.ModuleList()

        if mode.uses_hierarchy:
            for scale, width in enumerate(channels):
                attention = mode.uses_attention and (
                    attention_scope == "per_scale" or scale == depth - 1
                )
                self.fusion.append(FusionBlock(
                    width, self.keys, pairs, attention, reduction_ratio
                ))

        self.decoder = SynthesisDecoder(channels)


    @property
    def divisor(self) -> int:
        return 2 ** len(self.channels)


    def check_input(self, x: torch.Tensor) -> None:
        """Raise ValueError unless x is (B, K, S, S) with S divisible."""
        if x.dim() != 4 or x.shape[1] != len(self.keys):
            raise ValueError(
                f"expected (B, {len(self.keys)}, H, W) inputs, "
                f"got {tuple(x.shape)}"
            )

        height, width = x.shape[-2:]

        if height != width or height % self.divisor != 0:
            raise ValueError(
                f"input {height}x{width} must be square with a side "
                f"divisible by {self.divisor}"
            )


    def encode(self, x: torch.Tensor, branch: str) -> list[torch.Tensor]:
        """Per-scale features of one sequence, x shaped (B, 1, H, W)."""
        if branch not in self.encoders:
            raise ValueError(f"no encoder branch '{branch}' in {self.mode.value} mode")

        side = x.shape[-1]

        if x.shape[-2] != side or side % self.divisor != 0:
            raise ValueError(
                f"input {tuple(x.shape[-2:])} must be square with a side "
                f"divisible by {self.divisor}"
            )

        return self.encoders[branch](x)


    def reconstruct(self, features: list[torch.Tensor],
                    branch: str) -> torch.Tensor:
        if branch not in self.reconstructors:
            raise ValueError(
                f"no reconstruction branch '{branch}' in {self.mode.value} mode"
            )

        expected = len(self.channels)

        if len(features) != expected or features[-1].shape[1] != self.channels[-1]:
            raise ValueError(
                f"features do not match the encoder schedule {self.channels}"
            )

        return self.reconstructors[branch](features)


    def forward(self, x: torch.Tensor,
                drop_skips: tuple[int, ...] = ()) -> GeneratorOutput:
        self.check_input(x)
        output = GeneratorOutput(ce=x.new_empty(0))

        if self.input_encoder is not None:
            output.fused = self.input_encoder(x)
            output.attention = [None] * len(output.fused)
        else:
            per_sequence = {
                key: self.encode(x[:, i:i + 1], key)
                for i, key in enumerate(self.keys)
            }

            for key, features in per_sequence.items():
                if key in self.reconstructors:
                    output.reconstructions[key] = self.reconstruct(features, key)

            for scale, block in enumerate(self.fusion):
                fused = fuse_scale(
                    {key: feats[scale] for key, feats in per_sequence.items()},
                    block,
                )

                if not torch.isfinite(fused).all():
                    raise NumericFault(f"non-finite fused features at scale {scale + 1}")

                output.fused.append(fused)
                output.attention.append(
                    block.attention.last_weights
                    if block.attention is not None else None
                )

        output.ce = self.decoder(output.fused, drop_skips)

        return output


def reconstruction_loss(x: torch.Tensor, reconstruction: torch.Tensor) -> torch.Tensor:
    """Mean absolute error between an input and its reconstruction."""
    if x.shape != reconstruction.shape:
        raise ValueError(
            f"shape mismatch: {tuple(x.shape)} vs {tuple(reconstruction.shape)}"
        )

    return (x - reconstruction).abs().mean()


def total_reconstruction_loss(x: torch.Tensor, output: GeneratorOutput,
                              keys: tuple[str, ...]) -> torch.Tensor:
    """Sum of the per-sequence reconstruction losses (zero in IF mode)."""
    total = x.new_zeros(())

    for i, key in enumerate(keys):
        if key in output.reconstructions:
            total = total + reconstruction_loss(
                x[:, i:i + 1], output.reconstructions[key]
            )

    return total


def stack_inputs(t1, dwi) -> torch.Tensor:
    """Stack T1 and the DWIs (ascending b) into (B, K, H, W).

    Accepts (H, W) or (B, H, W) tensors or arrays.
    """
    volumes = [torch.as_tensor(t1)] + [torch.as_tensor(d) for d in dwi]
    shapes = {tuple(v.shape) for v in volumes}

    if len(shapes) != 1:
        raise ValueError(f"input volumes differ in shape: {sorted(shapes)}")

    stacked = torch.stack(volumes, dim=-3).float()

    return stacked.unsqueeze(0) if stacked.dim() == 3 else stacked


def run_generator(generator: HierarchicalFusionGenerator, t1, dwi) -> GeneratorOutput:
    """Eval-mode forward pass without gradients; returns every intermediate.

    Takes the same inputs as ``synthesize``.
    """
    x = stack_inputs(t1, dwi)
    parameter = next(generator.parameters())
    generator.eval()

    with torch.no_grad():
        return generator(x.to(parameter.dtype))


def synthesize(generator: HierarchicalFusionGenerator, t1, dwi) -> torch.Tensor:
    """Inference-mode synthesis of the CE image.

    Args:
        generator: The trained generator; switched to eval mode.
        t1: T1 volume, (H, W) or (B, H, W).
        dwi: DWI volumes in ascending b order, each shaped like ``t1``.

    Returns:
        Synthetic CE shaped like ``t1``, values in [0, 1].

    Raises:
        ValueError: On a shape mismatch.
        NumericFault: If a fused intermediate is non-finite (names the scale).
    """
    t1 = torch.as_tensor(t1)
    ce = run_generator(generator, t1, dwi).ce

    return ce[:, 0].reshape(t1.shape)


def init_weights(module: nn.Module, seed: int) -> nn.Module:
    """Truncated-normal (std 0.02) weights and zero biases, seeded."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)

        for layer in module.modules():
            if isinstance(layer, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                nn.init.trunc_normal_(layer.weight, 0.0, INIT_STD,
                                      -2 * INIT_STD, 2 * INIT_STD)

                if layer.bias is not None:
                    nn.init.zeros_(layer.bias)

            elif isinstance(layer, nn.BatchNorm2d):
                nn.init.ones_(layer.weight)
                nn.init.zeros_(layer.bias)

    return module


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def build_generator(config: TrainConfig) -> HierarchicalFusionGenerator:
    """Construct and initialize the generator described by ``config``."""
    generator = HierarchicalFusionGenerator(
        config.channels,
        config.b_values,
        config.b_pairs,
        config.ablation_mode,
        config.reduction_ratio,
        config.attention_scope,
    )
    init_weights(generator, config.seed)

    debug.internalinfo_log(
        "GEN", f"{config.ablation_mode.value} generator, scales "
        f"{config.channels}, {parameter_count(generator)} parameters"
    )

    return generator


__all__ = [
    'ConvGroup',
    'UpGroup',
    'Encoder',
    'ReconstructionDecoder',
    'FusionBlock',
    'fuse_scale',
    'SynthesisDecoder',
    'GeneratorOutput',
    'HierarchicalFusionGenerator',
    'reconstruction_loss',
    'total_reconstruction_loss',
    'stack_inputs',
    'run_generator',
    'synthesize',
    'init_weights',
    'parameter_count',
    'build_generator',
]
