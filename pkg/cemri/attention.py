"""Multi-sequence channel attention.

The concatenated feature maps of all input sequences (and the weighted
difference outputs) are summarized by global average and global max
pooling. Both descriptors pass through ONE shared two-layer MLP, the two
results are summed and squashed by a sigmoid into one weight per channel,
and the weights rescale the concatenated maps:

    A = sigmoid(mlp(avgpool(F)) + mlp(maxpool(F)))
    F' = F * A

Classes:
    AttentionWeights: Per-channel weights in (0, 1), shape (..., C, 1, 1)
    SharedMLP: Bottleneck C -> C // r -> C with ReLU in between
    MultiSequenceAttention: SharedMLP plus gate, remembers its last weights

Functions:
    write_attention_weights: Per-scale weights of one case to TNSR files

Example:
    >>> mlp = SharedMLP(channels=16, reduction_ratio=8)
    >>> weights = channel_attention(features, mlp)
    >>> gated = apply_attention(features, weights)
"""
import os
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn

try:
    from . import debug
    from .tensorio import write_tensor

except ImportError:
    import debug
    from tensorio import write_tensor


@dataclass
class AttentionWeights:
    """Channel weights shaped (C, 1, 1), or (B, C, 1, 1) for batches."""
    a_s: torch.Tensor


    @property
    def channels(self) -> int:
        return self.a_s.shape[-3]


class SharedMLP(nn.Module):
    """The fully-connected map shared by both pooled descriptors.

    Args:
        channels: Input and output width C.
        reduction_ratio: Bottleneck divisor r; ``C // r`` must be >= 1.

    Raises:
        ValueError: If the hidden width would be zero.
    """

    def __init__(self, channels: int, reduction_ratio: int = 8):
        super().__init__()

        if reduction_ratio < 1:
            raise ValueError(
                f"reduction_ratio must be positive, got {reduction_ratio}"
            )

        hidden = channels // reduction_ratio

        if hidden < 1:
            raise ValueError(
                f"hidden width {channels} // {reduction_ratio} is zero"
            )

        self.channels = channels
        self.hidden = hidden
        self.fc1 = nn.Linear(channels, hidden)
        self.act = nn.ReLU()
        self.fc2 = nn.Linear(hidden, channels)


    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


def channel_attention(f: torch.Tensor, mlp: SharedMLP) -> AttentionWeights:
    """Per-channel attention weights of a (C, H, W) or (B, C, H, W) map.

    Raises:
        ValueError: If the channel count of ``f`` differs from the MLP width
            or the map has no spatial extent.
    """
    if f.dim() not in (3, 4):
        raise ValueError(f"expected (C,H,W) or (B,C,H,W), got {tuple(f.shape)}")

    channels, height, width = f.shape[-3:]

    if channels != mlp.channels:
        raise ValueError(
            f"feature map has {channels} channel(s), mlp expects {mlp.channels}"
        )

    if height < 1 or width < 1:
        raise ValueError(f"empty spatial extent {tuple(f.shape)}")

    avg = f.mean(dim=(-2, -1))
    peak = f.amax(dim=(-2, -1))
    a_s = torch.sigmoid(mlp(avg) + mlp(peak))

    return AttentionWeights(a_s=a_s[..., None, None])


def apply_attention(f: torch.Tensor, a: AttentionWeights) -> torch.Tensor:
    """Rescale every channel of ``f`` by its weight (broadcast over H, W).

    Raises:
        ValueError: On a channel count mismatch.
    """
    if f.shape[-3] != a.channels:
        raise ValueError(
            f"feature map has {f.shape[-3]} channel(s), "
            f"weights have {a.channels}"
        )

    return f * a.a_s


class MultiSequenceAttention(nn.Module):
    """Attention gate over concatenated multi-sequence features.

    ``forward`` returns the gated map; the weights of the most recent call
    are kept, detached, in ``last_weights`` for export.
    """

    def __init__(self, channels: int, reduction_ratio: int = 8):
        super().__init__()
        self.mlp = SharedMLP(channels, reduction_ratio)
        self.last_weights: torch.Tensor | None = None

        debug.internaldebug_log(
            "ATTN", f"{channels} channel(s), hidden {self.mlp.hidden}"
        )


    def forward(self, f: torch.Tensor) -> torch.Tensor:
        weights = channel_attention(f, self.mlp)
        self.last_weights = weights.a_s.detach()

        return apply_attention(f, weights)


def write_attention_weights(weights: list[torch.Tensor | None],
                            directory: str | os.PathLike,
                            stem: str) -> list[Path]:
    """Write the attention weights of one case, one TNSR file per scale.

    Args:
        weights: Per-scale weights of a single case, each (C, 1, 1) or
            (1, C, 1, 1); ``None`` marks a scale without attention.
        directory: Output directory, created if missing.
        stem: File name prefix, usually the case id.

    Returns:
        Paths of ``<stem>_attention_s<k>.tnsr`` (k counted from 1), each
        holding a (C,) vector; scales without attention are skipped.

    Raises:
        ValueError: If a tensor holds weights of more than one case.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    for scale, a_s in enumerate(weights, start=1):
        if a_s is None:
            continue

        if a_s.dim() == 4 and a_s.shape[0] != 1:
            raise ValueError(
                f"scale {scale}: expected the weights of one case, "
                f"got shape {tuple(a_s.shape)}"
            )

        path = out / f"{stem}_attention_s{scale}.tnsr"
        write_tensor(path, a_s.detach().cpu().reshape(-1).numpy())
        paths.append(path)

    debug.internaldebug_log("ATTN", f"{stem}: {len(paths)} attention file(s) in {out}")

    return paths


__all__ = [
    'AttentionWeights',
    'SharedMLP',
    'channel_attention',
    'apply_attention',
    'MultiSequenceAttention',
    'write_attention_weights',
]
