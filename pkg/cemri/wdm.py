"""ADC maps and the weighted difference module.

The apparent diffusion coefficient of a pair of DWI acquisitions is

    ADC = [ln(S_l) - ln(S_h)] / (b_h - b_l)

The weighted difference module is its learned analogue on feature maps:
each of the two acquisitions passes through its own small network standing
in for the logarithm, the outputs are subtracted and the difference is
divided by the raw b-value gap in s/mm²:

    F_dwi = [net_l(f_l) - net_h(f_h)] / (b_h - b_l)

Classes:
    BValuePair: Validated (b_l, b_h) pair
    ADCMap: ADC values plus the pair they were computed from
    DifferenceBranch: 3x3 conv + batch norm + LeakyReLU(0.2), channel-preserving
    WeightedDifferenceModule: One b-value pair with its two branches

Example:
    >>> pair = BValuePair(0, 800)
    >>> adc = adc_map(dwi[0], dwi[800], pair)
    >>> wdm = WeightedDifferenceModule(channels=32, pair=pair)
    >>> features = wdm(f_b0, f_b800)
"""
from dataclasses import dataclass
from typing import Callable

import torch
import torch.nn as nn

try:
    from . import debug
    from .constants import ADC_EPS, BN_EPS

except ImportError:
    import debug
    from constants import ADC_EPS, BN_EPS


@dataclass(frozen=True)
class BValuePair:
    """A (lower, higher) b-value pair in s/mm² with ``b_h > b_l >= 0``."""
    b_l: float
    b_h: float


    def __post_init__(self):
        if self.b_l < 0 or self.b_h <= self.b_l:
            raise ValueError(
                f"invalid b-value pair ({self.b_l}, {self.b_h}): "
                "need b_h > b_l >= 0"
            )


    @property
    def span(self) -> float:
        """The b-value gap ``b_h - b_l``."""
        return float(self.b_h - self.b_l)


    def __str__(self) -> str:
        return f"({self.b_l:g},{self.b_h:g})"


@dataclass
class ADCMap:
    """ADC values in mm²/s, same shape as the source volumes."""
    values: torch.Tensor
    pair: BValuePair


def adc_map(s_l, s_h, pair: BValuePair, eps: float = ADC_EPS) -> ADCMap:
    """Compute the ADC map of two DWI volumes.

    Both signals are clamped at ``eps`` before the logarithm so background
    voxels stay finite.

    Args:
        s_l: Signal at the lower b-value (tensor or array-like).
        s_h: Signal at the higher b-value, same shape.
        pair: The b-values of the two signals.
        eps: Positive clamp.

    Returns:
        ADCMap with values ``[ln(max(s_l,eps)) - ln(max(s_h,eps))] / span``.

    Raises:
        ValueError: On shape mismatch or non-positive ``eps``.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")

    s_l = torch.as_tensor(s_l)
    s_h = torch.as_tensor(s_h)

    if s_l.shape != s_h.shape:
        raise ValueError(
            f"signal shapes differ: {tuple(s_l.shape)} vs {tuple(s_h.shape)}"
        )

    if not torch.is_floating_point(s_l):
        s_l = s_l.double()

    s_h = s_h.to(s_l.dtype)

    values = (
        torch.log(torch.clamp(s_l, min=eps))
        - torch.log(torch.clamp(s_h, min=eps))
    ) / pair.span

    return ADCMap(values=values, pair=pair)


def weighted_difference(
        f_l: torch.Tensor,
        f_h: torch.Tensor,
        pair: BValuePair,
        net_l: Callable[[torch.Tensor], torch.Tensor],
        net_h: Callable[[torch.Tensor], torch.Tensor]) -> torch.Tensor:
    """Learned difference of two DWI feature maps.

    Returns ``[net_l(f_l) - net_h(f_h)] / (b_h - b_l)``; differentiable in
    both inputs and both networks' parameters.

    Raises:
        ValueError: If the inputs or the network outputs differ in shape.
    """
    if f_l.shape != f_h.shape:
        raise ValueError(
            f"feature shapes differ: {tuple(f_l.shape)} vs {tuple(f_h.shape)}"
        )

    g_l = net_l(f_l)
    g_h = net_h(f_h)

    if g_l.shape != f_l.shape or g_h.shape != f_h.shape:
        raise ValueError(
            f"networks must preserve shape {tuple(f_l.shape)}, got "
            f"{tuple(g_l.shape)} and {tuple(g_h.shape)}"
        )

    return (g_l - g_h) / pair.span


class DifferenceBranch(nn.Module):
    """Learned stand-in for the logarithm: conv 3x3, batch norm, LeakyReLU.

    Accepts (B, C, H, W) or a single (C, H, W) feature map.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm = nn.BatchNorm2d(channels, eps=BN_EPS)
        self.act = nn.LeakyReLU(0.2)


    def forward(self, x: torch.Tensor) -> torch.Tensor:
        unbatched = x.dim() == 3

        if unbatched:
            x = x.unsqueeze(0)

        y = self.act(self.norm(self.conv(x)))

        return y.squeeze(0) if unbatched else y


class WeightedDifferenceModule(nn.Module):
    """Weighted difference of one b-value pair with its own two branches."""

    def __init__(self, channels: int, pair: BValuePair):
        super().__init__()
        self.pair = pair
        self.net_l = DifferenceBranch(channels)
        self.net_h = DifferenceBranch(channels)

        debug.internaldebug_log(
            "WDM", f"pair {pair} with {channels} channel(s)"
        )


    def forward(self, f_l: torch.Tensor, f_h: torch.Tensor) -> torch.Tensor:
        return weighted_difference(f_l, f_h, self.pair, self.net_l, self.net_h)


def adc_pairs(b_values) -> list[BValuePair]:
    """Consecutive pairs of an ascending b-value list."""
    b_values = sorted(b_values)

    return [BValuePair(a, b) for a, b in zip(b_values, b_values[1:])]


def is_finite_map(adc: ADCMap) -> bool:
    return bool(torch.isfinite(adc.values).all())


__all__ = [
    'BValuePair',
    'ADCMap',
    'adc_map',
    'weighted_difference',
    'DifferenceBranch',
    'WeightedDifferenceModule',
    'adc_pairs',
    'is_finite_map',
]
