"""Conditional discriminator, adversarial objectives and the training log.

The discriminator sees the conditioning inputs (T1 and every DWI) stacked
with a candidate CE image and returns a patch score map in (0, 1). Both the
real and the fake branch are conditioned on the same inputs.

Objectives (scores clamped to [1e-7, 1 - 1e-7]):

    generator:      mean log(1 - D(x, G(x))) + lambda_l1 * masked_l1(y, G(x))
    discriminator:  -(mean log D(x, y) + mean log(1 - D(x, G(x))))

The masked l1 term weighs breast-mask voxels ``mask_weight`` times more than
background voxels. Voxels whose real enhancement exceeds the hotspot
threshold can be weighed further through ``enhancement_emphasis``. With
``non_saturating`` the generator's adversarial term becomes
``-mean log D(x, G(x))``.
"""
import csv
import math
import os
from dataclasses import dataclass

import torch
import torch.nn as nn

try:
    from . import debug
    from .config import TrainConfig
    from .constants import BN_EPS, DISC_STRIDE_FACTOR, SCORE_EPS
    from .errors import NumericFault
    from .generator import init_weights, parameter_count

except ImportError:
    import debug
    from config import TrainConfig
    from constants import BN_EPS, DISC_STRIDE_FACTOR, SCORE_EPS
    from errors import NumericFault
    from generator import init_weights, parameter_count


class Discriminator(nn.Module):
    """Five stride-2 3x3 conv layers with BN and LeakyReLU, then a sigmoid
    score projection.

    Args:
        in_channels: Conditioning channels plus one candidate channel.
        filters: Filter counts of the five layers.
    """

    def __init__(self, in_channels: int,
                 filters: list[int] = (32, 64, 128, 256, 512)):
        super().__init__()
        layers = []
        width = in_channels

        for count in filters:
            layers += [
                nn.Conv2d(width, count, 3, stride=2, padding=1),
                nn.BatchNorm2d(count, eps=BN_EPS),
                nn.LeakyReLU(0.2),
            ]
            width = count

        self.features = nn.Sequential(*layers)
        self.projection = nn.Conv2d(width, 1, 1)


    def forward(self, conditioning: torch.Tensor,
                candidate: torch.Tensor) -> torch.Tensor:
        return discriminate(self, conditioning, candidate)


def discriminate(discriminator: Discriminator, conditioning: torch.Tensor,
                 candidate: torch.Tensor) -> torch.Tensor:
    """Score map of ``candidate`` given the conditioning inputs.

    Args:
        conditioning: (B, K, H, W) stacked T1 and DWIs.
        candidate: (B, 1, H, W) real or synthetic CE.

    Returns:
        (B, 1, H/32, W/32) scores in (0, 1).

    Raises:
        ValueError: On a shape mismatch or a side not divisible by 32.
    """
    if (conditioning.shape[0] != candidate.shape[0]
            or conditioning.shape[-2:] != candidate.shape[-2:]
            or candidate.shape[1] != 1):
        raise ValueError(
            f"conditioning {tuple(conditioning.shape)} and candidate "
            f"{tuple(candidate.shape)} do not match"
        )

    height, width = candidate.shape[-2:]

    if height % DISC_STRIDE_FACTOR or width % DISC_STRIDE_FACTOR:
        raise ValueError(
            f"input {height}x{width} is not divisible by {DISC_STRIDE_FACTOR}"
        )

    x = torch.cat([conditioning, candidate], dim=1)

    return torch.sigmoid(
        discriminator.projection(discriminator.features(x))
    )


def build_discriminator(config: TrainConfig) -> Discriminator:
    discriminator = Discriminator(len(config.b_values) + 2, config.disc_filters)
    init_weights(discriminator, config.seed + 1)

    debug.internalinfo_log(
        "DISC", f"filters {config.disc_filters}, "
        f"{parameter_count(discriminator)} parameters"
    )

    return discriminator


def masked_l1(y: torch.Tensor, g: torch.Tensor, mask: torch.Tensor,
              weight: float = 100.0,
              emphasis: torch.Tensor | None = None) -> torch.Tensor:
    """Mean of ``|y - g| * (1 + (weight - 1) * mask) * (1 + emphasis)``.

    ``emphasis`` is an optional non-negative per-voxel factor shaped like
    ``y``; without it the last factor is 1.
    """
    if y.shape != g.shape or y.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: y {tuple(y.shape)}, g {tuple(g.shape)}, "
            f"mask {tuple(mask.shape)}"
        )

    weights = 1.0 + (weight - 1.0) * mask

    if emphasis is not None:
        if emphasis.shape != y.shape:
            raise ValueError(
                f"emphasis shape {tuple(emphasis.shape)} does not match "
                f"{tuple(y.shape)}"
            )

        weights = weights * (1.0 + emphasis)

    return ((y - g).abs() * weights).mean()


def enhancement_emphasis(y: torch.Tensor, t1: torch.Tensor,
                         threshold: float, weight: float) -> torch.Tensor:
    """``weight`` where the real enhancement ``y - t1`` exceeds ``threshold``, else 0."""
    if y.shape != t1.shape:
        raise ValueError(f"shape mismatch: y {tuple(y.shape)}, t1 {tuple(t1.shape)}")

    return weight * ((y - t1) > threshold).to(y.dtype)


@dataclass
class LossReport:
    """Loss terms of one step; tensors keep their graph until ``as_row``."""
    adversarial_g: torch.Tensor
    l1_term: torch.Tensor
    total_g: torch.Tensor
    loss_d: torch.Tensor | None = None
    reconstruction: torch.Tensor | None = None
    epoch: int = 0
    step: int = 0


    def as_row(self) -> dict:
        def scalar(value):
            return float(value) if value is not None else float("nan")

        return {
            "step": self.step,
            "epoch": self.epoch,
            "adversarial_g": scalar(self.adversarial_g),
            "l1_term": scalar(self.l1_term),
            "reconstruction": scalar(self.reconstruction),
            "total_g": scalar(self.total_g),
            "loss_d": scalar(self.loss_d),
        }


def _clamped(scores: torch.Tensor) -> torch.Tensor:
    return scores.clamp(SCORE_EPS, 1.0 - SCORE_EPS)


def generator_loss(scores: torch.Tensor, y: torch.Tensor, g: torch.Tensor,
                   mask: torch.Tensor, lambda_l1: float = 100.0,
                   mask_weight: float = 100.0,
                   non_saturating: bool = False,
                   emphasis: torch.Tensor | None = None) -> LossReport:
    """Generator objective on the fake scores of one batch.

    Raises:
        NumericFault: If any term is non-finite after clamping.
    """
    scores = _clamped(scores)

    if non_saturating:
        adversarial = -torch.log(scores).mean()
    else:
        adversarial = torch.log(1.0 - scores).mean()

    l1_term = masked_l1(y, g, mask, mask_weight, emphasis)
    total = adversarial + lambda_l1 * l1_term

    if not (torch.isfinite(adversarial) and torch.isfinite(l1_term)
            and torch.isfinite(total)):
        raise NumericFault(
            f"non-finite generator loss: adversarial={float(adversarial)}, "
            f"l1={float(l1_term)}"
        )

    return LossReport(adversarial_g=adversarial, l1_term=l1_term, total_g=total)


def discriminator_loss(scores_real: torch.Tensor,
                       scores_fake: torch.Tensor) -> torch.Tensor:
    """Negated discriminator objective (minimized)."""
    if scores_real.shape != scores_fake.shape:
        raise ValueError(
            f"score maps differ: {tuple(scores_real.shape)} "
            f"vs {tuple(scores_fake.shape)}"
        )

    loss = -(torch.log(_clamped(scores_real)).mean()
             + torch.log(1.0 - _clamped(scores_fake)).mean())

    if not torch.isfinite(loss):
        raise NumericFault(f"non-finite discriminator loss {float(loss)}")

    return loss


class TrainingLog:
    """CSV log of per-step loss reports.

    Rows are appended and flushed one at a time; an existing file is
    replaced when the log is opened.
    """
    COLUMNS = ("step", "epoch", "adversarial_g", "l1_term",
               "reconstruction", "total_g", "loss_d")


    def __init__(self, path: str | os.PathLike):
        self.path = path
        self._file = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.DictWriter(self._file, fieldnames=self.COLUMNS)
        self._writer.writeheader()
        self.rows = 0


    def append(self, report: LossReport) -> None:
        row = report.as_row()
        self._writer.writerow(row)
        self._file.flush()
        self.rows += 1

        if any(math.isnan(row[k]) for k in ("total_g", "loss_d")):
            debug.runwarning_log("TRAIN", f"step {report.step}: NaN in loss row")


    def close(self) -> None:
        if not self._file.closed:
            self._file.close()


    def __enter__(self) -> 'TrainingLog':
        return self


    def __exit__(self, *exc) -> None:
        self.close()


def read_training_log(path: str | os.PathLike) -> list[dict]:
    """Rows of a training log with numeric columns parsed."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))

    return [
        {key: (int(value) if key in ("step", "epoch") else float(value))
         for key, value in row.items()}
        for row in rows
    ]


__all__ = [
    'Discriminator',
    'discriminate',
    'build_discriminator',
    'masked_l1',
    'enhancement_emphasis',
    'LossReport',
    'generator_loss',
    'discriminator_loss',
    'TrainingLog',
    'read_training_log',
]
