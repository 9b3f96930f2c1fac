"""Central finite-difference checks of autograd gradients.

A loss closure is differentiated once with autograd; then a seeded random
sample of scalar entries across the given tensors is perturbed by +/- step
and the loss re-evaluated. Run it on float64 modules in eval mode so batch
norm is a fixed affine map.

Example:
    >>> module = WeightedDifferenceModule(4, BValuePair(0, 150)).double().eval()
    >>> report = finite_difference_check(
    ...     lambda: module(f_l, f_h).square().sum(),
    ...     dict(module.named_parameters()) | {"f_l": f_l, "f_h": f_h},
    ... )
    >>> report.passed
    True
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch


@dataclass
class GradSample:
    name: str
    index: int
    analytic: float
    numeric: float
    relative_error: float


@dataclass
class GradCheckReport:
    samples: list[GradSample] = field(default_factory=list)
    rtol: float = 1e-3


    @property
    def max_relative_error(self) -> float:
        return max((s.relative_error for s in self.samples), default=0.0)


    @property
    def passed(self) -> bool:
        return all(s.relative_error <= self.rtol for s in self.samples)


    def failures(self) -> list[GradSample]:
        return [s for s in self.samples if s.relative_error > self.rtol]


    def names(self) -> set[str]:
        return {s.name for s in self.samples}


def relative_error(analytic: float, numeric: float,
                   atol: float = 1e-9) -> float:
    """``|a - n| / max(|a|, |n|)``; 0 when both magnitudes are below atol."""
    scale = max(abs(analytic), abs(numeric))

    if scale < atol:
        return 0.0

    return abs(analytic - numeric) / scale


def finite_difference_check(
        loss_fn: Callable[[], torch.Tensor],
        named_tensors: dict[str, torch.Tensor],
        n_samples: int = 20,
        step: float = 1e-4,
        rtol: float = 1e-3,
        seed: int = 0) -> GradCheckReport:
    """Compare autograd and central-difference gradients.

    Args:
        loss_fn: Closure returning a scalar loss from the current tensors.
        named_tensors: Leaf tensors to check (parameters or inputs); each
            must have ``requires_grad`` set.
        n_samples: Number of scalar entries sampled across all tensors.
        step: Finite-difference step.
        rtol: Relative error bound of ``report.passed``.
        seed: Sampling seed.

    Raises:
        ValueError: If a tensor does not require grad or the loss is not
            a scalar.
    """
    names = list(named_tensors)
    tensors = [named_tensors[name] for name in names]

    for name, tensor in zip(names, tensors):
        if not tensor.requires_grad:
            raise ValueError(f"tensor '{name}' does not require grad")

    loss = loss_fn()

    if loss.dim() != 0:
        raise ValueError(f"loss must be a scalar, got shape {tuple(loss.shape)}")

    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    grads = [torch.zeros_like(t) if g is None else g
             for t, g in zip(tensors, grads)]

    sizes = [t.numel() for t in tensors]
    offsets = np.cumsum([0] + sizes)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(offsets[-1], size=min(n_samples, offsets[-1]),
                        replace=False)

    report = GradCheckReport(rtol=rtol)

    for flat in sorted(int(c) for c in chosen):
        which = int(np.searchsorted(offsets, flat, side="right") - 1)
        index = flat - int(offsets[which])
        tensor = tensors[which]
        entry = tensor.view(-1)

        with torch.no_grad():
            original = entry[index].item()
            entry[index] = original + step
            plus = float(loss_fn())
            entry[index] = original - step
            minus = float(loss_fn())
            entry[index] = original

        numeric = (plus - minus) / (2 * step)
        analytic = float(grads[which].reshape(-1)[index])

        report.samples.append(GradSample(
            name=names[which],
            index=index,
            analytic=analytic,
            numeric=numeric,
            relative_error=relative_error(analytic, numeric),
        ))

    return report


__all__ = [
    'GradSample',
    'GradCheckReport',
    'relative_error',
    'finite_difference_check',
]
