"""Acquisition and model constants shared across cemri modules.

This module collects the fixed vocabulary of the synthesis problem: the
diffusion b-values of the DWI protocol, the consecutive b-value pairs fed to
the weighted difference module, the sequence keys used to address input
volumes, and the numeric clamps used by the ADC map and the adversarial
losses.

Sequences:
    SEQUENCE_T1: Key of the T1-weighted input
    dwi_key: Key of a DWI input for a given b-value ("b0", "b150", ...)

Protocol:
    B_VALUES: The four b-values in s/mm², ascending
    B_PAIRS: Consecutive (lower, higher) b-value pairs

Example:
    >>> from cemri.constants import B_VALUES, dwi_key, sequence_keys
    >>> [dwi_key(b) for b in B_VALUES]
    ['b0', 'b150', 'b800', 'b1500']
    >>> sequence_keys(B_VALUES)
    ('t1', 'b0', 'b150', 'b800', 'b1500')

Type Safety:
    ``literal_mode`` lists the accepted ablation mode names for annotations.
"""
from typing import Literal


B_VALUES: tuple[int, ...] = (0, 150, 800, 1500)
"""DWI b-values in s/mm², ascending."""

B_PAIRS: tuple[tuple[int, int], ...] = ((0, 150), (150, 800), (800, 1500))
"""Consecutive (b_l, b_h) pairs covering the b-spectrum."""

SEQUENCE_T1 = "t1"
"""Key of the T1-weighted input volume."""

ADC_EPS = 1e-8
"""Clamp applied to both signals before the logarithm of the ADC map."""

SCORE_EPS = 1e-7
"""Clamp applied to discriminator scores before any logarithm."""

BN_EPS = 1e-5
"""Batch-norm variance epsilon."""

INIT_STD = 0.02
"""Standard deviation of the truncated-normal weight initialization."""

DISC_STRIDE_FACTOR = 32
"""Spatial reduction of the five stride-2 discriminator layers (2**5)."""


def dwi_key(b_value: int) -> str:
    """Return the sequence key of the DWI acquired at ``b_value``."""
    return f"b{int(b_value)}"


def sequence_keys(b_values: tuple[int, ...] | list[int] = B_VALUES) -> tuple[str, ...]:
    """Return the input sequence keys in channel order: T1 first, then DWIs by b."""
    return (SEQUENCE_T1,) + tuple(dwi_key(b) for b in b_values)


literal_mode = Literal["IF", "HF", "HFWD", "FULL"]
"""Type annotation for valid ablation mode names."""


__all__ = [
    'B_VALUES',
    'B_PAIRS',
    'SEQUENCE_T1',
    'ADC_EPS',
    'SCORE_EPS',
    'BN_EPS',
    'INIT_STD',
    'DISC_STRIDE_FACTOR',
    'dwi_key',
    'sequence_keys',
    'literal_mode',
]
