"""Grayscale PNG panels of cases and syntheses.

Every panel is windowed to its own min-max range; a constant image is
written black.
"""
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

try:
    from . import debug
    from .metrics import difference_image
    from .phantom import CaseSample

except ImportError:
    import debug
    from metrics import difference_image
    from phantom import CaseSample


def window(image) -> np.ndarray:
    """Min-max window to [0, 1]; constant images map to zeros."""
    image = np.asarray(image, dtype=np.float64)
    low, high = image.min(), image.max()

    if high <= low:
        return np.zeros_like(image)

    return (image - low) / (high - low)


def save_png(path: str | os.PathLike, image) -> Path:
    path = Path(path)
    plt.imsave(path, window(image), cmap="gray", vmin=0.0, vmax=1.0)

    return path


def case_panels(case: CaseSample, synthetic) -> dict[str, np.ndarray]:
    """Panels in display order: t1, each DWI, real/synthetic CE and differences."""
    synthetic = np.asarray(synthetic)
    panels = {"t1": case.t1}

    for b in case.b_values:
        panels[f"dwi_b{b}"] = case.dwi[b]

    panels["ce_real"] = case.ce
    panels["ce_synthetic"] = synthetic
    panels["difference_real"] = difference_image(case.t1, case.ce)
    panels["difference_synthetic"] = difference_image(case.t1, synthetic)

    return panels


def write_panels(case: CaseSample, synthetic,
                 out_dir: str | os.PathLike) -> list[Path]:
    """Write one PNG per panel to ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    paths = [
        save_png(out / f"{case.case_id}_{name}.png", image)
        for name, image in case_panels(case, synthetic).items()
    ]

    debug.runinfo_log("CLI", f"{case.case_id}: {len(paths)} panel(s) in {out}")

    return paths


__all__ = [
    'window',
    'save_png',
    'case_panels',
    'write_panels',
]
