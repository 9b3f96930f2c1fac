"""Image quality metrics, difference images and lesion overlap.

All metrics take two same-shaped volumes ``y`` (reference) and ``g``
(synthetic) and an optional binary mask restricting the statistics to the
masked voxels. They are computed in float64 with numpy.

    ssim   global-statistics structural similarity (windowed variant via
           scikit-image behind ``windowed=True``)
    psnr   10 log10(peak^2 / MSE), peak taken over both images; +inf when
           the images are identical
    nmse   ||y - g||^2 / ||y||^2

Evaluation reports are written as one CSV row per case plus a JSON summary
of mean and standard deviation per metric.

Example:
    >>> report = evaluate_case("case_0007", ce, synthetic, mask=breast)
    >>> summarize([report])["ssim"]["mean"]
"""
import csv
import json
import math
import os
from dataclasses import dataclass, asdict

import numpy as np
from skimage.metrics import structural_similarity


DEFAULT_K1 = 0.01
DEFAULT_K2 = 0.03


@dataclass
class MetricsReport:
    """Metrics of one case."""
    case_id: str
    ssim: float
    psnr: float
    nmse: float
    masked: bool
    dice: float | None = None


def _as_float(array) -> np.ndarray:
    return np.asarray(array, dtype=np.float64)


def _scoped(y, g, mask=None) -> tuple[np.ndarray, np.ndarray]:
    """Flattened in-scope voxels of both images."""
    y, g = _as_float(y), _as_float(g)

    if y.shape != g.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {g.shape}")

    if mask is None:
        return y.ravel(), g.ravel()

    mask = np.asarray(mask)

    if mask.shape != y.shape:
        raise ValueError(f"mask shape {mask.shape} does not match {y.shape}")

    selected = mask.astype(bool)

    if not selected.any():
        raise ValueError("mask selects no voxels")

    return y[selected], g[selected]


def ssim(y, g, c1: float | None = None, c2: float | None = None,
         data_range: float = 1.0, mask=None, windowed: bool = False) -> float:
    """Structural similarity of ``y`` and ``g``.

    The global form uses the means, population variances and covariance of
    all in-scope voxels:

        ((2 mu_y mu_g + c1)(2 cov + c2)) / ((mu_y^2 + mu_g^2 + c1)(var_y + var_g + c2))

    Args:
        y, g: Same-shaped images.
        c1, c2: Stabilizers, default (0.01 L)^2 and (0.03 L)^2.
        data_range: Dynamic range L.
        mask: Optional binary mask.
        windowed: Use scikit-image's 7x7 sliding-window SSIM; with a mask
            the local SSIM map is averaged over the masked voxels.

    Raises:
        ValueError: On shape mismatch, an empty mask or non-positive c1/c2.
    """
    c1 = (DEFAULT_K1 * data_range) ** 2 if c1 is None else c1
    c2 = (DEFAULT_K2 * data_range) ** 2 if c2 is None else c2

    if c1 <= 0 or c2 <= 0:
        raise ValueError(f"c1 and c2 must be positive, got {c1}, {c2}")

    if windowed:
        return _windowed_ssim(y, g, data_range, mask)

    y, g = _scoped(y, g, mask)

    mu_y, mu_g = y.mean(), g.mean()
    dy, dg = y - mu_y, g - mu_g
    var_y = np.mean(dy * dy)
    var_g = np.mean(dg * dg)
    cov = np.mean(dy * dg)

    numerator = (2 * mu_y * mu_g + c1) * (2 * cov + c2)
    denominator = (mu_y * mu_y + mu_g * mu_g + c1) * (var_y + var_g + c2)

    return float(numerator / denominator)


def _windowed_ssim(y, g, data_range: float, mask=None) -> float:
    y, g = _as_float(y), _as_float(g)

    if y.shape != g.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {g.shape}")

    _, local = structural_similarity(y, g, data_range=data_range, full=True)

    if mask is None:
        return float(local.mean())

    selected = np.asarray(mask).astype(bool)

    if not selected.any():
        raise ValueError("mask selects no voxels")

    return float(local[selected].mean())


def psnr(y, g, mask=None) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical images."""
    y, g = _scoped(y, g, mask)
    mse = np.mean((y - g) ** 2)

    if mse == 0:
        return math.inf

    peak = max(y.max(), g.max())

    return float(10.0 * np.log10(peak * peak / mse))


def nmse(y, g, mask=None) -> float:
    """Normalized mean squared error ``||y - g||^2 / ||y||^2``.

    Raises:
        ValueError: If the reference is all zero within scope.
    """
    y, g = _scoped(y, g, mask)
    energy = np.sum(y * y)

    if energy == 0:
        raise ValueError("reference image is all zero, NMSE is undefined")

    return float(np.sum((y - g) ** 2) / energy)


def difference_image(t1, ce) -> np.ndarray:
    """Enhancement map ``max(ce - t1, 0)``."""
    t1, ce = np.asarray(t1), np.asarray(ce)

    if t1.shape != ce.shape:
        raise ValueError(f"shape mismatch: {t1.shape} vs {ce.shape}")

    return np.clip(ce - t1, 0, None)


def hotspot_mask(difference, threshold: float = 0.15, mask=None) -> np.ndarray:
    """Voxels of ``difference`` above ``threshold``, optionally within ``mask``."""
    hotspots = np.asarray(difference) > threshold

    if mask is not None:
        hotspots &= np.asarray(mask).astype(bool)

    return hotspots


def dice(a, b) -> float:
    """Dice overlap of two binary masks (1.0 when both are empty)."""
    a, b = np.asarray(a).astype(bool), np.asarray(b).astype(bool)

    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")

    total = a.sum() + b.sum()

    if total == 0:
        return 1.0

    return float(2.0 * np.logical_and(a, b).sum() / total)


def evaluate_case(case_id: str, y, g, mask=None, t1=None, lesion_mask=None,
                  hotspot_threshold: float = 0.15,
                  windowed: bool = False) -> MetricsReport:
    """All metrics of one case.

    The Dice entry is filled when both ``t1`` and ``lesion_mask`` are given:
    it compares the thresholded synthetic difference image with the lesions,
    restricted to ``mask`` when one is given.
    """
    report = MetricsReport(
        case_id=case_id,
        ssim=ssim(y, g, mask=mask, windowed=windowed),
        psnr=psnr(y, g, mask=mask),
        nmse=nmse(y, g, mask=mask),
        masked=mask is not None,
    )

    if t1 is not None and lesion_mask is not None:
        hotspots = hotspot_mask(difference_image(t1, g), hotspot_threshold, mask)
        report.dice = dice(hotspots, lesion_mask)

    return report


def summarize(reports: list[MetricsReport]) -> dict:
    """Mean, population std and count per metric.

    Infinite PSNR values are left out of the PSNR statistics and counted
    under ``infinite``.
    """
    summary = {}

    for name in ("ssim", "psnr", "nmse", "dice"):
        values = [getattr(r, name) for r in reports
                  if getattr(r, name) is not None]
        finite = [v for v in values if math.isfinite(v)]

        summary[name] = {
            "mean": float(np.mean(finite)) if finite else math.nan,
            "std": float(np.std(finite)) if finite else math.nan,
            "count": len(finite),
        }

        if len(finite) != len(values):
            summary[name]["infinite"] = len(values) - len(finite)

    summary["cases"] = len(reports)

    return summary


def write_report_csv(reports: list[MetricsReport],
                     path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=["case_id", "ssim", "psnr", "nmse", "masked", "dice"]
        )
        writer.writeheader()

        for report in reports:
            row = asdict(report)
            row["dice"] = "" if report.dice is None else report.dice
            writer.writerow(row)


def write_summary_json(summary: dict, path: str | os.PathLike) -> None:
    # json cannot encode NaN/inf portably
    def clean(value):
        if isinstance(value, dict):
            return {k: clean(v) for k, v in value.items()}

        if isinstance(value, float) and not math.isfinite(value):
            return None

        return value

    with open(path, "w", encoding="utf-8") as f:
        json.dump(clean(summary), f, indent=2)


__all__ = [
    'MetricsReport',
    'ssim',
    'psnr',
    'nmse',
    'difference_image',
    'hotspot_mask',
    'dice',
    'evaluate_case',
    'summarize',
    'write_report_csv',
    'write_summary_json',
]
