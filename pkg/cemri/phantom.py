"""Synthetic breast-like multi-sequence MRI phantoms.

This module generates single-slice cases with analytically known diffusion
physics and contrast-enhancement ground truth, standing in for a clinical
cohort. Every case bundles four DWI volumes (one per b-value), a T1-weighted
volume, the contrast-enhanced target, the breast mask, the lesion mask and
the true ADC map.

Signal model:
    - breast region: smooth ellipse-like mask with low-order boundary ripple
    - tissue: smooth S0 texture, ADC drawn inside ``tissue_adc_range``
    - lesions: discs strictly inside the mask, diffusion restricted
      (ADC inside ``lesion_adc_range``), brighter S0
    - DWI: mono-exponential ``S0 * exp(-b * ADC)`` then Rician noise; the
      four volumes share one normalization factor so ADC is preserved
    - T1: affine map of S0 inside the mask plus Rician noise
    - CE: T1 plus a per-lesion enhancement gain, clipped to [0, 1]

Datasets are written as one JSON manifest plus one TNSR file per volume.

Example:
    >>> spec = PhantomSpec(image_size=64, noise_sigma=0.0, seed=1)
    >>> cases = generate_dataset(spec, 10)
    >>> write_dataset(cases, "./phantoms", spec)
    >>> again = read_dataset("./phantoms")
    >>> all(a.equals(b) for a, b in zip(cases, again))
    True
"""
import json
import os
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

try:
    from . import debug
    from . import tensorio
    from .constants import B_VALUES
    from .errors import ConfigError, DataError

except ImportError:
    import debug
    import tensorio
    from constants import B_VALUES
    from errors import ConfigError, DataError


DATASET_FORMAT = "cemri-dataset"
DATASET_VERSION = 1
MANIFEST_NAME = "manifest.json"

# lesion placement attempts before a lesion is skipped
_PLACEMENT_TRIES = 200


@dataclass(frozen=True)
class PhantomSpec:
    """Generation parameters of a phantom dataset.

    Attributes:
        image_size: Pixels per side.
        n_lesions: Inclusive (min, max) lesion count per case, within 0..3.
        lesion_radius_range: Lesion disc radius range in pixels.
        tissue_adc_range: Healthy tissue ADC range in mm²/s.
        lesion_adc_range: Lesion ADC range in mm²/s; must lie strictly below
            ``tissue_adc_range``.
        enhancement_gain_range: Additive CE gain inside lesions.
        noise_sigma: Rician noise scale (0 disables noise).
        seed: Dataset seed from which per-case seeds are derived.
        b_values: Ascending DWI b-values in s/mm².
    """
    image_size: int = 64
    n_lesions: tuple[int, int] = (1, 3)
    lesion_radius_range: tuple[float, float] = (3.0, 6.0)
    tissue_adc_range: tuple[float, float] = (0.0012, 0.0022)
    lesion_adc_range: tuple[float, float] = (0.0006, 0.0011)
    enhancement_gain_range: tuple[float, float] = (0.3, 0.8)
    noise_sigma: float = 0.01
    seed: int = 0
    b_values: tuple[int, ...] = B_VALUES


    def validate(self) -> None:
        """Raise ``ConfigError`` naming the first violated invariant."""
        if self.image_size < 16:
            raise ConfigError(
                f"image_size must be >= 16, got {self.image_size}"
            )

        ranges = {
            'n_lesions': self.n_lesions,
            'lesion_radius_range': self.lesion_radius_range,
            'tissue_adc_range': self.tissue_adc_range,
            'lesion_adc_range': self.lesion_adc_range,
            'enhancement_gain_range': self.enhancement_gain_range,
        }

        for name, (low, high) in ranges.items():
            if low > high:
                raise ConfigError(f"{name} is empty: [{low}, {high}]")

        if self.n_lesions[0] < 0 or self.n_lesions[1] > 3:
            raise ConfigError(
                f"n_lesions must lie within [0, 3], got {list(self.n_lesions)}"
            )

        if self.lesion_radius_range[0] <= 0:
            raise ConfigError("lesion_radius_range must be positive")

        if self.lesion_adc_range[0] < 0:
            raise ConfigError("lesion_adc_range must be non-negative")

        if self.lesion_adc_range[1] >= self.tissue_adc_range[0]:
            raise ConfigError(
                "lesion_adc_range upper bound "
                f"{self.lesion_adc_range[1]} must be below tissue_adc_range "
                f"lower bound {self.tissue_adc_range[0]}"
            )

        if self.noise_sigma < 0:
            raise ConfigError(
                f"noise_sigma must be >= 0, got {self.noise_sigma}"
            )

        b_values = list(self.b_values)

        if (len(b_values) < 2 or b_values[0] < 0
                or any(a >= b for a, b in zip(b_values, b_values[1:]))):
            raise ConfigError(
                f"b_values must be non-negative and ascending, got {b_values}"
            )


    def to_dict(self) -> dict:
        data = asdict(self)

        return {key: list(value) if isinstance(value, tuple) else value
                for key, value in data.items()}


    @classmethod
    def from_dict(cls, data: dict) -> 'PhantomSpec':
        unknown = set(data) - set(cls.__dataclass_fields__)

        if unknown:
            raise ConfigError(
                f"unknown phantom spec key(s): {', '.join(sorted(unknown))}"
            )

        values = {key: tuple(value) if isinstance(value, list) else value
                  for key, value in data.items()}

        return cls(**values)


@dataclass(eq=False)
class CaseSample:
    """One subject: four DWIs, T1, CE target, masks and the true ADC map.

    All volumes are float32 arrays of identical shape. ``mask`` and
    ``lesion_mask`` hold 0.0/1.0.
    """
    case_id: str
    dwi: dict[int, np.ndarray]
    t1: np.ndarray
    ce: np.ndarray
    mask: np.ndarray
    adc_truth: np.ndarray
    lesion_mask: np.ndarray
    lesion_count: int = 0


    @property
    def shape(self) -> tuple[int, ...]:
        return self.t1.shape


    @property
    def b_values(self) -> tuple[int, ...]:
        return tuple(sorted(self.dwi))


    def volumes(self) -> dict[str, np.ndarray]:
        """Return every volume keyed by its dataset file stem."""
        named = {f"dwi_b{b}": self.dwi[b] for b in self.b_values}
        named.update(
            t1=self.t1,
            ce=self.ce,
            mask=self.mask,
            adc_truth=self.adc_truth,
            lesion_mask=self.lesion_mask,
        )

        return named


    def validate(self) -> None:
        """Raise ``DataError`` if the volumes do not share one shape."""
        shapes = {name: vol.shape for name, vol in self.volumes().items()}

        if len(set(shapes.values())) != 1:
            detail = ", ".join(f"{k}={v}" for k, v in shapes.items())

            raise DataError(
                f"case '{self.case_id}' has mismatched shapes: {detail}"
            )


    def equals(self, other: 'CaseSample') -> bool:
        """Bit-exact comparison of ids, counts and every volume."""
        if (self.case_id != other.case_id
                or self.lesion_count != other.lesion_count
                or self.b_values != other.b_values):
            return False

        mine, theirs = self.volumes(), other.volumes()

        return all(
            mine[name].dtype == theirs[name].dtype
            and np.array_equal(mine[name], theirs[name])
            for name in mine
        )


def dwi_signal(s0, adc, b):
    """Mono-exponential diffusion signal ``s0 * exp(-b * adc)``.

    Works elementwise on scalars and arrays. Requires s0, adc, b >= 0.

    Example:
        >>> round(float(dwi_signal(1.0, 0.001, 1500)), 5)
        0.22313
    """
    return s0 * np.exp(-b * np.asarray(adc, dtype=np.float64))


def _smooth_field(xx: np.ndarray, yy: np.ndarray,
                  rng: np.random.Generator, waves: int = 4) -> np.ndarray:
    """Low-frequency random texture rescaled to [0, 1]."""
    texture = np.zeros_like(xx)

    for _ in range(waves):
        fx, fy = rng.uniform(-1.5, 1.5, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amplitude = rng.uniform(0.5, 1.0)
        texture += amplitude * np.cos(np.pi * (fx * xx + fy * yy) + phase)

    low, high = texture.min(), texture.max()

    if high - low <= 0:
        return np.zeros_like(texture)

    return (texture - low) / (high - low)


def _breast_mask(xx: np.ndarray, yy: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    """Ellipse-like region with a smooth low-order boundary ripple."""
    cx, cy = rng.uniform(-0.08, 0.08, size=2)
    semi_x = rng.uniform(0.62, 0.82)
    semi_y = rng.uniform(0.48, 0.68)
    ripple = rng.uniform(0.0, 0.05)
    lobes = int(rng.integers(2, 5))
    phase = rng.uniform(0.0, 2.0 * np.pi)

    theta = np.arctan2(yy - cy, xx - cx)
    radius = ((xx - cx) / semi_x) ** 2 + ((yy - cy) / semi_y) ** 2
    boundary = (1.0 + ripple * np.sin(lobes * theta + phase)) ** 2

    return radius <= boundary


def _place_lesion(mask: np.ndarray, radius: float,
                  rng: np.random.Generator) -> np.ndarray | None:
    """Return a lesion disc lying strictly inside ``mask``, or None."""
    rows, cols = np.indices(mask.shape)
    candidates = np.argwhere(mask)

    if len(candidates) == 0:
        return None

    for _ in range(_PLACEMENT_TRIES):
        cy, cx = candidates[rng.integers(len(candidates))]
        distance = (rows - cy) ** 2 + (cols - cx) ** 2
        guard = distance <= (radius + 1.5) ** 2

        # the guard ring keeps one pixel of tissue around every lesion
        if np.all(mask[guard]):
            return distance <= radius ** 2

    return None


def _rician(signal: np.ndarray, sigma: float,
            rng: np.random.Generator) -> np.ndarray:
    """Magnitude of the signal corrupted by complex Gaussian noise."""
    if sigma == 0:
        return signal

    real = signal + rng.normal(0.0, sigma, size=signal.shape)
    imag = rng.normal(0.0, sigma, size=signal.shape)

    return np.sqrt(real ** 2 + imag ** 2)


def generate_case(spec: PhantomSpec, seed: int,
                  case_id: str | None = None) -> CaseSample:
    """Generate one phantom case, deterministically in (spec, seed).

    Args:
        spec: Generation parameters (validated first).
        seed: Case seed.
        case_id: Identifier (default: ``case_<seed>``).

    Returns:
        A CaseSample whose DWI stack is non-increasing in b inside the mask
        when ``spec.noise_sigma`` is 0.

    Raises:
        ConfigError: If ``spec`` violates its invariants.
    """
    spec.validate()

    rng = np.random.default_rng(seed)
    n = spec.image_size
    coords = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    yy, xx = np.meshgrid(coords, coords, indexing="ij")

    mask = _breast_mask(xx, yy, rng)
    texture = _smooth_field(xx, yy, rng)
    adc_texture = _smooth_field(xx, yy, rng)

    adc_low, adc_high = spec.tissue_adc_range
    s0 = np.where(mask, 0.5 + 0.3 * texture, 0.0)
    adc = np.where(mask, adc_low + (adc_high - adc_low) * adc_texture, 0.0)

    lesion_mask = np.zeros((n, n), dtype=bool)
    gain = np.zeros((n, n))
    wanted = int(rng.integers(spec.n_lesions[0], spec.n_lesions[1] + 1))
    placed = 0

    for _ in range(wanted):
        radius = rng.uniform(*spec.lesion_radius_range)
        disc = _place_lesion(mask, radius, rng)

        if disc is None:
            debug.internalwarning_log(
                "PHANTOM", f"seed {seed}: lesion of radius {radius:.2f} "
                "did not fit inside the mask, skipped"
            )
            continue

        s0[disc] = rng.uniform(0.75, 0.95)
        adc[disc] = rng.uniform(*spec.lesion_adc_range)
        gain[disc] = rng.uniform(*spec.enhancement_gain_range)
        lesion_mask |= disc
        placed += 1

    noisy = {
        b: _rician(dwi_signal(s0, adc, b), spec.noise_sigma, rng)
        for b in spec.b_values
    }

    # one factor for the whole stack keeps every signal ratio intact
    scale = max(float(volume.max()) for volume in noisy.values())
    scale = scale if scale > 0 else 1.0
    dwi = {b: (volume / scale).astype(np.float32)
           for b, volume in noisy.items()}

    t1 = np.where(mask, 0.2 + 0.5 * s0, 0.0)
    t1 = np.clip(_rician(t1, spec.noise_sigma, rng), 0.0, 1.0)
    ce = np.clip(t1 + gain, 0.0, 1.0)

    sample = CaseSample(
        case_id=case_id if case_id is not None else f"case_{seed}",
        dwi=dwi,
        t1=t1.astype(np.float32),
        ce=ce.astype(np.float32),
        mask=mask.astype(np.float32),
        adc_truth=adc.astype(np.float32),
        lesion_mask=lesion_mask.astype(np.float32),
        lesion_count=placed,
    )

    debug.internaldebug_log(
        "PHANTOM", f"{sample.case_id}: {placed} lesion(s), "
        f"{int(mask.sum())} breast voxels"
    )

    return sample


def case_seeds(spec: PhantomSpec, count: int) -> list[int]:
    """Derive ``count`` per-case seeds from ``spec.seed``."""
    state = np.random.SeedSequence(spec.seed).generate_state(count)

    return [int(value) for value in state]


def generate_dataset(spec: PhantomSpec, count: int) -> list[CaseSample]:
    """Generate ``count`` cases named ``case_0000``, ``case_0001``, ..."""
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")

    cases = [
        generate_case(spec, seed, case_id=f"case_{index:04d}")
        for index, seed in enumerate(case_seeds(spec, count))
    ]

    debug.runinfo_log(
        "PHANTOM", f"generated {count} case(s) of size {spec.image_size}, "
        f"{sum(c.lesion_count for c in cases)} lesion(s) in total"
    )

    return cases


def write_dataset(cases: list[CaseSample], path: str | os.PathLike,
                  spec: PhantomSpec | None = None) -> dict:
    """Write cases as TNSR files plus a JSON manifest.

    Layout: ``<path>/manifest.json`` and ``<path>/<case_id>/<volume>.tnsr``.

    Returns:
        The manifest dictionary that was written.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    entries = []
    b_values = list(cases[0].b_values) if cases else list(B_VALUES)

    for case in cases:
        case.validate()
        case_dir = root / case.case_id
        case_dir.mkdir(exist_ok=True)
        files = {}

        for name, volume in case.volumes().items():
            tensorio.write_tensor(case_dir / f"{name}.tnsr", volume)
            files[name] = f"{case.case_id}/{name}.tnsr"

        entries.append({
            "case_id": case.case_id,
            "shape": list(case.shape),
            "lesion_count": case.lesion_count,
            "files": files,
        })

    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "b_values": b_values,
        "spec": spec.to_dict() if spec is not None else None,
        "cases": entries,
    }

    temp_path = root / (MANIFEST_NAME + ".tmp")

    with open(temp_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)

    os.replace(temp_path, root / MANIFEST_NAME)

    debug.runinfo_log("DATASET", f"wrote {len(cases)} case(s) to {root}")

    return manifest


def read_manifest(path: str | os.PathLike) -> dict:
    """Load and structurally validate a dataset manifest."""
    manifest_path = Path(path) / MANIFEST_NAME

    if not manifest_path.is_file():
        raise DataError(f"dataset manifest not found: {manifest_path}")

    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)

    except json.JSONDecodeError as e:
        raise DataError(f"{manifest_path}: malformed JSON ({e})") from e

    if manifest.get("format") != DATASET_FORMAT:
        raise DataError(
            f"{manifest_path}: not a cemri dataset manifest "
            f"(format={manifest.get('format')!r})"
        )

    for key in ("b_values", "cases"):
        if key not in manifest:
            raise DataError(f"{manifest_path}: missing key '{key}'")

    for entry in manifest["cases"]:
        if "case_id" not in entry or "files" not in entry:
            raise DataError(
                f"{manifest_path}: case entry without 'case_id' or 'files'"
            )

    return manifest


def read_dataset_spec(path: str | os.PathLike) -> PhantomSpec | None:
    """Return the PhantomSpec recorded in a dataset manifest, if any."""
    spec = read_manifest(path).get("spec")

    return PhantomSpec.from_dict(spec) if spec is not None else None


def read_dataset(path: str | os.PathLike) -> list[CaseSample]:
    """Read every case listed in the manifest at ``path``.

    Raises:
        DataError: Missing manifest or file, malformed manifest, or a case
            whose volumes do not share one shape.
        TensorFormatError: A truncated or malformed TNSR file.
    """
    root = Path(path)
    manifest = read_manifest(root)
    b_values = [int(b) for b in manifest["b_values"]]
    cases = []

    for entry in manifest["cases"]:
        files = entry["files"]
        volumes = {}

        for name in [f"dwi_b{b}" for b in b_values] + [
                "t1", "ce", "mask", "adc_truth", "lesion_mask"]:
            if name not in files:
                raise DataError(
                    f"case '{entry['case_id']}' lists no file for '{name}'"
                )

            file_path = root / files[name]

            if not file_path.is_file():
                raise DataError(f"missing dataset file: {file_path}")

            volumes[name] = tensorio.read_tensor(file_path)

        case = CaseSample(
            case_id=entry["case_id"],
            dwi={b: volumes[f"dwi_b{b}"] for b in b_values},
            t1=volumes["t1"],
            ce=volumes["ce"],
            mask=volumes["mask"],
            adc_truth=volumes["adc_truth"],
            lesion_mask=volumes["lesion_mask"],
            lesion_count=int(entry.get("lesion_count", 0)),
        )
        case.validate()
        cases.append(case)

    debug.internalinfo_log("DATASET", f"read {len(cases)} case(s) from {root}")

    return cases


__all__ = [
    'PhantomSpec',
    'CaseSample',
    'dwi_signal',
    'generate_case',
    'case_seeds',
    'generate_dataset',
    'write_dataset',
    'read_manifest',
    'read_dataset_spec',
    'read_dataset',
]
