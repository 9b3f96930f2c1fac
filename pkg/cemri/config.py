"""Training configuration and ablation modes.

``TrainConfig`` holds every hyperparameter of a training run together with
the architecture knobs (scale schedule, b-value pairs, attention scope,
discriminator ladder). It serializes to and from JSON losslessly and
rejects unknown keys, so a config file is an exact record of a run.

Ablation modes form a ladder, each adding one capability:

    IF    input-level concatenation, single encoder, no other module
    HF    + per-sequence encoders, reconstruction branches, hierarchical fusion
    HFWD  + weighted difference module
    FULL  + multi-sequence attention

Example:
    >>> config = TrainConfig(epochs=2, ablation_mode=AblationMode.HF)
    >>> save_config(config, "run/config.json")
    >>> load_config("run/config.json") == config
    True
"""
import hashlib
import json
import os
from dataclasses import dataclass, field, fields, replace
from enum import Enum

try:
    from .constants import B_VALUES, B_PAIRS, DISC_STRIDE_FACTOR, literal_mode
    from .errors import ConfigError

except ImportError:
    from constants import B_VALUES, B_PAIRS, DISC_STRIDE_FACTOR, literal_mode
    from errors import ConfigError


class AblationMode(Enum):
    """Generator variants of the ablation ladder, in ladder order."""
    IF = "IF"
    HF = "HF"
    HFWD = "HFWD"
    FULL = "FULL"


    @classmethod
    def from_string(cls, name: literal_mode | str) -> 'AblationMode':
        """Parse a mode name; accepts "IF-Net" style and "Proposed" aliases.

        Raises:
            ConfigError: If the name matches no mode.
        """
        key = name.strip().upper()

        if key.endswith("-NET"):
            key = key[:-4]

        if key == "PROPOSED":
            key = "FULL"

        try:
            return cls(key)

        except ValueError:
            raise ConfigError(
                f"unknown ablation mode '{name}' "
                f"(expected one of {', '.join(m.value for m in cls)})"
            ) from None


    @property
    def uses_hierarchy(self) -> bool:
        return self is not AblationMode.IF


    @property
    def uses_reconstruction(self) -> bool:
        return self is not AblationMode.IF


    @property
    def uses_wdm(self) -> bool:
        return self in (AblationMode.HFWD, AblationMode.FULL)


    @property
    def uses_attention(self) -> bool:
        return self is AblationMode.FULL


ATTENTION_SCOPES = ("per_scale", "deepest")


@dataclass
class TrainConfig:
    """Hyperparameters and architecture knobs of one training run.

    Attributes:
        lambda_l1: Weight of the masked l1 term in the generator objective.
        reconstruction_weight: Weight of the summed reconstruction l1 terms.
        mask_weight: Extra weight of breast-mask voxels in the l1 term.
        batch_size: Cases per optimization step.
        epochs: Number of passes over the training split.
        lr0: Initial learning rate.
        lr_decay: Multiplicative decay applied every ``lr_decay_every`` epochs.
        lr_decay_every: Decay period in epochs.
        beta1: Adam first-moment coefficient.
        beta2: Adam second-moment coefficient.
        seed: Seed for initialization, data order and the train/test split.
        ablation_mode: Generator variant.
        image_size: Side of the square input slices.
        channels: Channel width per fusion scale; its length is the depth.
        b_values: DWI b-values in channel order.
        b_pairs: (b_l, b_h) pairs fed to the weighted difference module.
        reduction_ratio: Bottleneck divisor of the attention MLP.
        attention_scope: "per_scale" or "deepest".
        disc_filters: Filter counts of the five discriminator layers.
        non_saturating: Use ``-log D`` instead of ``log(1 - D)`` for G.
        test_fraction: Share of cases held out for testing.
        hotspot_threshold: Difference-image threshold of the lesion overlap.
        enhancement_weight: Extra l1 weight of voxels whose real enhancement
            (ce - t1) exceeds ``hotspot_threshold``; 0 turns it off.
    """
    lambda_l1: float = 100.0
    reconstruction_weight: float = 5.0
    mask_weight: float = 100.0
    batch_size: int = 4
    epochs: int = 30
    lr0: float = 1e-3
    lr_decay: float = 0.8
    lr_decay_every: int = 5
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    ablation_mode: AblationMode = AblationMode.FULL
    image_size: int = 64
    channels: list[int] = field(default_factory=lambda: [32, 64, 128, 256])
    b_values: list[int] = field(default_factory=lambda: list(B_VALUES))
    b_pairs: list[list[int]] = field(
        default_factory=lambda: [list(pair) for pair in B_PAIRS]
    )
    reduction_ratio: int = 8
    attention_scope: str = "per_scale"
    disc_filters: list[int] = field(
        default_factory=lambda: [32, 64, 128, 256, 512]
    )
    non_saturating: bool = False
    test_fraction: float = 0.2
    hotspot_threshold: float = 0.15
    enhancement_weight: float = 10.0


    @property
    def scales(self) -> int:
        return len(self.channels)


    def validate(self) -> 'TrainConfig':
        """Check every field; return self for chaining.

        Raises:
            ConfigError: Naming the offending field.
        """
        for name in ("lambda_l1", "reconstruction_weight", "mask_weight",
                     "lr0", "hotspot_threshold", "enhancement_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")

        for name in ("batch_size", "epochs", "lr_decay_every",
                     "reduction_ratio"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")

        if not 0 < self.lr_decay <= 1:
            raise ConfigError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")

        for name in ("beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in [0, 1), got {getattr(self, name)}")

        if not 0 < self.test_fraction < 1:
            raise ConfigError(
                f"test_fraction must lie in (0, 1), got {self.test_fraction}"
            )

        if not isinstance(self.ablation_mode, AblationMode):
            raise ConfigError(f"ablation_mode is invalid: {self.ablation_mode!r}")

        if not self.channels or any(c < 1 for c in self.channels):
            raise ConfigError(f"channels must be positive, got {self.channels}")

        if self.image_size % DISC_STRIDE_FACTOR != 0:
            raise ConfigError(
                f"image_size {self.image_size} is not divisible by "
                f"{DISC_STRIDE_FACTOR} (discriminator stride)"
            )

        if self.image_size % (2 ** self.scales) != 0:
            raise ConfigError(
                f"image_size {self.image_size} is not divisible by "
                f"2**{self.scales} (generator scales)"
            )

        if (len(self.b_values) < 2 or self.b_values[0] < 0
                or any(a >= b for a, b in zip(self.b_values, self.b_values[1:]))):
            raise ConfigError(
                f"b_values must be non-negative and ascending, got {self.b_values}"
            )

        for pair in self.b_pairs:
            if (len(pair) != 2 or pair[0] not in self.b_values
                    or pair[1] not in self.b_values or pair[1] <= pair[0]):
                raise ConfigError(
                    f"b_pairs entry {pair} must be two ascending members "
                    f"of b_values {self.b_values}"
                )

        if self.ablation_mode.uses_wdm and not self.b_pairs:
            raise ConfigError("b_pairs is empty but the mode uses the WDM")

        if self.attention_scope not in ATTENTION_SCOPES:
            raise ConfigError(
                f"attention_scope must be one of {ATTENTION_SCOPES}, "
                f"got '{self.attention_scope}'"
            )

        if len(self.disc_filters) != 5 or any(c < 1 for c in self.disc_filters):
            raise ConfigError(
                f"disc_filters must list five positive counts, got {self.disc_filters}"
            )

        return self


    def to_dict(self) -> dict:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["ablation_mode"] = self.ablation_mode.value
        data["channels"] = list(self.channels)
        data["b_values"] = list(self.b_values)
        data["b_pairs"] = [list(pair) for pair in self.b_pairs]
        data["disc_filters"] = list(self.disc_filters)

        return data


    @classmethod
    def from_dict(cls, data: dict) -> 'TrainConfig':
        """Build a validated config; unknown keys are rejected by name."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)

        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")

        values = dict(data)

        if "ablation_mode" in values and not isinstance(
                values["ablation_mode"], AblationMode):
            values["ablation_mode"] = AblationMode.from_string(
                str(values["ablation_mode"])
            )

        if "b_pairs" in values:
            values["b_pairs"] = [list(pair) for pair in values["b_pairs"]]

        return cls(**values).validate()


    def with_mode(self, mode: AblationMode) -> 'TrainConfig':
        return replace(self, ablation_mode=mode)


def load_config(path: str | os.PathLike) -> TrainConfig:
    """Read a JSON config file.

    Raises:
        ConfigError: Malformed JSON, unknown key or invalid value.
        FileNotFoundError: If the file does not exist.
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)

        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: malformed JSON ({e})") from e

    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")

    return TrainConfig.from_dict(data)


def save_config(config: TrainConfig, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2)


def config_hash(config: TrainConfig) -> str:
    """sha256 of the canonical JSON form."""
    canonical = json.dumps(config.to_dict(), sort_keys=True,
                           separators=(",", ":"))

    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


__all__ = [
    'AblationMode',
    'ATTENTION_SCOPES',
    'TrainConfig',
    'load_config',
    'save_config',
    'config_hash',
]
