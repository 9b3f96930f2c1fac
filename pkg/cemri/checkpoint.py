"""Checkpoint files: a JSON manifest plus one TNSR blob per tensor.

Layout of a checkpoint directory::

    manifest.json
    generator/<name>.tnsr       one per generator state entry
    discriminator/<name>.tnsr   one per discriminator state entry

The manifest records the epoch, the full training config and its hash, and
for every tensor its file, shape and original dtype. Batch-norm running
statistics are included; integer counters are stored as float32 and cast
back when loaded. A checkpoint is written into ``<dir>.tmp`` and renamed
into place, so an interrupted write never replaces a good checkpoint.
"""
import json
import os
import shutil
from dataclasses import dataclass
from pathlib import Path

import torch

try:
    from . import debug
    from . import tensorio
    from .adversarial import Discriminator, build_discriminator
    from .config import TrainConfig, config_hash
    from .errors import DataError
    from .generator import HierarchicalFusionGenerator, build_generator

except ImportError:
    import debug
    import tensorio
    from adversarial import Discriminator, build_discriminator
    from config import TrainConfig, config_hash
    from errors import DataError
    from generator import HierarchicalFusionGenerator, build_generator


CHECKPOINT_FORMAT = "cemri-checkpoint"
CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest.json"


@dataclass
class Checkpoint:
    path: Path
    config: TrainConfig
    epoch: int
    generator_state: dict[str, torch.Tensor]
    discriminator_state: dict[str, torch.Tensor]


def _dtype_name(dtype: torch.dtype) -> str:
    return str(dtype).removeprefix("torch.")


def _write_state(state: dict[str, torch.Tensor], directory: Path,
                 prefix: str) -> list[dict]:
    directory.mkdir(parents=True)
    entries = []

    for name, tensor in state.items():
        relative = f"{prefix}/{name}.tnsr"
        tensorio.write_tensor(
            directory / f"{name}.tnsr",
            tensor.detach().cpu().float().numpy(),
        )
        entries.append({
            "name": name,
            "file": relative,
            "shape": list(tensor.shape),
            "dtype": _dtype_name(tensor.dtype),
        })

    return entries


def save_checkpoint(directory: str | os.PathLike,
                    generator: HierarchicalFusionGenerator,
                    discriminator: Discriminator,
                    config: TrainConfig, epoch: int) -> Path:
    """Write a checkpoint atomically; an existing one at ``directory`` is replaced.

    Returns:
        The checkpoint directory.
    """
    target = Path(directory)
    staging = target.with_name(target.name + ".tmp")

    if staging.exists():
        shutil.rmtree(staging)

    staging.mkdir(parents=True)

    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "epoch": epoch,
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "generator": _write_state(
            generator.state_dict(), staging / "generator", "generator"
        ),
        "discriminator": _write_state(
            discriminator.state_dict(), staging / "discriminator",
            "discriminator"
        ),
    }

    with open(staging / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)

    if target.exists():
        shutil.rmtree(target)

    os.replace(staging, target)

    debug.runinfo_log("CKPT", f"epoch {epoch} checkpoint written to {target}")

    return target


def _read_state(root: Path, entries: list[dict]) -> dict[str, torch.Tensor]:
    state = {}

    for entry in entries:
        file_path = root / entry["file"]

        if not file_path.is_file():
            raise DataError(f"checkpoint tensor missing: {file_path}")

        array = tensorio.read_tensor(file_path)

        if list(array.shape) != list(entry["shape"]):
            raise DataError(
                f"{file_path}: shape {list(array.shape)} does not match "
                f"manifest shape {entry['shape']}"
            )

        dtype = getattr(torch, entry.get("dtype", "float32"))
        state[entry["name"]] = torch.from_numpy(array.copy()).to(dtype)

    return state


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    """Read a checkpoint directory.

    Raises:
        DataError: Missing or malformed manifest, config hash mismatch,
            missing or mis-shaped tensor.
    """
    root = Path(path)
    manifest_path = root / MANIFEST_NAME

    if not manifest_path.is_file():
        raise DataError(f"checkpoint manifest not found: {manifest_path}")

    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)

    except json.JSONDecodeError as e:
        raise DataError(f"{manifest_path}: malformed JSON ({e})") from e

    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{manifest_path}: not a cemri checkpoint")

    config = TrainConfig.from_dict(manifest["config"])

    if config_hash(config) != manifest.get("config_hash"):
        raise DataError(f"{manifest_path}: config hash mismatch")

    checkpoint = Checkpoint(
        path=root,
        config=config,
        epoch=int(manifest["epoch"]),
        generator_state=_read_state(root, manifest["generator"]),
        discriminator_state=_read_state(root, manifest["discriminator"]),
    )

    debug.internalinfo_log(
        "CKPT", f"loaded epoch {checkpoint.epoch} from {root}"
    )

    return checkpoint


def build_models(checkpoint: Checkpoint) -> tuple[HierarchicalFusionGenerator, Discriminator]:
    """Generator and discriminator restored from ``checkpoint``, in eval mode.

    Raises:
        DataError: If the stored state does not fit the config's architecture.
    """
    generator = build_generator(checkpoint.config)
    discriminator = build_discriminator(checkpoint.config)

    for model, state, label in (
            (generator, checkpoint.generator_state, "generator"),
            (discriminator, checkpoint.discriminator_state, "discriminator")):
        try:
            model.load_state_dict(state, strict=True)

        except RuntimeError as e:
            raise DataError(
                f"{checkpoint.path}: {label} state does not match config ({e})"
            ) from e

        model.eval()

    return generator, discriminator


__all__ = [
    'Checkpoint',
    'save_checkpoint',
    'load_checkpoint',
    'build_models',
]
