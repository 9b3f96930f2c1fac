"""Training, evaluation and ablation orchestration.

One training run owns its generator and discriminator. Every batch runs a
single generator forward pass and one discriminator pass each on the real
and the synthetic CE; both objectives are built from those same scores, the
gradients of both are taken, then the discriminator and the generator are
stepped in that order.

Runs are deterministic in ``config.seed``: weights are initialized from
it, the data order of each epoch comes from ``(seed, epoch)`` and the
train/test split depends only on the seed and the case ids.

Output layout of ``train``::

    <out>/config.json
    <out>/training_log.csv
    <out>/checkpoints/epoch_0001/ ...

Example:
    >>> train_cases, test_cases = split_dataset(cases, seed=0)
    >>> result = train(train_cases, TrainConfig(epochs=2), "runs/full")
    >>> evaluation = evaluate(result.checkpoints[-1], test_cases)
    >>> evaluation.summary["ssim"]["mean"]
"""
import csv
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

try:
    from . import debug
    from .adversarial import (
        Discriminator, TrainingLog, build_discriminator,
        discriminator_loss, enhancement_emphasis, generator_loss, LossReport,
    )
    from .checkpoint import Checkpoint, build_models, load_checkpoint, save_checkpoint
    from .config import AblationMode, TrainConfig, save_config
    from .errors import DataError, NumericFault
    from .generator import (
        HierarchicalFusionGenerator, build_generator, total_reconstruction_loss,
    )
    from .metrics import MetricsReport, evaluate_case, summarize, write_report_csv, write_summary_json
    from .phantom import CaseSample

except ImportError:
    import debug
    from adversarial import (
        Discriminator, TrainingLog, build_discriminator,
        discriminator_loss, enhancement_emphasis, generator_loss, LossReport,
    )
    from checkpoint import Checkpoint, build_models, load_checkpoint, save_checkpoint
    from config import AblationMode, TrainConfig, save_config
    from errors import DataError, NumericFault
    from generator import (
        HierarchicalFusionGenerator, build_generator, total_reconstruction_loss,
    )
    from metrics import MetricsReport, evaluate_case, summarize, write_report_csv, write_summary_json
    from phantom import CaseSample


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Learning rate of a 0-based epoch: ``lr0 * lr_decay ** (epoch // every)``.

    Rounded to 15 significant digits so decayed rates compare exactly
    against their decimal values.
    """
    value = config.lr0 * config.lr_decay ** (epoch // config.lr_decay_every)

    return float(f"{value:.15g}")


def _split_key(seed: int, case_id: str) -> str:
    return hashlib.sha256(f"{seed}:{case_id}".encode("utf-8")).hexdigest()


def split_dataset(cases: list[CaseSample], seed: int,
                  test_fraction: float = 0.2) -> tuple[list[CaseSample], list[CaseSample]]:
    """Deterministic train/test split.

    Cases are ranked by a hash of ``(seed, case_id)``, so the split never
    depends on the order of ``cases``. At least one case lands on each side
    when there are two or more cases.
    """
    ranked = sorted(cases, key=lambda c: _split_key(seed, c.case_id))
    n_test = int(round(len(ranked) * test_fraction))

    if len(ranked) >= 2:
        n_test = min(max(n_test, 1), len(ranked) - 1)
    else:
        n_test = 0

    test = sorted(ranked[:n_test], key=lambda c: c.case_id)
    train = sorted(ranked[n_test:], key=lambda c: c.case_id)

    return train, test


def split_hash(train: list[CaseSample], test: list[CaseSample]) -> str:
    """sha256 over the sorted case ids of both sides of a split."""
    text = "train:" + ",".join(sorted(c.case_id for c in train))
    text += "|test:" + ",".join(sorted(c.case_id for c in test))

    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def check_compatible(cases: list[CaseSample], config: TrainConfig) -> None:
    """Raise DataError unless every case matches the config's geometry."""
    expected = (config.image_size, config.image_size)

    for case in cases:
        if case.shape != expected:
            raise DataError(
                f"case '{case.case_id}' has shape {case.shape}, "
                f"config expects {expected}"
            )

        if list(case.b_values) != list(config.b_values):
            raise DataError(
                f"case '{case.case_id}' has b-values {list(case.b_values)}, "
                f"config expects {list(config.b_values)}"
            )


def stack_cases(cases: list[CaseSample]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Batch tensors ``(inputs, ce, mask)`` shaped (B,K,H,W), (B,1,H,W), (B,1,H,W)."""
    inputs = np.stack([
        np.stack([case.t1] + [case.dwi[b] for b in case.b_values])
        for case in cases
    ])
    ce = np.stack([case.ce for case in cases])[:, None]
    mask = np.stack([case.mask for case in cases])[:, None]

    return (torch.from_numpy(inputs.astype(np.float32)),
            torch.from_numpy(ce.astype(np.float32)),
            torch.from_numpy(mask.astype(np.float32)))


def epoch_order(config: TrainConfig, epoch: int, count: int) -> np.ndarray:
    return np.random.default_rng([config.seed, epoch]).permutation(count)


def train_step(generator: HierarchicalFusionGenerator,
               discriminator: Discriminator,
               optimizer_g: torch.optim.Optimizer,
               optimizer_d: torch.optim.Optimizer,
               x: torch.Tensor, y: torch.Tensor, mask: torch.Tensor,
               config: TrainConfig) -> LossReport:
    """One discriminator update followed by one generator update."""
    output = generator(x)
    fake = output.ce

    scores_real = discriminator(x, y)
    scores_fake = discriminator(x, fake)

    emphasis = None

    if config.enhancement_weight > 0:
        emphasis = enhancement_emphasis(
            y, x[:, 0:1], config.hotspot_threshold, config.enhancement_weight
        )

    report = generator_loss(
        scores_fake, y, fake, mask,
        lambda_l1=config.lambda_l1,
        mask_weight=config.mask_weight,
        non_saturating=config.non_saturating,
        emphasis=emphasis,
    )
    reconstruction = total_reconstruction_loss(x, output, generator.keys)

    if not torch.isfinite(reconstruction):
        raise NumericFault(f"non-finite reconstruction loss {float(reconstruction)}")

    objective_g = report.total_g + config.reconstruction_weight * reconstruction
    loss_d = discriminator_loss(scores_real, scores_fake)

    d_params = list(discriminator.parameters())
    g_params = list(generator.parameters())

    d_grads = torch.autograd.grad(loss_d, d_params, retain_graph=True)
    g_grads = torch.autograd.grad(objective_g, g_params, allow_unused=True)

    for parameter, grad in zip(d_params, d_grads):
        parameter.grad = grad

    optimizer_d.step()

    for parameter, grad in zip(g_params, g_grads):
        parameter.grad = grad

    optimizer_g.step()

    return LossReport(
        adversarial_g=report.adversarial_g.detach(),
        l1_term=report.l1_term.detach(),
        total_g=report.total_g.detach(),
        loss_d=loss_d.detach(),
        reconstruction=reconstruction.detach(),
    )


@dataclass
class TrainResult:
    out_dir: Path
    config: TrainConfig
    checkpoints: list[Path] = field(default_factory=list)
    log_path: Path | None = None
    steps: int = 0
    epoch_total_g: list[float] = field(default_factory=list)
    generator: HierarchicalFusionGenerator | None = None
    discriminator: Discriminator | None = None


def non_finite_tensors(**modules: torch.nn.Module) -> list[str]:
    """Names of parameters and floating buffers holding NaN or Inf."""
    names = []

    for prefix, module in modules.items():
        tensors = list(module.named_parameters()) + list(module.named_buffers())

        for name, tensor in tensors:
            if tensor.is_floating_point() and not torch.isfinite(tensor).all():
                names.append(f"{prefix}.{name}")

    return names


def train(cases: list[CaseSample], config: TrainConfig,
          out_dir: str | os.PathLike) -> TrainResult:
    """Train a generator/discriminator pair on ``cases``.

    Writes the config, a per-step CSV log and one checkpoint per epoch
    under ``out_dir``.

    Raises:
        DataError: Empty or config-incompatible dataset.
        NumericFault: A loss or a model tensor became non-finite; no
            checkpoint is written for that epoch, the checkpoint of the last
            completed epoch stays on disk and is named in the message.
    """
    config.validate()

    if not cases:
        raise DataError("training dataset is empty")

    check_compatible(cases, config)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.json")

    generator = build_generator(config).train()
    discriminator = build_discriminator(config).train()

    betas = (config.beta1, config.beta2)
    optimizer_g = torch.optim.Adam(generator.parameters(), lr=config.lr0, betas=betas)
    optimizer_d = torch.optim.Adam(discriminator.parameters(), lr=config.lr0, betas=betas)

    x_all, y_all, mask_all = stack_cases(cases)
    result = TrainResult(out_dir=out, config=config, log_path=out / "training_log.csv",
                         generator=generator, discriminator=discriminator)

    debug.runinfo_log(
        "TRAIN", f"{config.ablation_mode.value}: {len(cases)} case(s), "
        f"{config.epochs} epoch(s), batch {config.batch_size}"
    )

    with TrainingLog(result.log_path) as log:
        for epoch in range(config.epochs):
            lr = lr_at(epoch, config)

            for optimizer in (optimizer_g, optimizer_d):
                for group in optimizer.param_groups:
                    group["lr"] = lr

            order = epoch_order(config, epoch, len(cases))
            totals = []

            for start in range(0, len(cases), config.batch_size):
                index = torch.from_numpy(order[start:start + config.batch_size])

                try:
                    report = train_step(
                        generator, discriminator, optimizer_g, optimizer_d,
                        x_all[index], y_all[index], mask_all[index], config,
                    )

                except NumericFault as e:
                    last = result.checkpoints[-1] if result.checkpoints else None
                    message = (f"epoch {epoch + 1}, step {result.steps}: {e} "
                               f"(last good checkpoint: {last})")
                    debug.runerror_log("TRAIN", message)

                    raise NumericFault(message) from e

                report.epoch = epoch + 1
                report.step = result.steps
                log.append(report)
                totals.append(float(report.total_g))
                result.steps += 1

            result.epoch_total_g.append(float(np.mean(totals)))

            broken = non_finite_tensors(generator=generator, discriminator=discriminator)

            if broken:
                last = result.checkpoints[-1] if result.checkpoints else None
                message = (f"epoch {epoch + 1}: non-finite values in {', '.join(broken[:3])}"
                           f"{' ...' if len(broken) > 3 else ''} (last good checkpoint: {last})")
                debug.runerror_log("TRAIN", message)

                raise NumericFault(message)

            checkpoint = save_checkpoint(
                out / "checkpoints" / f"epoch_{epoch + 1:04d}",
                generator, discriminator, config, epoch + 1,
            )
            result.checkpoints.append(checkpoint)

            debug.runinfo_log(
                "TRAIN", f"epoch {epoch + 1}/{config.epochs} lr={lr:.3g} "
                f"mean total_g={result.epoch_total_g[-1]:.4f}"
            )

    generator.eval()
    discriminator.eval()

    return result


@dataclass
class EvaluationResult:
    reports: list[MetricsReport]
    summary: dict


def evaluate_models(generator: HierarchicalFusionGenerator,
                    cases: list[CaseSample], config: TrainConfig,
                    batch_size: int = 16) -> EvaluationResult:
    """Masked metrics of ``generator`` on ``cases``; parameters untouched."""
    if not cases:
        raise DataError("evaluation dataset is empty")

    check_compatible(cases, config)
    generator.eval()
    dtype = next(generator.parameters()).dtype
    reports = []

    with torch.no_grad():
        for start in range(0, len(cases), batch_size):
            batch = cases[start:start + batch_size]
            x, _, _ = stack_cases(batch)
            synthetic = generator(x.to(dtype)).ce[:, 0].double().numpy()

            for case, g in zip(batch, synthetic):
                reports.append(evaluate_case(
                    case.case_id, case.ce, g, mask=case.mask, t1=case.t1,
                    lesion_mask=case.lesion_mask,
                    hotspot_threshold=config.hotspot_threshold,
                ))

    return EvaluationResult(reports=reports, summary=summarize(reports))


def evaluate(checkpoint: Checkpoint | str | os.PathLike,
             cases: list[CaseSample],
             out_dir: str | os.PathLike | None = None) -> EvaluationResult:
    """Evaluate a checkpoint; optionally write ``report.csv`` and ``summary.json``.

    Raises:
        DataError: Missing checkpoint or dataset incompatible with its config.
    """
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)

    generator, _ = build_models(checkpoint)
    result = evaluate_models(generator, cases, checkpoint.config)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_report_csv(result.reports, out / "report.csv")
        write_summary_json(result.summary, out / "summary.json")

    debug.runinfo_log(
        "EVAL", f"{len(cases)} case(s): ssim {result.summary['ssim']['mean']:.4f} "
        f"+/- {result.summary['ssim']['std']:.4f}"
    )

    return result


@dataclass
class AblationResult:
    rows: list[dict]
    split_hash: str
    table_path: Path


ABLATION_COLUMNS = ("mode", "ssim_mean", "ssim_std", "psnr_mean", "psnr_std",
                    "nmse_mean", "nmse_std", "dice_mean", "split_hash")


def run_ablation(cases: list[CaseSample], base_config: TrainConfig,
                 out_dir: str | os.PathLike) -> AblationResult:
    """Train and test every ablation mode on one shared split.

    Writes ``<out>/ablation.csv`` with one row per mode in ladder order;
    SSIM is shown x100.

    Raises:
        DataError: If a mode would see a different split.
    """
    base_config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    train_cases, test_cases = split_dataset(
        cases, base_config.seed, base_config.test_fraction
    )
    shared_hash = split_hash(train_cases, test_cases)
    rows = []

    for mode in AblationMode:
        config = base_config.with_mode(mode)
        mode_train, mode_test = split_dataset(cases, config.seed, config.test_fraction)

        if split_hash(mode_train, mode_test) != shared_hash:
            raise DataError(f"{mode.value}: split differs from the shared split")

        debug.runinfo_log("ABLATE", f"training {mode.value}")

        result = train(mode_train, config, out / mode.value)
        summary = evaluate_models(result.generator, mode_test, config).summary

        rows.append({
            "mode": mode.value,
            "ssim_mean": 100.0 * summary["ssim"]["mean"],
            "ssim_std": 100.0 * summary["ssim"]["std"],
            "psnr_mean": summary["psnr"]["mean"],
            "psnr_std": summary["psnr"]["std"],
            "nmse_mean": summary["nmse"]["mean"],
            "nmse_std": summary["nmse"]["std"],
            "dice_mean": summary["dice"]["mean"],
            "split_hash": shared_hash,
        })

    table_path = out / "ablation.csv"

    with open(table_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=ABLATION_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)

    ssims = ", ".join(f"{row['mode']}={row['ssim_mean']:.2f}" for row in rows)
    debug.runinfo_log("ABLATE", f"test SSIM x100: {ssims}")

    return AblationResult(rows=rows, split_hash=shared_hash, table_path=table_path)


__all__ = [
    'lr_at',
    'non_finite_tensors',
    'split_dataset',
    'split_hash',
    'check_compatible',
    'stack_cases',
    'epoch_order',
    'train_step',
    'TrainResult',
    'train',
    'EvaluationResult',
    'evaluate_models',
    'evaluate',
    'AblationResult',
    'ABLATION_COLUMNS',
    'run_ablation',
]
