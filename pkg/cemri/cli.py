"""Command-line front end.

Subcommands:
    phantom-gen  Generate a phantom dataset
    train        Train on the training split of a dataset
    eval         Evaluate a checkpoint on a split of a dataset
    ablate       Train and compare the four ablation modes
    synth        Synthesize CE images (one TNSR + one PNG per case);
                 --export-attention adds the per-scale attention weights
    visualize    Write the display panels of one case

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric fault. The logging switches of ``runarg`` may be combined with
any subcommand.

Example:
    python -m cemri phantom-gen --count 100 --size 64 --seed 0 --out data
    python -m cemri train --data data --out runs/full --run-log log_level=INFO
    python -m cemri eval --checkpoint runs/full/checkpoints/epoch_0030 \\
        --data data --split test --out runs/full/eval
"""
import argparse
import json
import shutil
import sys
from pathlib import Path

import numpy as np

try:
    from . import debug
    from . import runarg
    from .checkpoint import build_models, load_checkpoint
    from .config import AblationMode, TrainConfig, load_config
    from .constants import DISC_STRIDE_FACTOR
    from .errors import CemriError, ConfigError, DataError
    from .attention import write_attention_weights
    from .generator import run_generator, synthesize
    from .harness import evaluate, run_ablation, split_dataset, split_hash, train
    from .phantom import PhantomSpec, generate_dataset, read_dataset, write_dataset
    from .tensorio import write_tensor
    from .visualize import save_png, write_panels

except ImportError:
    import debug
    import runarg
    from checkpoint import build_models, load_checkpoint
    from config import AblationMode, TrainConfig, load_config
    from constants import DISC_STRIDE_FACTOR
    from errors import CemriError, ConfigError, DataError
    from attention import write_attention_weights
    from generator import run_generator, synthesize
    from harness import evaluate, run_ablation, split_dataset, split_hash, train
    from phantom import PhantomSpec, generate_dataset, read_dataset, write_dataset
    from tensorio import write_tensor
    from visualize import save_png, write_panels


def _default_out(name: str) -> str:
    return str(Path(runarg.default_output_root()) / name)


def _load_train_config(args) -> TrainConfig:
    config = load_config(args.config) if args.config else TrainConfig()
    overrides = {}

    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs

    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed

    if getattr(args, "mode", None) is not None:
        overrides["ablation_mode"] = AblationMode.from_string(args.mode)

    data = config.to_dict()
    data.update(overrides)

    return TrainConfig.from_dict(data)


def _select_cases(cases, case_ids):
    if not case_ids:
        return cases

    by_id = {case.case_id: case for case in cases}
    missing = [case_id for case_id in case_ids if case_id not in by_id]

    if missing:
        raise DataError(f"case id(s) not in dataset: {', '.join(missing)}")

    return [by_id[case_id] for case_id in case_ids]


def cmd_phantom_gen(args) -> int:
    if args.count < 1:
        raise ConfigError(f"--count must be >= 1, got {args.count}")

    if args.size % DISC_STRIDE_FACTOR != 0:
        raise ConfigError(
            f"--size {args.size} is not divisible by {DISC_STRIDE_FACTOR} "
            "(discriminator stride)"
        )

    out = Path(args.out)

    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise ConfigError(
                f"output directory {out} exists and is not empty (use --force)"
            )

        shutil.rmtree(out)

    spec = PhantomSpec(image_size=args.size, seed=args.seed,
                       noise_sigma=args.noise_sigma)
    cases = generate_dataset(spec, args.count)
    write_dataset(cases, out, spec)

    lesions = [case.lesion_count for case in cases]
    print(f"{len(cases)} case(s) of {args.size}x{args.size} written to {out}")
    print(f"lesions: total {sum(lesions)}, per case mean {np.mean(lesions):.2f}, "
          f"min {min(lesions)}, max {max(lesions)}")

    return 0


def cmd_train(args) -> int:
    config = _load_train_config(args)
    cases = read_dataset(args.data)
    train_cases, test_cases = split_dataset(cases, config.seed, config.test_fraction)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "split.json", "w", encoding="utf-8") as f:
        json.dump({
            "train": [case.case_id for case in train_cases],
            "test": [case.case_id for case in test_cases],
            "hash": split_hash(train_cases, test_cases),
        }, f, indent=2)

    result = train(train_cases, config, out)

    print(f"{config.epochs} epoch(s), {result.steps} step(s); "
          f"last checkpoint {result.checkpoints[-1]}")

    return 0


def cmd_eval(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    cases = read_dataset(args.data)

    if args.split != "all":
        train_cases, test_cases = split_dataset(
            cases, checkpoint.config.seed, checkpoint.config.test_fraction
        )
        cases = train_cases if args.split == "train" else test_cases

    result = evaluate(checkpoint, cases, args.out)

    for name in ("ssim", "psnr", "nmse", "dice"):
        stats = result.summary[name]
        print(f"{name}: {stats['mean']:.4f} +/- {stats['std']:.4f} "
              f"(n={stats['count']})")

    return 0


def cmd_ablate(args) -> int:
    config = _load_train_config(args)
    cases = read_dataset(args.data)
    result = run_ablation(cases, config, args.out)

    for row in result.rows:
        print(f"{row['mode']:<5} ssim {row['ssim_mean']:.2f} +/- {row['ssim_std']:.2f}  "
              f"psnr {row['psnr_mean']:.2f} +/- {row['psnr_std']:.2f}  "
              f"nmse {row['nmse_mean']:.4f} +/- {row['nmse_std']:.4f}")

    print(f"table written to {result.table_path}")

    return 0


def cmd_synth(args) -> int:
    generator, _ = build_models(load_checkpoint(args.checkpoint))
    cases = _select_cases(read_dataset(args.data), args.case)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    exported = 0

    for case in cases:
        output = run_generator(
            generator, case.t1, [case.dwi[b] for b in case.b_values]
        )
        ce = output.ce[0, 0].numpy()
        write_tensor(out / f"{case.case_id}.tnsr", ce)
        save_png(out / f"{case.case_id}.png", ce)

        if args.export_attention:
            exported += len(write_attention_weights(
                output.attention, out, case.case_id
            ))

    if args.export_attention and not exported:
        debug.runwarning_log(
            "CLI", f"{generator.mode.value} has no attention blocks, nothing exported"
        )

    print(f"{len(cases)} synthetic case(s) written to {out}")

    if args.export_attention:
        print(f"{exported} attention weight file(s) written")

    return 0


def cmd_visualize(args) -> int:
    generator, _ = build_models(load_checkpoint(args.checkpoint))
    case = _select_cases(read_dataset(args.data), [args.case])[0]
    synthetic = synthesize(
        generator, case.t1, [case.dwi[b] for b in case.b_values]
    ).numpy()
    paths = write_panels(case, synthetic, args.out)

    print(f"{len(paths)} panel(s) written to {args.out}")

    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cemri",
        description="Contrast-enhanced breast MRI synthesis from T1 and DWI",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("phantom-gen", help="generate a phantom dataset")
    gen.add_argument("--count", type=int, default=100)
    gen.add_argument("--size", type=int, default=64)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--noise-sigma", type=float, default=0.01)
    gen.add_argument("--out", default=_default_out("phantoms"))
    gen.add_argument("--force", action="store_true")
    gen.set_defaults(handler=cmd_phantom_gen)

    for name, handler, help_text in (
            ("train", cmd_train, "train on the training split"),
            ("ablate", cmd_ablate, "compare the four ablation modes")):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--data", required=True)
        sub.add_argument("--config")
        sub.add_argument("--epochs", type=int)
        sub.add_argument("--seed", type=int)
        sub.add_argument("--out", default=_default_out(name))
        sub.set_defaults(handler=handler)

        if name == "train":
            sub.add_argument("--mode")

    ev = commands.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--split", choices=("all", "train", "test"), default="test")
    ev.add_argument("--out", default=_default_out("eval"))
    ev.set_defaults(handler=cmd_eval)

    syn = commands.add_parser("synth", help="synthesize CE images")
    syn.add_argument("--checkpoint", required=True)
    syn.add_argument("--data", required=True)
    syn.add_argument("--case", action="append")
    syn.add_argument("--out", default=_default_out("synth"))
    syn.add_argument("--export-attention", action="store_true",
                     help="also write <case>_attention_s<k>.tnsr per fusion scale")
    syn.set_defaults(handler=cmd_synth)

    vis = commands.add_parser("visualize", help="write display panels of a case")
    vis.add_argument("--checkpoint", required=True)
    vis.add_argument("--data", required=True)
    vis.add_argument("--case", required=True)
    vis.add_argument("--out", default=_default_out("panels"))
    vis.set_defaults(handler=cmd_visualize)

    return parser


def main(argv: list[str] | None = None) -> int:
    """Run one subcommand; returns the process exit code."""
    argv = runarg.strip_options(sys.argv[1:] if argv is None else list(argv))
    args = build_parser().parse_args(argv)

    try:
        code, message = args.handler(args), None

    except CemriError as e:
        code, message = e.exit_code, str(e)

    except FileNotFoundError as e:
        code, message = DataError.exit_code, f"file not found: {e.filename}"

    except ValueError as e:
        code, message = ConfigError.exit_code, str(e)

    if message is not None:
        debug.runerror_log("CLI", f"{args.command}: {message}")
        print(f"cemri {args.command}: error: {message}", file=sys.stderr)

    debug.runlog_output_remaining()
    debug.internallog_output_remaining()

    return code


__all__ = [
    'build_parser',
    'main',
]
