"""cemri - contrast-enhanced breast MRI synthesis v0.1.0.

This package synthesizes contrast-enhanced (CE) breast MRI from a
T1-weighted image and diffusion-weighted images (DWI) acquired at several
b-values, without a contrast agent. A hierarchical fusion generator encodes
every input sequence separately, fuses the per-sequence features at every
scale (weighted differences of DWI pairs, multi-sequence channel attention)
and decodes the CE image; it is trained adversarially against a conditional
discriminator. A phantom generator with exact diffusion physics provides
ground truth for verification.

Basic Usage:
    >>> from cemri import (
    ...     PhantomSpec, generate_dataset, split_dataset,
    ...     TrainConfig, train, evaluate
    ... )
    >>>
    >>> cases = generate_dataset(PhantomSpec(seed=0), 100)
    >>> train_cases, test_cases = split_dataset(cases, seed=0)
    >>> result = train(train_cases, TrainConfig(epochs=30), "runs/full")
    >>> evaluation = evaluate(result.checkpoints[-1], test_cases)
    >>> evaluation.summary["ssim"]["mean"]

Main Export Categories:
    Phantoms: PhantomSpec, CaseSample, generate_case, dataset I/O
    Diffusion: BValuePair, adc_map, weighted_difference
    Attention: SharedMLP, channel_attention, apply_attention
    Networks: HierarchicalFusionGenerator, Discriminator, losses
    Metrics: ssim, psnr, nmse, difference_image, dice
    Experiments: TrainConfig, AblationMode, train, evaluate, run_ablation
    Utilities: tensor files, checkpoints, gradient checks, logging

Command line: ``python -m cemri --help``.
"""

# Errors and constants
try:
    from .errors import *
    from .constants import *

except ImportError:
    from errors import *
    from constants import *


# Logging and command-line switches
try:
    from .runarg import (
        Options,
        exist_option,
        get_option,
        get_var,
        strip_options,
        default_output_root,
    )
    from .debug import (
        LogLevel,
        Logger,
        runlog_write,
        rundebug_log,
        runinfo_log,
        runwarning_log,
        runerror_log,
        runcritical_log,
        internallog,
    )

except ImportError:
    from runarg import (
        Options,
        exist_option,
        get_option,
        get_var,
        strip_options,
        default_output_root,
    )
    from debug import (
        LogLevel,
        Logger,
        runlog_write,
        rundebug_log,
        runinfo_log,
        runwarning_log,
        runerror_log,
        runcritical_log,
        internallog,
    )


# Data: tensor files and phantoms
try:
    from .tensorio import read_tensor, write_tensor
    from .phantom import (
        PhantomSpec,
        CaseSample,
        dwi_signal,
        generate_case,
        generate_dataset,
        write_dataset,
        read_dataset,
    )

except ImportError:
    from tensorio import read_tensor, write_tensor
    from phantom import (
        PhantomSpec,
        CaseSample,
        dwi_signal,
        generate_case,
        generate_dataset,
        write_dataset,
        read_dataset,
    )


# Networks and objectives
try:
    from .wdm import (
        BValuePair,
        ADCMap,
        adc_map,
        weighted_difference,
        WeightedDifferenceModule,
    )
    from .attention import (
        AttentionWeights,
        SharedMLP,
        channel_attention,
        apply_attention,
        MultiSequenceAttention,
    )
    from .config import AblationMode, TrainConfig, load_config, save_config
    from .generator import (
        HierarchicalFusionGenerator,
        GeneratorOutput,
        build_generator,
        fuse_scale,
        synthesize,
    )
    from .adversarial import (
        Discriminator,
        LossReport,
        discriminate,
        masked_l1,
        generator_loss,
        discriminator_loss,
    )

except ImportError:
    from wdm import (
        BValuePair,
        ADCMap,
        adc_map,
        weighted_difference,
        WeightedDifferenceModule,
    )
    from attention import (
        AttentionWeights,
        SharedMLP,
        channel_attention,
        apply_attention,
        MultiSequenceAttention,
    )
    from config import AblationMode, TrainConfig, load_config, save_config
    from generator import (
        HierarchicalFusionGenerator,
        GeneratorOutput,
        build_generator,
        fuse_scale,
        synthesize,
    )
    from adversarial import (
        Discriminator,
        LossReport,
        discriminate,
        masked_l1,
        generator_loss,
        discriminator_loss,
    )


# Metrics and experiments
try:
    from .metrics import (
        MetricsReport,
        ssim,
        psnr,
        nmse,
        difference_image,
        dice,
    )
    from .checkpoint import save_checkpoint, load_checkpoint, build_models
    from .gradcheck import finite_difference_check
    from .harness import (
        lr_at,
        split_dataset,
        train,
        evaluate,
        run_ablation,
    )

except ImportError:
    from metrics import (
        MetricsReport,
        ssim,
        psnr,
        nmse,
        difference_image,
        dice,
    )
    from checkpoint import save_checkpoint, load_checkpoint, build_models
    from gradcheck import finite_difference_check
    from harness import (
        lr_at,
        split_dataset,
        train,
        evaluate,
        run_ablation,
    )


__version__ = "0.1.0"


__all__ = [
    # Errors
    'CemriError',
    'ConfigError',
    'DataError',
    'TensorFormatError',
    'NumericFault',

    # Constants
    'B_VALUES',
    'B_PAIRS',
    'dwi_key',
    'sequence_keys',

    # Logging and switches
    'Options',
    'exist_option',
    'get_option',
    'get_var',
    'strip_options',
    'default_output_root',
    'LogLevel',
    'Logger',
    'runlog_write',
    'rundebug_log',
    'runinfo_log',
    'runwarning_log',
    'runerror_log',
    'runcritical_log',
    'internallog',

    # Data
    'read_tensor',
    'write_tensor',
    'PhantomSpec',
    'CaseSample',
    'dwi_signal',
    'generate_case',
    'generate_dataset',
    'write_dataset',
    'read_dataset',

    # Networks
    'BValuePair',
    'ADCMap',
    'adc_map',
    'weighted_difference',
    'WeightedDifferenceModule',
    'AttentionWeights',
    'SharedMLP',
    'channel_attention',
    'apply_attention',
    'MultiSequenceAttention',
    'AblationMode',
    'TrainConfig',
    'load_config',
    'save_config',
    'HierarchicalFusionGenerator',
    'GeneratorOutput',
    'build_generator',
    'fuse_scale',
    'synthesize',
    'Discriminator',
    'LossReport',
    'discriminate',
    'masked_l1',
    'generator_loss',
    'discriminator_loss',

    # Metrics and experiments
    'MetricsReport',
    'ssim',
    'psnr',
    'nmse',
    'difference_image',
    'dice',
    'save_checkpoint',
    'load_checkpoint',
    'build_models',
    'finite_difference_check',
    'lr_at',
    'split_dataset',
    'train',
    'evaluate',
    'run_ablation',

    '__version__',
]
