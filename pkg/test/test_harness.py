"""
Test cases for training, evaluation and ablation orchestration
Covers:
- Learning-rate schedule and deterministic train/test split
- One training step drives the discriminator twice and reuses its scores
- Short training runs: checkpoints, log rows, determinism, fault reporting
- Evaluation leaves parameters untouched; ablation table rows
"""

import csv
import math
import os
import sys
import tempfile
import unittest
from unittest import mock

import numpy as np
import torch

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cemri import harness
from cemri.adversarial import (
    Discriminator,
    discriminator_loss,
    enhancement_emphasis,
    masked_l1,
    read_training_log,
)
from cemri.config import AblationMode, TrainConfig
from cemri.constants import SCORE_EPS
from cemri.errors import DataError, NumericFault
from cemri.generator import build_generator
from cemri.phantom import PhantomSpec, generate_dataset


SPEC = PhantomSpec(image_size=64, seed=0)


def small_config(**overrides) -> TrainConfig:
    values = dict(channels=[8, 16, 32, 64], disc_filters=[8, 8, 16, 16, 32],
                  image_size=64, epochs=2, batch_size=4, seed=0)
    values.update(overrides)

    return TrainConfig(**values).validate()


def file_bytes(path) -> bytes:
    with open(path, "rb") as f:
        return f.read()


class RecordingDiscriminator(Discriminator):
    """Discriminator that keeps a copy of every score map it returns."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.calls = []

    def forward(self, conditioning, candidate):
        scores = super().forward(conditioning, candidate)
        self.calls.append(scores.detach().clone())

        return scores


class TestSchedule(unittest.TestCase):
    """Step decay"""

    def test_lr_at(self):
        config = TrainConfig()

        self.assertEqual(harness.lr_at(0, config), 1e-3)
        self.assertEqual(harness.lr_at(4, config), 1e-3)
        self.assertEqual(harness.lr_at(5, config), 8e-4)
        self.assertEqual(harness.lr_at(10, config), 6.4e-4)
        self.assertEqual(harness.lr_at(12, config), 6.4e-4)
        self.assertEqual(harness.lr_at(29, config), 3.2768e-4)
        self.assertEqual(harness.lr_at(12, TrainConfig(lr0=2e-4, lr_decay=0.5)), 5e-5)
        print("✓ lr decays by 0.8 every 5 epochs")


class TestSplit(unittest.TestCase):
    """Deterministic train/test split"""

    @classmethod
    def setUpClass(cls):
        cls.cases = generate_dataset(PhantomSpec(image_size=16, seed=1), 20)

    def test_sizes_and_disjointness(self):
        train, test = harness.split_dataset(self.cases, seed=0)
        train_ids = {c.case_id for c in train}
        test_ids = {c.case_id for c in test}

        self.assertEqual((len(train), len(test)), (16, 4))
        self.assertFalse(train_ids & test_ids)
        self.assertEqual(train_ids | test_ids, {c.case_id for c in self.cases})
        print("✓ 80/20 split, disjoint and complete")

    def test_order_independent_and_seeded(self):
        a = harness.split_dataset(self.cases, seed=0)
        b = harness.split_dataset(list(reversed(self.cases)), seed=0)
        c = harness.split_dataset(self.cases, seed=1)

        self.assertEqual(harness.split_hash(*a), harness.split_hash(*b))
        self.assertEqual([x.case_id for x in a[1]], [x.case_id for x in b[1]])
        self.assertNotEqual(harness.split_hash(*a), harness.split_hash(*c))
        print("✓ split depends on seed and ids, not order")

    def test_small_datasets(self):
        train, test = harness.split_dataset(self.cases[:2], seed=0)
        self.assertEqual((len(train), len(test)), (1, 1))

        train, test = harness.split_dataset(self.cases[:1], seed=0)
        self.assertEqual((len(train), len(test)), (1, 0))
        print("✓ tiny datasets keep a case on each side")


class TestTrainStep(unittest.TestCase):
    """A single optimization step"""

    def test_scores_shared_between_objectives(self):
        config = small_config()
        cases = generate_dataset(SPEC, 2)
        x, y, mask = harness.stack_cases(cases)

        generator = build_generator(config).train()
        discriminator = RecordingDiscriminator(6, config.disc_filters).train()
        forwards = []
        generator.register_forward_hook(lambda *args: forwards.append(1))

        optimizer_g = torch.optim.Adam(generator.parameters(), lr=1e-3, betas=(0.5, 0.999))
        optimizer_d = torch.optim.Adam(discriminator.parameters(), lr=1e-3, betas=(0.5, 0.999))
        before = [p.detach().clone() for p in discriminator.parameters()]

        report = harness.train_step(generator, discriminator, optimizer_g,
                                    optimizer_d, x, y, mask, config)

        self.assertEqual(len(forwards), 1)
        self.assertEqual(len(discriminator.calls), 2)

        real, fake = discriminator.calls
        expected_d = float(discriminator_loss(real, fake))
        expected_adv = float(torch.log(1 - fake.clamp(SCORE_EPS, 1 - SCORE_EPS)).mean())

        self.assertAlmostEqual(float(report.loss_d), expected_d, places=5)
        self.assertAlmostEqual(float(report.adversarial_g), expected_adv, places=5)
        self.assertTrue(any(not torch.equal(a, b)
                            for a, b in zip(before, discriminator.parameters())))
        self.assertFalse(report.total_g.requires_grad)
        print("✓ one generator pass, two discriminator passes, shared scores")

    def test_l1_term_emphasizes_enhancement(self):
        cases = generate_dataset(SPEC, 2)
        x, y, mask = harness.stack_cases(cases)

        for weight in (10.0, 0.0):
            config = small_config(enhancement_weight=weight)
            generator = build_generator(config).train()
            discriminator = Discriminator(6, config.disc_filters).train()
            outputs = []
            generator.register_forward_hook(
                lambda module, args, output: outputs.append(output.ce.detach().clone())
            )

            report = harness.train_step(
                generator, discriminator,
                torch.optim.Adam(generator.parameters(), lr=1e-3),
                torch.optim.Adam(discriminator.parameters(), lr=1e-3),
                x, y, mask, config,
            )
            emphasis = enhancement_emphasis(y, x[:, 0:1], config.hotspot_threshold, weight)

            torch.testing.assert_close(
                report.l1_term, masked_l1(y, outputs[0], mask, config.mask_weight, emphasis)
            )
            self.assertEqual(bool(emphasis.any()), weight > 0)

        print("✓ training step weights enhancing voxels in the L1 term")


class TestTraining(unittest.TestCase):
    """Short runs on phantom data"""

    @classmethod
    def setUpClass(cls):
        cls.cases = generate_dataset(SPEC, 8)

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_outputs_of_a_run(self):
        out = os.path.join(self.tmp.name, "run")
        result = harness.train(self.cases, small_config(), out)

        self.assertEqual(len(result.checkpoints), 2)
        self.assertEqual([p.name for p in result.checkpoints], ["epoch_0001", "epoch_0002"])
        self.assertEqual(result.steps, 2 * math.ceil(8 / 4))
        self.assertTrue(os.path.isfile(os.path.join(out, "config.json")))

        rows = read_training_log(result.log_path)
        self.assertEqual(len(rows), 4)
        self.assertEqual([row["epoch"] for row in rows], [1, 1, 2, 2])
        self.assertTrue(all(math.isfinite(row["total_g"]) for row in rows))
        self.assertFalse(result.generator.training)
        print("✓ 2 epochs give 2 checkpoints and 4 log rows")

    def test_identical_seeds_identical_checkpoints(self):
        config = small_config(epochs=1)
        a = harness.train(self.cases, config, os.path.join(self.tmp.name, "a"))
        b = harness.train(self.cases, config, os.path.join(self.tmp.name, "b"))

        for name in ("manifest.json", "generator/decoder.head.weight.tnsr",
                     "discriminator/projection.weight.tnsr"):
            self.assertEqual(file_bytes(a.checkpoints[0] / name),
                             file_bytes(b.checkpoints[0] / name), name)

        print("✓ identical seeds give byte-identical checkpoints")

    def test_incompatible_data_rejected(self):
        with self.assertRaises(DataError):
            harness.train(self.cases, small_config(image_size=128),
                          os.path.join(self.tmp.name, "bad"))

        with self.assertRaises(DataError):
            harness.train([], small_config(), os.path.join(self.tmp.name, "empty"))

        print("✓ incompatible or empty datasets rejected")

    def test_numeric_fault_names_last_checkpoint(self):
        cases = generate_dataset(SPEC, 4)
        cases[0].t1 = cases[0].t1.copy()
        cases[0].t1[10, 10] = np.nan

        with self.assertRaises(NumericFault) as ctx:
            harness.train(cases, small_config(epochs=1),
                          os.path.join(self.tmp.name, "nan"))

        self.assertIn("last good checkpoint", str(ctx.exception))
        print("✓ numeric fault reports the last good checkpoint")


    def test_non_finite_parameters_block_the_checkpoint(self):
        cases = generate_dataset(SPEC, 4)
        out = os.path.join(self.tmp.name, "nan_weights")
        real_step = harness.train_step
        calls = []

        def step_then_corrupt(generator, *args):
            report = real_step(generator, *args)
            calls.append(1)

            if len(calls) == 2:
                with torch.no_grad():
                    generator.decoder.head.weight.fill_(float("nan"))

            return report

        with mock.patch.object(harness, "train_step", side_effect=step_then_corrupt):
            with self.assertRaises(NumericFault) as ctx:
                harness.train(cases, small_config(epochs=2), out)

        message = str(ctx.exception)

        self.assertIn("generator.decoder.head.weight", message)
        self.assertIn("last good checkpoint", message)
        self.assertIn("epoch_0001", message)
        self.assertTrue(os.path.isdir(os.path.join(out, "checkpoints", "epoch_0001")))
        self.assertFalse(os.path.exists(os.path.join(out, "checkpoints", "epoch_0002")))
        print("✓ non-finite weights stop training before the epoch checkpoint")

    def test_non_finite_tensors(self):
        generator = build_generator(small_config())
        discriminator = Discriminator(6, [8, 8, 16, 16, 32])

        self.assertEqual(harness.non_finite_tensors(g=generator, d=discriminator), [])

        with torch.no_grad():
            discriminator.projection.bias.fill_(float("inf"))

        self.assertEqual(harness.non_finite_tensors(g=generator, d=discriminator),
                         ["d.projection.bias"])
        print("✓ non-finite model tensors listed by name")


class TestEvaluation(unittest.TestCase):
    """Evaluation and ablation"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.cases = generate_dataset(SPEC, 5)

    def tearDown(self):
        self.tmp.cleanup()

    def test_evaluation_is_pure(self):
        config = small_config()
        generator = build_generator(config)
        before = {k: v.clone() for k, v in generator.state_dict().items()}

        first = harness.evaluate_models(generator, self.cases, config)
        second = harness.evaluate_models(generator, self.cases, config)

        for name, tensor in generator.state_dict().items():
            self.assertTrue(torch.equal(tensor, before[name]), name)

        self.assertEqual(len(first.reports), 5)
        self.assertEqual(first.summary["ssim"], second.summary["ssim"])
        self.assertTrue(all(r.masked for r in first.reports))
        print("✓ evaluation leaves parameters untouched")

    def test_evaluate_checkpoint_writes_reports(self):
        result = harness.train(self.cases, small_config(epochs=1),
                               os.path.join(self.tmp.name, "run"))
        out = os.path.join(self.tmp.name, "eval")
        evaluation = harness.evaluate(result.checkpoints[-1], self.cases, out)

        self.assertEqual(evaluation.summary["cases"], 5)
        self.assertTrue(os.path.isfile(os.path.join(out, "report.csv")))
        self.assertTrue(os.path.isfile(os.path.join(out, "summary.json")))

        with self.assertRaises(DataError):
            harness.evaluate(os.path.join(self.tmp.name, "missing"), self.cases)

        print("✓ evaluate writes report.csv and summary.json")

    def test_ablation_table(self):
        result = harness.run_ablation(self.cases, small_config(epochs=1),
                                      os.path.join(self.tmp.name, "ablation"))

        self.assertEqual([row["mode"] for row in result.rows],
                         [m.value for m in AblationMode])
        self.assertTrue(all(row["split_hash"] == result.split_hash for row in result.rows))

        with open(result.table_path, encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f))

        self.assertEqual(len(rows), 4)
        self.assertEqual(tuple(rows[0].keys()), harness.ABLATION_COLUMNS)

        for row in result.rows:
            self.assertGreaterEqual(row["ssim_mean"], -100.0)
            self.assertLessEqual(row["ssim_mean"], 100.0)

        print("✓ ablation table has one row per mode")


if __name__ == "__main__":
    unittest.main()
