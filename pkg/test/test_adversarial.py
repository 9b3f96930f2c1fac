"""
Test cases for the conditional discriminator and the adversarial losses
Covers:
- Score map shape and range, zero projection gives 0.5
- Masked l1 oracle and enhancement emphasis, clamped log terms, discriminator loss at 0.5
- Generator objective is affine in lambda, gradients match finite differences
- Generator parameter gradients through the discriminator
- Training log CSV
"""

import math
import os
import sys
import tempfile
import unittest

import torch

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cemri.adversarial import (
    Discriminator,
    LossReport,
    TrainingLog,
    build_discriminator,
    discriminate,
    discriminator_loss,
    enhancement_emphasis,
    generator_loss,
    masked_l1,
    read_training_log,
)
from cemri.config import TrainConfig
from cemri.errors import NumericFault
from cemri.generator import HierarchicalFusionGenerator
from cemri.gradcheck import finite_difference_check


def calibrate_batch_norm(module, *inputs):
    """Set every batch norm's running statistics from one batch, then eval."""
    module.train()

    for layer in module.modules():
        if isinstance(layer, torch.nn.BatchNorm2d):
            layer.reset_running_stats()
            layer.momentum = None

    with torch.no_grad():
        module(*inputs)

    return module.eval()


class TestDiscriminator(unittest.TestCase):
    """Score maps"""

    def setUp(self):
        torch.manual_seed(0)
        self.discriminator = Discriminator(6, [8, 8, 16, 16, 32]).eval()
        self.x = torch.rand(2, 5, 64, 64)
        self.y = torch.rand(2, 1, 64, 64)

    def test_score_map_shape_and_range(self):
        scores = self.discriminator(self.x, self.y)

        self.assertEqual(tuple(scores.shape), (2, 1, 2, 2))
        self.assertTrue(torch.all((scores > 0) & (scores < 1)))
        print("✓ 64x64 input gives a 2x2 score map in (0,1)")

    def test_zero_projection_gives_half(self):
        with torch.no_grad():
            self.discriminator.projection.weight.zero_()
            self.discriminator.projection.bias.zero_()

        scores = discriminate(self.discriminator, self.x, self.y)

        torch.testing.assert_close(scores, torch.full_like(scores, 0.5))
        print("✓ zero projection scores 0.5 everywhere")

    def test_conditioning_changes_scores(self):
        a = self.discriminator(self.x, self.y)
        b = self.discriminator(torch.rand(2, 5, 64, 64), self.y)

        self.assertFalse(torch.equal(a, b))
        print("✓ scores depend on the conditioning inputs")

    def test_shape_errors(self):
        with self.assertRaises(ValueError):
            self.discriminator(self.x, torch.rand(1, 1, 64, 64))

        with self.assertRaises(ValueError):
            self.discriminator(torch.rand(2, 5, 48, 48), torch.rand(2, 1, 48, 48))

        print("✓ mismatched or indivisible inputs rejected")

    def test_build_is_seeded(self):
        config = TrainConfig(disc_filters=[8, 8, 16, 16, 32], seed=3)
        a = build_discriminator(config).state_dict()
        b = build_discriminator(config).state_dict()

        self.assertEqual(a["features.0.weight"].shape[1], 6)

        for name in a:
            self.assertTrue(torch.equal(a[name], b[name]), name)

        print("✓ discriminator init is seeded")


class TestLosses(unittest.TestCase):
    """Loss oracles"""

    def setUp(self):
        self.y = torch.zeros(1, 1, 2, 2, dtype=torch.float64)
        self.g = torch.full((1, 1, 2, 2), 0.1, dtype=torch.float64)
        self.mask = torch.tensor([[[[1.0, 1.0], [0.0, 0.0]]]], dtype=torch.float64)

    def test_masked_l1_oracle(self):
        """0.1 error, half the voxels in the mask, weight 100 gives 5.05"""
        value = float(masked_l1(self.y, self.g, self.mask, weight=100))

        self.assertAlmostEqual(value, 5.05, places=10)
        self.assertAlmostEqual(
            float(masked_l1(self.y, self.g, torch.zeros_like(self.mask))), 0.1, places=12
        )

        with self.assertRaises(ValueError):
            masked_l1(self.y, self.g, torch.zeros(1, 1, 3, 3))

        print("✓ masked l1 = 5.05")

    def test_masked_l1_with_emphasis(self):
        """weights 1000, 100, 10, 1 on a 0.1 error give 27.775"""
        emphasis = torch.tensor([[[[9.0, 0.0], [9.0, 0.0]]]], dtype=torch.float64)
        value = float(masked_l1(self.y, self.g, self.mask, 100, emphasis))

        self.assertAlmostEqual(value, 0.1 * 1111 / 4, places=10)
        self.assertAlmostEqual(
            float(masked_l1(self.y, self.g, self.mask, 100, torch.zeros_like(emphasis))),
            5.05, places=10,
        )

        with self.assertRaises(ValueError):
            masked_l1(self.y, self.g, self.mask, 100, torch.zeros(1, 1, 3, 3))

        print("✓ emphasized masked l1 = 27.775")

    def test_enhancement_emphasis(self):
        y = torch.tensor([[[[0.9, 0.3], [0.2, 0.5]]]], dtype=torch.float64)
        t1 = torch.tensor([[[[0.5, 0.2], [0.2, 0.1]]]], dtype=torch.float64)

        emphasis = enhancement_emphasis(y, t1, 0.15, 10.0)

        torch.testing.assert_close(
            emphasis, torch.tensor([[[[10.0, 0.0], [0.0, 10.0]]]], dtype=torch.float64)
        )

        with self.assertRaises(ValueError):
            enhancement_emphasis(y, t1[..., :1], 0.15, 10.0)

        print("✓ emphasis marks voxels enhanced above the threshold")

    def test_adversarial_term_at_half(self):
        scores = torch.full((1, 1, 2, 2), 0.5, dtype=torch.float64)
        report = generator_loss(scores, self.y, self.y, self.mask)

        self.assertAlmostEqual(float(report.adversarial_g), math.log(0.5), places=12)
        self.assertAlmostEqual(float(report.adversarial_g), -0.693147, places=6)
        self.assertEqual(float(report.l1_term), 0.0)

        saturating = generator_loss(scores, self.y, self.y, self.mask, non_saturating=True)
        self.assertAlmostEqual(float(saturating.adversarial_g), -math.log(0.5), places=12)
        print("✓ adversarial term is log(0.5) at D = 0.5")

    def test_scores_are_clamped(self):
        """D = 1 stays finite: log(1e-7) = -16.118"""
        scores = torch.ones(1, 1, 2, 2, dtype=torch.float64)
        report = generator_loss(scores, self.y, self.y, self.mask)

        self.assertTrue(math.isfinite(float(report.adversarial_g)))
        self.assertAlmostEqual(float(report.adversarial_g), math.log(1e-7), places=6)
        self.assertAlmostEqual(float(report.adversarial_g), -16.118, places=3)

        loss = discriminator_loss(torch.zeros_like(scores), scores)
        self.assertAlmostEqual(float(loss), -2 * math.log(1e-7), places=5)
        print("✓ clamped log terms stay finite")

    def test_discriminator_loss_at_half(self):
        half = torch.full((2, 1, 2, 2), 0.5, dtype=torch.float64)

        self.assertAlmostEqual(float(discriminator_loss(half, half)), 1.386294, places=6)

        with self.assertRaises(ValueError):
            discriminator_loss(half, half[:1])

        print("✓ D loss = 2 ln 2 at D = 0.5")

    def test_discriminator_loss_near_zero_when_confident(self):
        real = torch.ones(1, 1, 2, 2, dtype=torch.float64)
        fake = torch.zeros(1, 1, 2, 2, dtype=torch.float64)

        self.assertAlmostEqual(float(discriminator_loss(real, fake)), 2e-7, places=9)
        print("✓ D loss ≈ 2e-7 at confident clamped scores")

    def test_generator_loss_gradients(self):
        torch.manual_seed(2)
        scores = (0.1 + 0.8 * torch.rand(2, 1, 2, 2, dtype=torch.float64)).requires_grad_()
        y = torch.rand(2, 1, 8, 8, dtype=torch.float64)
        g = (y + 0.05 + 0.3 * torch.rand(2, 1, 8, 8, dtype=torch.float64)).requires_grad_()
        mask = (torch.rand(2, 1, 8, 8) > 0.5).double()

        def loss():
            return generator_loss(scores, y, g, mask).total_g

        report = finite_difference_check(loss, {"scores": scores, "g": g},
                                         n_samples=8 + 128, step=1e-4, rtol=1e-3)

        self.assertTrue(report.passed, report.failures())
        self.assertEqual(report.names(), {"scores", "g"})
        print(f"✓ generator loss gradients match, max rel. error {report.max_relative_error:.2e}")

    def test_generator_parameter_gradients_through_discriminator(self):
        torch.manual_seed(4)
        generator = HierarchicalFusionGenerator(
            [4, 4, 4, 4], [0, 150, 800, 1500],
            [[0, 150], [150, 800], [800, 1500]],
        ).double()
        discriminator = Discriminator(6, [4, 4, 4, 4, 4]).double()
        x = torch.rand(2, 5, 64, 64, dtype=torch.float64)
        y = torch.rand(2, 1, 64, 64, dtype=torch.float64)
        mask = (torch.rand(2, 1, 64, 64) > 0.3).double()

        calibrate_batch_norm(generator, x)

        with torch.no_grad():
            fake = generator(x).ce

        calibrate_batch_norm(discriminator, x, fake)

        def report_of_batch():
            g = generator(x).ce
            scores = discriminate(discriminator, x, g)

            return generator_loss(scores, y, g, mask, lambda_l1=1.0)

        adversarial_grad = torch.autograd.grad(
            report_of_batch().adversarial_g, generator.decoder.head.weight
        )[0]
        self.assertGreater(float(adversarial_grad.abs().sum()), 0.0)

        report = finite_difference_check(
            lambda: report_of_batch().total_g, dict(generator.named_parameters()),
            n_samples=20, step=1e-4, rtol=1e-3, seed=5,
        )

        self.assertEqual(len(report.samples), 20)
        self.assertTrue(report.passed, report.failures())
        print(f"✓ d(total_g)/d(generator) through D matches, "
              f"max rel. error {report.max_relative_error:.2e}")

    def test_total_affine_in_lambda(self):
        torch.manual_seed(1)
        scores = torch.rand(1, 1, 2, 2, dtype=torch.float64)
        y = torch.rand(1, 1, 2, 2, dtype=torch.float64)
        g = torch.rand(1, 1, 2, 2, dtype=torch.float64)

        totals = [float(generator_loss(scores, y, g, self.mask, lambda_l1=lam).total_g)
                  for lam in (0.0, 50.0, 100.0)]

        self.assertAlmostEqual(totals[2] - totals[1], totals[1] - totals[0], places=9)
        print("✓ generator objective affine in lambda")

    def test_non_finite_raises(self):
        scores = torch.full((1, 1, 2, 2), 0.5, dtype=torch.float64)
        g = self.g.clone()
        g[0, 0, 0, 0] = float("nan")

        with self.assertRaises(NumericFault):
            generator_loss(scores, self.y, g, self.mask)

        with self.assertRaises(NumericFault):
            discriminator_loss(torch.full_like(scores, float("nan")), scores)

        print("✓ non-finite losses raise NumericFault")


class TestTrainingLog(unittest.TestCase):
    """CSV rows"""

    def test_append_and_read(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "training_log.csv")

            with TrainingLog(path) as log:
                for step in range(3):
                    log.append(LossReport(
                        adversarial_g=torch.tensor(-0.5),
                        l1_term=torch.tensor(0.25 * step),
                        total_g=torch.tensor(-0.5 + 25 * step),
                        loss_d=torch.tensor(1.25),
                        reconstruction=torch.tensor(0.5),
                        epoch=1,
                        step=step,
                    ))

                self.assertEqual(log.rows, 3)

            rows = read_training_log(path)

            with open(path, encoding="utf-8") as f:
                header = f.readline().strip().split(",")

        self.assertEqual(tuple(header), TrainingLog.COLUMNS)
        self.assertEqual([row["step"] for row in rows], [0, 1, 2])
        self.assertEqual(rows[2]["l1_term"], 0.5)
        self.assertEqual(rows[1]["total_g"], 24.5)
        print("✓ training log rows written and parsed")

    def test_missing_terms_are_nan(self):
        row = LossReport(torch.tensor(0.0), torch.tensor(0.0), torch.tensor(0.0)).as_row()

        self.assertTrue(math.isnan(row["loss_d"]))
        self.assertTrue(math.isnan(row["reconstruction"]))
        print("✓ absent terms logged as NaN")


if __name__ == "__main__":
    unittest.main()
