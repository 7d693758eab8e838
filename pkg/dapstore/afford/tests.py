import math
import tempfile
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from django.test import SimpleTestCase, tag

from dapstore.exceptions import ConfigError, ShapeError, SizeError
from dapstore.geom import PointCloud, read_ply
from dapstore.labeling import AffordanceField
from dapstore.tensor import grad_check_module
from .denoiser import DenoiserConfig, build_denoiser, cap_loss, cap_predict
from .embedding import fourier_embed, timestep_embedding
from .encoder import PointEncoder, encoder_forward
from .schedule import (
    NoiseSchedule,
    ddpm_loss,
    export_trajectory,
    make_schedule,
    q_sample,
    reverse_step,
    sample_affordance,
    sample_affordance_batch,
)


def random_cloud(rng, n, scale=0.3):
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(rng.uniform(-scale, scale, size=(n, 3)), normals)


def zero_model(scores, t, context):
    return torch.zeros_like(scores)


class OracleDenoiser:
    """Predicts the exact noise that separates S(t) from a known S(0)"""

    def __init__(self, s0, sched):
        self.s0 = torch.as_tensor(s0, dtype=torch.float64)
        self.sched = sched

    def __call__(self, scores, t, context):
        _, alpha_bar, _ = self.sched.at(t)
        return (scores - math.sqrt(alpha_bar) * self.s0) / math.sqrt(1.0 - alpha_bar)


def perturb_(model, seed, std=0.3):
    """Replace zero-initialized weights so outputs and gradients are generic"""
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for param in model.parameters():
            param.copy_(torch.randn(param.shape, generator=generator, dtype=torch.float64) * std)
    return model


MICRO = DenoiserConfig(token_dim=8, num_layers=1, num_heads=2, fourier_freqs=2, encoder_k=2, time_embed_dim=8)


class ScheduleTestCase(SimpleTestCase):
    """Test cases for make_schedule"""

    def test_single_step(self):
        sched = make_schedule(1, 0.01, 0.01)
        np.testing.assert_allclose(sched.alpha_bar, [0.99])

    def test_default_schedule_end_value(self):
        """T = 100 with beta in [1e-4, 0.02] ends near alpha_bar = 0.36"""
        sched = make_schedule(100, 1e-4, 0.02)
        self.assertAlmostEqual(sched.alpha_bar[-1], 0.366, delta=0.01)
        self.assertEqual(sched.T, 100)

    def test_matches_cumulative_product(self):
        for T, lo, hi in [(10, 1e-3, 0.05), (100, 1e-4, 0.02), (37, 0.01, 0.3)]:
            sched = make_schedule(T, lo, hi)
            oracle = np.cumprod(1.0 - np.linspace(lo, hi, T))
            np.testing.assert_allclose(sched.alpha_bar, oracle, rtol=0, atol=1e-12)
            self.assertTrue(np.all(np.diff(sched.alpha_bar) < 0))
            np.testing.assert_allclose(sched.alpha_bar[1:] / sched.alpha_bar[:-1], sched.alpha[1:], atol=1e-12)
            np.testing.assert_allclose(sched.sigma ** 2, sched.beta, atol=1e-15)

    def test_invalid_ranges(self):
        for args in [(0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)]:
            with self.assertRaises(ConfigError):
                make_schedule(*args)


class QSampleTestCase(SimpleTestCase):
    """Test cases for q_sample"""

    def setUp(self):
        self.sched = make_schedule(100, 1e-4, 0.02)
        self.s0 = AffordanceField([1.0, -1.0, 1.0])

    def test_zero_beta_schedule_keeps_s0(self):
        out = q_sample(self.s0, 1, np.array([0.3, -2.0, 1.0]), NoiseSchedule([0.0]))
        np.testing.assert_array_equal(out.scores, self.s0.scores)

    def test_zero_noise_scales_s0(self):
        out = q_sample(self.s0, 50, np.zeros(3), self.sched)
        np.testing.assert_allclose(out.scores, math.sqrt(self.sched.alpha_bar[49]) * self.s0.scores)

    def test_length_mismatch(self):
        with self.assertRaises(ShapeError):
            q_sample(self.s0, 1, np.zeros(4), self.sched)

    def test_step_out_of_range(self):
        with self.assertRaises(ConfigError):
            q_sample(self.s0, 0, np.zeros(3), self.sched)

    @tag("slow")
    def test_marginal_statistics(self):
        """1e5 draws per step match the closed-form mean and variance"""
        rng = np.random.default_rng(30)
        n = 100_000
        s0 = np.ones(n)
        for t in (1, 50, 100):
            alpha_bar = self.sched.alpha_bar[t - 1]
            out = q_sample(s0, t, rng.standard_normal(n), self.sched)
            std = math.sqrt(1.0 - alpha_bar)
            self.assertLess(abs(out.mean() - math.sqrt(alpha_bar)), 3 * std / math.sqrt(n))
            self.assertLess(abs(out.var() / (1.0 - alpha_bar) - 1.0), 0.05)


class ReverseStepTestCase(SimpleTestCase):
    """Test cases for reverse_step"""

    def setUp(self):
        self.sched = make_schedule(100, 1e-4, 0.02)
        self.s_t = AffordanceField([0.5, -1.2, 2.0])
        self.container = random_cloud(np.random.default_rng(31), 3)

    def test_zero_model_zero_noise(self):
        out = reverse_step(zero_model, self.s_t, 40, self.container, np.zeros(3), self.sched)
        np.testing.assert_allclose(out.scores, self.s_t.scores / math.sqrt(self.sched.alpha[39]))

    def test_last_step_ignores_noise(self):
        a = reverse_step(zero_model, self.s_t, 1, self.container, np.array([5.0, 5.0, 5.0]), self.sched)
        b = reverse_step(zero_model, self.s_t, 1, self.container, np.zeros(3), self.sched)
        np.testing.assert_array_equal(a.scores, b.scores)

    def test_oracle_mean_is_posterior_mean(self):
        """With the exact noise, the reverse mean equals the DDPM posterior mean"""
        rng = np.random.default_rng(32)
        s0 = np.array([1.0, -1.0, 1.0])
        for t in (2, 10, 57, 100):
            alpha, alpha_bar, _ = self.sched.at(t)
            alpha_bar_prev = self.sched.alpha_bar[t - 2]
            s_t = q_sample(s0, t, rng.standard_normal(3), self.sched)
            out = reverse_step(OracleDenoiser(s0, self.sched), AffordanceField(s_t), t,
                               self.container, np.zeros(3), self.sched)
            beta = 1.0 - alpha
            posterior = (math.sqrt(alpha_bar_prev) * beta / (1 - alpha_bar)) * s0 \
                + (math.sqrt(alpha) * (1 - alpha_bar_prev) / (1 - alpha_bar)) * s_t
            np.testing.assert_allclose(out.scores, posterior, atol=1e-10)

    def test_oracle_chain_recovers_s0(self):
        """Iterating from pure noise with the oracle ends at S(0) on average"""
        container = random_cloud(np.random.default_rng(33), 1)
        s0 = np.array([0.7])
        samples = sample_affordance_batch(OracleDenoiser(s0, self.sched), container, self.sched, 0, 1000)
        raw = np.array([sample.raw.scores[0] for sample in samples])
        self.assertLess(abs(raw.mean() - s0[0]), 0.1)


class SampleAffordanceTestCase(SimpleTestCase):
    """Test cases for sample_affordance"""

    def setUp(self):
        self.sched = make_schedule(20, 1e-4, 0.05)
        self.container = random_cloud(np.random.default_rng(34), 50)

    def test_zero_model_matches_scalar_recursion(self):
        seed = 1234
        sample = sample_affordance(zero_model, self.container, self.sched, seed)
        generator = torch.Generator().manual_seed(seed)
        state = torch.randn(50, generator=generator, dtype=torch.float64)
        for t in range(self.sched.T, 0, -1):
            alpha, _, sigma = self.sched.at(t)
            state = state / math.sqrt(alpha)
            if t > 1:
                state = state + sigma * torch.randn(50, generator=generator, dtype=torch.float64)
        np.testing.assert_allclose(sample.raw.scores, state.numpy(), rtol=1e-13)
        np.testing.assert_array_equal(sample.scores.scores, np.clip(sample.raw.scores, -1, 1))

    def test_fixed_seed_is_reproducible(self):
        model = perturb_(build_denoiser(MICRO, 0), 1, std=0.1)
        a = sample_affordance(model, self.container, self.sched, 99)
        b = sample_affordance(model, self.container, self.sched, 99)
        np.testing.assert_array_equal(a.raw.scores, b.raw.scores)

    def test_batch_rows_use_offset_seeds(self):
        batch = sample_affordance_batch(zero_model, self.container, self.sched, 7, 3)
        alone = sample_affordance(zero_model, self.container, self.sched, 9)
        np.testing.assert_allclose(batch[2].raw.scores, alone.raw.scores, rtol=1e-13)
        self.assertEqual([s.seed for s in batch], [7, 8, 9])

    def test_trajectory_snapshots(self):
        """T + 1 snapshots from noise down to a settled field"""
        labels = np.where(np.arange(50) % 2 == 0, 1.0, -1.0)
        sample = sample_affordance(OracleDenoiser(labels, self.sched), self.container, self.sched, 3,
                                   record_trajectory=True)
        self.assertEqual(len(sample.trajectory), self.sched.T + 1)
        first = sample.trajectory[0].scores
        self.assertLess(abs(first.mean()), 0.5)
        self.assertLess(abs(first.std() - 1.0), 0.4)
        last = sample.trajectory[-1].scores
        self.assertGreaterEqual(np.mean(np.abs(last) <= 1.5), 0.99)
        np.testing.assert_allclose(last, labels, atol=1e-9)

    def test_export_trajectory_files(self):
        sample = sample_affordance(zero_model, self.container, make_schedule(3, 1e-4, 0.02), 0,
                                   record_trajectory=True)
        with tempfile.TemporaryDirectory() as tmp:
            paths = export_trajectory(self.container, sample.trajectory, tmp)
            names = sorted(p.name for p in Path(tmp).iterdir())
            self.assertEqual(names, ["afford_t000.ply", "afford_t001.ply", "afford_t002.ply", "afford_t003.ply"])
            last = read_ply(paths[-1])
            np.testing.assert_allclose(last.scores, sample.trajectory[-1].scores, atol=1e-5)


class FourierEmbedTestCase(SimpleTestCase):
    """Test cases for fourier_embed"""

    def test_origin(self):
        out = fourier_embed(np.zeros((1, 3)), 3).numpy()[0]
        np.testing.assert_array_equal(out[0::2], np.zeros(9))
        np.testing.assert_array_equal(out[1::2], np.ones(9))

    def test_single_frequency(self):
        out = fourier_embed(np.array([[1.0, 0.0, 0.0]]), 1).numpy()[0]
        np.testing.assert_allclose(out, [0, -1, 0, 1, 0, 1], atol=1e-12)

    def test_no_aliasing_inside_unit_box(self):
        """Distinct points inside (-1, 1)^3 get distinct embeddings"""
        points = np.random.default_rng(35).uniform(-0.99, 0.99, size=(200, 3))
        emb = fourier_embed(points, 6).numpy()
        distances = np.linalg.norm(emb[:, None] - emb[None], axis=-1)
        np.fill_diagonal(distances, np.inf)
        self.assertGreater(distances.min(), 1e-3)

    def test_invalid_frequency_count(self):
        with self.assertRaises(ConfigError):
            fourier_embed(np.zeros((1, 3)), 0)

    def test_timestep_embedding_shape(self):
        self.assertEqual(tuple(timestep_embedding(torch.tensor([1.0, 5.0]), 9).shape), (2, 9))


class EncoderTestCase(SimpleTestCase):
    """Test cases for encoder_forward"""

    def setUp(self):
        torch.manual_seed(0)
        self.encoder = PointEncoder(16, 4).double()
        self.rng = np.random.default_rng(36)

    def test_permutation_equivariance(self):
        pc = random_cloud(self.rng, 30)
        perm = self.rng.permutation(30)
        base = encoder_forward(self.encoder, pc)
        permuted = encoder_forward(self.encoder, pc.subset(perm))
        torch.testing.assert_close(permuted, base[perm], rtol=0, atol=1e-12)

    def test_k1_pools_self(self):
        pc = random_cloud(self.rng, 10)
        positions = torch.as_tensor(pc.positions)
        normals = torch.as_tensor(pc.normals)
        local = self.encoder.mlp(torch.cat([positions, normals], dim=-1))
        expected = self.encoder.proj(torch.cat([local, local], dim=-1))
        torch.testing.assert_close(encoder_forward(self.encoder, pc, k=1), expected)

    def test_duplicate_points_share_features(self):
        pc = random_cloud(self.rng, 12)
        doubled = PointCloud(np.vstack([pc.positions, pc.positions[:1]]), np.vstack([pc.normals, pc.normals[:1]]))
        out = encoder_forward(self.encoder, doubled)
        torch.testing.assert_close(out[0], out[-1])

    def test_too_few_points(self):
        with self.assertRaises(SizeError):
            encoder_forward(self.encoder, random_cloud(self.rng, 3))


class DenoiserTestCase(SimpleTestCase):
    """Test cases for the Point-DiT denoiser"""

    def setUp(self):
        self.rng = np.random.default_rng(37)
        self.cfg = DenoiserConfig(token_dim=16, num_layers=2, num_heads=4, fourier_freqs=3,
                                  encoder_k=4, time_embed_dim=16)

    def test_config_validation(self):
        with self.assertRaises(ConfigError):
            DenoiserConfig(token_dim=10, num_heads=4)

    def test_zero_output_at_init(self):
        model = build_denoiser(self.cfg, 0)
        for n in (4, 100, 500):
            out = model(torch.as_tensor(self.rng.normal(size=n)), 17, random_cloud(self.rng, n))
            self.assertEqual(tuple(out.shape), (n,))
            self.assertTrue(torch.all(out == 0))

    def test_seeded_build_is_deterministic(self):
        a = build_denoiser(self.cfg, 5)
        b = build_denoiser(self.cfg, 5)
        for p, q in zip(a.parameters(), b.parameters()):
            self.assertTrue(torch.equal(p, q))

    def test_permutation_equivariance(self):
        model = perturb_(build_denoiser(self.cfg, 0), 2, std=0.2)
        pc = random_cloud(self.rng, 40)
        scores = torch.as_tensor(self.rng.normal(size=40))
        perm = self.rng.permutation(40)
        base = model(scores, 12, pc)
        permuted = model(scores[perm], 12, pc.subset(perm))
        torch.testing.assert_close(permuted, base[perm], rtol=0, atol=1e-10)

    def test_batch_matches_rows(self):
        model = perturb_(build_denoiser(self.cfg, 0), 3, std=0.2)
        pc = random_cloud(self.rng, 20)
        context = model.encode(pc)
        batch = torch.as_tensor(self.rng.normal(size=(3, 20)))
        out = model(batch, 30, context)
        for row in range(3):
            torch.testing.assert_close(out[row], model(batch[row], 30, context), rtol=0, atol=1e-12)

    def test_score_length_mismatch(self):
        model = build_denoiser(self.cfg, 0)
        with self.assertRaises(ShapeError):
            model(torch.zeros(5), 1, random_cloud(self.rng, 6))


class DdpmLossTestCase(SimpleTestCase):
    """Test cases for ddpm_loss"""

    def setUp(self):
        self.sched = make_schedule(100, 1e-4, 0.02)
        self.rng = np.random.default_rng(38)
        self.container = random_cloud(self.rng, 4)
        self.s0 = AffordanceField([1.0, -1.0, -1.0, 1.0])

    def test_perfect_model_has_zero_loss(self):
        eps = self.rng.standard_normal(4)
        echo = lambda scores, t, context: torch.as_tensor(eps)  # noqa: E731
        self.assertEqual(float(ddpm_loss(echo, self.s0, self.container, 10, eps, self.sched)), 0.0)

    def test_zero_model_loss_is_noise_power(self):
        eps = self.rng.standard_normal(4)
        loss = ddpm_loss(zero_model, self.s0, self.container, 10, eps, self.sched)
        self.assertAlmostEqual(float(loss), float(np.mean(eps ** 2)), places=12)

    @tag("slow")
    def test_gradient_on_micro_model(self):
        model = perturb_(build_denoiser(MICRO, 0), 4, std=0.3)
        eps = self.rng.standard_normal(4)
        # attention key biases have an identically zero gradient, leave them out
        params = {name: p for name, p in model.named_parameters() if "in_proj_bias" not in name}
        report = grad_check_module(
            lambda: ddpm_loss(model, self.s0, self.container, 25, eps, self.sched),
            params, max_entries=6)
        self.assertTrue(report.passed, str(report))


class CapTestCase(SimpleTestCase):
    """Test cases for the classification variant"""

    def setUp(self):
        self.container = random_cloud(np.random.default_rng(39), 6)
        self.labels = AffordanceField([1, -1, 1, 1, -1, -1])

    def test_perfect_logits(self):
        confident = lambda scores, t, context: 40.0 * torch.as_tensor(self.labels.scores)  # noqa: E731
        self.assertLess(float(cap_loss(confident, self.labels, self.container)), 1e-6)

    def test_uniform_logits(self):
        model = build_denoiser(MICRO, 0)
        self.assertAlmostEqual(float(cap_loss(model, self.labels, self.container)), math.log(2.0), places=12)

    def test_predict_in_range(self):
        model = perturb_(build_denoiser(MICRO, 0), 5)
        field = cap_predict(model, self.container)
        self.assertEqual(len(field), 6)
        self.assertTrue(np.all(np.abs(field.scores) <= 1.0))

    def test_gradient_flows_to_head(self):
        model = build_denoiser(MICRO, 0)
        cap_loss(model, self.labels, self.container).backward()
        self.assertIsInstance(model.head, nn.Linear)
        self.assertGreater(float(model.head.bias.grad.abs().sum()), 0.0)
