import numpy as np
import torch
from django.test import SimpleTestCase

from dapstore.exceptions import ConfigError, InsufficientMatchesError, ShapeError, SizeError
from dapstore.geom import PointCloud
from dapstore.labeling import CorrespondenceMatrix
from dapstore.tensor import grad_check
from .attention import GroupedVectorAttention, gva_attention
from .losses import focal_loss
from .matching import MatchSet, extract_matches
from .model import CorrConfig, build_corr_model, corr_forward


def random_cloud(rng, n, scale=0.2):
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(rng.uniform(-scale, scale, size=(n, 3)), normals)


def build_layer(dim, groups, k, seed=0):
    torch.manual_seed(seed)
    return GroupedVectorAttention(dim, groups, k).double()


class GvaAttentionTestCase(SimpleTestCase):
    """Test cases for gva_attention"""

    def setUp(self):
        self.rng = np.random.default_rng(40)
        self.query = torch.as_tensor(self.rng.normal(size=(12, 16)))
        self.keys = torch.as_tensor(self.rng.normal(size=(20, 16)))
        self.query_pos = self.rng.uniform(-1, 1, size=(12, 3))
        self.key_pos = self.rng.uniform(-1, 1, size=(20, 3))

    def test_single_neighbor(self):
        """With k = 1 the output is the normalized sum of the query and the nearest value"""
        layer = build_layer(16, 4, 1)
        out = gva_attention(layer, self.query, self.keys, self.query_pos, self.key_pos)
        nearest = np.argmin(np.linalg.norm(self.query_pos[:, None] - self.key_pos[None], axis=-1), axis=1)
        expected = layer.norm(self.query + layer.linear_v(self.keys)[nearest])
        torch.testing.assert_close(out, expected, rtol=0, atol=1e-12)

    def test_key_permutation_invariance(self):
        layer = build_layer(16, 4, 5)
        perm = self.rng.permutation(20)
        base = gva_attention(layer, self.query, self.keys, self.query_pos, self.key_pos)
        permuted = gva_attention(layer, self.query, self.keys[perm], self.query_pos, self.key_pos[perm])
        torch.testing.assert_close(permuted, base, rtol=0, atol=1e-12)

    def test_group_counts(self):
        per_channel = gva_attention(build_layer(16, 16, 4), self.query, self.keys, self.query_pos, self.key_pos)
        shared = gva_attention(build_layer(16, 1, 4), self.query, self.keys, self.query_pos, self.key_pos)
        self.assertEqual(tuple(per_channel.shape), (12, 16))
        self.assertEqual(tuple(shared.shape), (12, 16))
        self.assertFalse(torch.allclose(per_channel, shared))

    def test_too_few_keys(self):
        with self.assertRaises(SizeError):
            gva_attention(build_layer(16, 4, 21), self.query, self.keys, self.query_pos, self.key_pos)

    def test_width_mismatch(self):
        with self.assertRaises(ShapeError):
            gva_attention(build_layer(16, 4, 2), self.query, self.keys[:, :8], self.query_pos, self.key_pos)

    def test_groups_must_divide_width(self):
        with self.assertRaises(ConfigError):
            GroupedVectorAttention(16, 5, 2)


class CorrForwardTestCase(SimpleTestCase):
    """Test cases for corr_forward"""

    def setUp(self):
        self.rng = np.random.default_rng(41)
        self.cfg = CorrConfig(token_dim=16, num_blocks=2, gva_k=4, gva_groups=4, encoder_k=4)
        self.model = build_corr_model(self.cfg, 3)
        self.container = random_cloud(self.rng, 30)
        self.obj = random_cloud(self.rng, 12, scale=0.05)

    def test_shape_and_range(self):
        pred = corr_forward(self.model, self.container, self.obj, self.cfg)
        self.assertEqual(pred.shape, (12, 30))
        self.assertTrue(np.all(pred.values > 0) and np.all(pred.values < 1))

    def test_row_permutation(self):
        perm = self.rng.permutation(12)
        base = corr_forward(self.model, self.container, self.obj).values
        permuted = corr_forward(self.model, self.container, self.obj.subset(perm)).values
        np.testing.assert_allclose(permuted, base[perm], rtol=0, atol=1e-10)

    def test_column_permutation(self):
        perm = self.rng.permutation(30)
        base = corr_forward(self.model, self.container, self.obj).values
        permuted = corr_forward(self.model, self.container.subset(perm), self.obj).values
        np.testing.assert_allclose(permuted, base[:, perm], rtol=0, atol=1e-10)

    def test_translation_invariance(self):
        """Each cloud is centered on its own centroid"""
        shifted = PointCloud(self.obj.positions + [0.3, -0.1, 0.2], self.obj.normals)
        base = corr_forward(self.model, self.container, self.obj).values
        np.testing.assert_allclose(corr_forward(self.model, self.container, shifted).values, base, atol=1e-10)

    def test_seeded_build_is_deterministic(self):
        other = build_corr_model(self.cfg, 3)
        np.testing.assert_array_equal(corr_forward(other, self.container, self.obj).values,
                                      corr_forward(self.model, self.container, self.obj).values)

    def test_small_crop(self):
        with self.assertRaises(SizeError):
            corr_forward(self.model, random_cloud(self.rng, 3), self.obj)

    def test_config_validation(self):
        for kwargs in ({"token_dim": 10, "gva_groups": 4}, {"gamma": -1.0}, {"match_threshold": 1.0}):
            with self.assertRaises(ConfigError):
                CorrConfig(**kwargs)


class FocalLossTestCase(SimpleTestCase):
    """Test cases for focal_loss"""

    def setUp(self):
        self.rng = np.random.default_rng(42)
        self.label = (self.rng.uniform(size=(3, 3)) > 0.5).astype(np.float64)
        self.pred = self.rng.uniform(0.05, 0.95, size=(3, 3))

    def test_perfect_prediction(self):
        self.assertLess(float(focal_loss(self.label, self.label, 2.0)), 1e-5)

    def test_gamma_zero_is_bce(self):
        p, y = self.pred, self.label
        bce = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
        self.assertAlmostEqual(float(focal_loss(p, y, 0.0)), bce, delta=1e-12)

    def test_non_negative(self):
        for gamma in (0.0, 0.5, 2.0, 5.0):
            self.assertGreaterEqual(float(focal_loss(self.pred, self.label, gamma)), 0.0)

    def test_decreases_toward_label(self):
        values = []
        for p in np.linspace(0.05, 0.95, 10):
            pred = self.pred.copy()
            pred[0, 0] = p if self.label[0, 0] else 1.0 - p
            values.append(float(focal_loss(pred, self.label, 2.0)))
        self.assertTrue(np.all(np.diff(values) < 0))

    def test_gradient(self):
        report = grad_check(lambda p: focal_loss(p, self.label, 2.0), self.pred)
        self.assertTrue(report.passed, str(report))
        self.assertEqual(report.checked, 9)

    def test_accepts_matrices(self):
        loss = focal_loss(CorrespondenceMatrix(self.pred), CorrespondenceMatrix(self.label), 2.0)
        self.assertAlmostEqual(float(loss), float(focal_loss(self.pred, self.label, 2.0)), places=15)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            focal_loss(self.pred, self.label[:2], 2.0)


class ExtractMatchesTestCase(SimpleTestCase):
    """Test cases for extract_matches"""

    def setUp(self):
        self.rng = np.random.default_rng(43)
        self.obj = random_cloud(self.rng, 6)
        self.container = random_cloud(self.rng, 9)

    def test_identity(self):
        values = np.zeros((6, 9))
        values[np.arange(6), np.arange(6)] = 1.0
        matches = extract_matches(CorrespondenceMatrix(values), self.obj, self.container, 0.5)
        self.assertEqual(matches.pairs, [(i, i, 1.0) for i in range(6)])
        np.testing.assert_array_equal(matches.source_points(self.obj), self.obj.positions)

    def test_low_scores(self):
        with self.assertRaises(InsufficientMatchesError):
            extract_matches(CorrespondenceMatrix(np.full((6, 9), 0.01)), self.obj, self.container, 0.5)

    def test_brute_force_oracle(self):
        for _ in range(20):
            values = self.rng.uniform(size=(6, 9))
            try:
                matches = extract_matches(CorrespondenceMatrix(values), self.obj, self.container, 0.7)
            except InsufficientMatchesError:
                self.assertLess(sum(max(row) >= 0.7 for row in values), 3)
                continue
            expected = []
            for i, row in enumerate(values):
                j = max(range(9), key=lambda c: (row[c], -c))
                if row[j] >= 0.7:
                    expected.append((i, j, row[j]))
            self.assertEqual(matches.pairs, expected)
            self.assertTrue(np.all(matches.weights >= 0.7))

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            extract_matches(CorrespondenceMatrix(np.ones((5, 9))), self.obj, self.container)

    def test_match_set_validation(self):
        with self.assertRaises(ShapeError):
            MatchSet([0, 1], [0], [1.0, 1.0])
        with self.assertRaises(ShapeError):
            MatchSet([0], [0], [0.0])
