import math
import tempfile
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from django.test import SimpleTestCase, tag

from dapstore.exceptions import FormatError, NumericError, ShapeError, StateError
from . import ops
from .autodiff import backward, grad_check, grad_check_module
from .checkpoint import MAGIC, load_checkpoint, save_checkpoint
from .optim import AdamState, ParamStore, adam_step


def weights_like(shape, seed):
    generator = torch.Generator().manual_seed(seed)
    return torch.randn(shape, generator=generator, dtype=torch.float64)


class OpForwardTestCase(SimpleTestCase):
    """Forward values of the op suite"""

    def test_softmax_of_zeros(self):
        out = ops.softmax(ops.as_tensor([0.0, 0.0]))
        np.testing.assert_allclose(out.numpy(), [0.5, 0.5])

    def test_layer_norm_of_constant(self):
        out = ops.layer_norm(ops.as_tensor([3.0, 3.0, 3.0, 3.0]))
        np.testing.assert_allclose(out.numpy(), np.zeros(4))

    def test_matmul_by_hand(self):
        a = ops.as_tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        b = ops.as_tensor([[7.0, 8.0], [9.0, 10.0], [11.0, 12.0]])
        np.testing.assert_array_equal(ops.matmul(a, b).numpy(), [[58.0, 64.0], [139.0, 154.0]])

    def test_gather_rows_shape(self):
        x = ops.as_tensor(np.arange(12.0).reshape(4, 3))
        out = ops.gather_rows(x, torch.tensor([[3, 0], [1, 1]]))
        self.assertEqual(tuple(out.shape), (2, 2, 3))
        np.testing.assert_array_equal(out[0, 0].numpy(), [9.0, 10.0, 11.0])

    def test_shape_errors_name_both_shapes(self):
        """Mismatches raise ShapeError mentioning both operands"""
        a = ops.as_tensor(np.zeros((2, 3)))
        b = ops.as_tensor(np.zeros((2, 2)))
        with self.assertRaisesRegex(ShapeError, r"\(2, 3\).*\(2, 2\)"):
            ops.matmul(a, b)
        with self.assertRaisesRegex(ShapeError, r"\(2, 3\).*\(2, 2\)"):
            ops.add(a, b)
        with self.assertRaises(ShapeError):
            ops.concat([a, ops.as_tensor(np.zeros((3, 3)))], dim=1)
        with self.assertRaises(ShapeError):
            ops.gather_rows(a, torch.tensor([5]))
        with self.assertRaises(ShapeError):
            ops.broadcast(a, (4, 4))


@tag("slow")
class OpGradientTestCase(SimpleTestCase):
    """Every op against central differences over random shapes"""

    def setUp(self):
        self.rng = np.random.default_rng(20)

    def shapes(self, count=20):
        for _ in range(count):
            yield int(self.rng.integers(1, 5)), int(self.rng.integers(2, 6))

    def assertGradOk(self, f, x):
        report = grad_check(f, x, h=1e-5, tol=1e-4)
        self.assertTrue(report.passed, str(report))

    def test_elementwise_ops(self):
        for seed, (rows, cols) in enumerate(self.shapes()):
            other = weights_like((rows, cols), seed)
            w = weights_like((rows, cols), seed + 100)
            x = self.rng.normal(size=(rows, cols))
            self.assertGradOk(lambda v: ops.reduce_sum(ops.mul(w, ops.add(v, other))), x)
            self.assertGradOk(lambda v: ops.reduce_sum(ops.mul(w, ops.sub(other, v))), x)
            self.assertGradOk(lambda v: ops.reduce_sum(ops.mul(w, ops.mul(v, v))), x)

    def test_matmul(self):
        for seed, (rows, cols) in enumerate(self.shapes()):
            right = weights_like((cols, 3), seed)
            w = weights_like((rows, 3), seed + 100)
            x = self.rng.normal(size=(rows, cols))
            self.assertGradOk(lambda v: ops.reduce_sum(ops.mul(w, ops.matmul(v, right))), x)

    def test_concat_and_gather(self):
        for seed, (rows, cols) in enumerate(self.shapes()):
            other = weights_like((rows, 2), seed)
            index = torch.as_tensor(self.rng.integers(0, rows, size=(3, 2)))
            w_cat = weights_like((rows, cols + 2), seed + 100)
            w_gather = weights_like((3, 2, cols), seed + 200)
            x = self.rng.normal(size=(rows, cols))
            self.assertGradOk(lambda v: ops.reduce_sum(ops.mul(w_cat, ops.concat([v, other]))), x)
            self.assertGradOk(lambda v: ops.reduce_sum(ops.mul(w_gather, ops.gather_rows(v, index))), x)

    def test_normalizing_ops(self):
        for seed, (rows, cols) in enumerate(self.shapes()):
            w = weights_like((rows, cols), seed)
            gamma = weights_like((cols,), seed + 100)
            beta = weights_like((cols,), seed + 200)
            x = self.rng.normal(size=(rows, cols))
            self.assertGradOk(lambda v: ops.reduce_sum(ops.mul(w, ops.softmax(v))), x)
            self.assertGradOk(lambda v: ops.reduce_sum(ops.mul(w, ops.layer_norm(v, gamma, beta))), x)

    def test_activations(self):
        for seed, (rows, cols) in enumerate(self.shapes()):
            w = weights_like((rows, cols), seed)
            x = self.rng.normal(size=(rows, cols))
            for fn in (ops.silu, ops.tanh, ops.sigmoid):
                self.assertGradOk(lambda v: ops.reduce_sum(ops.mul(w, fn(v))), x)

    def test_reductions_and_broadcast(self):
        for seed, (rows, cols) in enumerate(self.shapes()):
            w = weights_like((rows, cols), seed)
            w_row = weights_like((cols,), seed + 100)
            x_row = self.rng.normal(size=(cols,))
            x = self.rng.normal(size=(rows, cols))
            self.assertGradOk(lambda v: ops.reduce_sum(ops.mul(w, ops.broadcast(v, (rows, cols)))), x_row)
            self.assertGradOk(lambda v: ops.reduce_sum(ops.mul(w_row, ops.reduce_mean(ops.mul(v, v), dim=0))), x)


class BackwardTestCase(SimpleTestCase):
    """Test cases for backward"""

    def test_sum_gives_ones(self):
        x = ops.as_tensor([1.0, -2.0, 3.0], requires_grad=True)
        backward(ops.reduce_sum(x))
        np.testing.assert_array_equal(x.grad.numpy(), np.ones(3))

    def test_square_gives_twice_x(self):
        x = ops.as_tensor([1.0, -2.0, 3.0], requires_grad=True)
        backward(ops.reduce_sum(ops.mul(x, x)))
        np.testing.assert_allclose(x.grad.numpy(), [2.0, -4.0, 6.0])

    def test_non_scalar_loss(self):
        x = ops.as_tensor([1.0, 2.0], requires_grad=True)
        with self.assertRaises(ShapeError):
            backward(ops.mul(x, x))

    def test_loss_without_graph(self):
        with self.assertRaises(StateError):
            backward(ops.as_tensor(1.0))

    def test_unreachable_params_get_zero_grads(self):
        x = ops.as_tensor([1.0, 2.0], requires_grad=True)
        unused = ops.as_tensor([5.0], requires_grad=True)
        backward(ops.reduce_sum(x), [x, unused])
        np.testing.assert_array_equal(unused.grad.numpy(), [0.0])

    def test_second_backward_accumulates(self):
        """Backward twice on a retained graph doubles the gradient"""
        x = ops.as_tensor([0.5, -1.5], requires_grad=True)
        loss = ops.reduce_sum(ops.tanh(x))
        backward(loss, retain_graph=True)
        once = x.grad.clone()
        backward(loss)
        np.testing.assert_array_equal(x.grad.numpy(), 2 * once.numpy())


class GradCheckTestCase(SimpleTestCase):
    """Test cases for grad_check and grad_check_module"""

    def test_sum_is_exact(self):
        report = grad_check(ops.reduce_sum, np.random.default_rng(0).normal(size=7))
        self.assertLess(report.max_rel_err, 1e-10)
        self.assertTrue(report.passed)

    def test_wrong_gradient_is_caught(self):
        """A function with a detached branch fails the check"""
        report = grad_check(lambda v: ops.reduce_sum(v * v.detach()), np.array([1.0, 2.0]))
        self.assertFalse(report.passed)

    def test_non_finite_value(self):
        with self.assertRaises(NumericError):
            grad_check(lambda v: ops.reduce_sum(torch.log(v)), np.array([-1.0]))

    def test_module_check(self):
        torch.manual_seed(0)
        layer = nn.Linear(3, 2).double()
        x = weights_like((4, 3), 1)
        report = grad_check_module(lambda: ops.reduce_sum(ops.tanh(layer(x))), layer)
        self.assertTrue(report.passed, str(report))
        self.assertEqual(report.checked, 8)


class AdamTestCase(SimpleTestCase):
    """Test cases for AdamState and adam_step"""

    def make_store(self, values):
        return ParamStore({"w": np.array(values, dtype=float)})

    def test_zero_grads_leave_params(self):
        store = self.make_store([1.0, -2.0])
        state = AdamState(store, lr=0.1)
        store["w"].grad = torch.zeros(2, dtype=torch.float64)
        adam_step(store, state)
        np.testing.assert_array_equal(store["w"].detach().numpy(), [1.0, -2.0])
        self.assertEqual(state.step_count, 1)

    def test_missing_grads(self):
        store = self.make_store([1.0])
        with self.assertRaises(StateError):
            adam_step(store, AdamState(store))

    def test_matches_reference_trace(self):
        """Constant gradient over several steps follows the textbook recursion"""
        lr, b1, b2, eps, g = 0.01, 0.9, 0.999, 1e-8, 0.3
        store = self.make_store([0.5])
        state = AdamState(store, lr=lr, beta1=b1, beta2=b2, eps_adam=eps)
        p, m, v = 0.5, 0.0, 0.0
        for t in range(1, 6):
            store["w"].grad = torch.full((1,), g, dtype=torch.float64)
            adam_step(store, state)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            p -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
            self.assertAlmostEqual(float(store["w"][0]), p, places=12)
        self.assertEqual(float(store["w"].grad[0]), 0.0)
        self.assertEqual(state.moment_shapes(), {"w": (1,)})

    def test_identical_runs_are_bitwise_equal(self):
        def run():
            torch.manual_seed(3)
            layer = nn.Linear(4, 1).double()
            store = ParamStore.from_module(layer)
            state = AdamState(store, lr=0.05)
            x = weights_like((8, 4), 4)
            for _ in range(10):
                backward(ops.reduce_mean(ops.mul(layer(x), layer(x))), store.values())
                adam_step(store, state)
            return [p.detach().clone() for p in store.values()]

        for a, b in zip(run(), run()):
            self.assertTrue(torch.equal(a, b))


class CheckpointTestCase(SimpleTestCase):
    """Test cases for save_checkpoint / load_checkpoint"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / "model.ckpt"
        torch.manual_seed(0)
        self.module = nn.Sequential(nn.Linear(3, 5), nn.LayerNorm(5), nn.Linear(5, 1)).double()

    def test_round_trip_is_bitwise(self):
        store = ParamStore.from_module(self.module)
        save_checkpoint(store, {"task": "shelf", "note": "héllo"}, self.path)
        loaded, meta = load_checkpoint(self.path)
        self.assertEqual(loaded.names(), store.names())
        for name in store:
            self.assertTrue(torch.equal(loaded[name].detach(), store[name].detach()))
        self.assertEqual(meta, {"task": "shelf", "note": "héllo"})

    def test_header_layout(self):
        save_checkpoint(ParamStore.from_module(self.module), {}, self.path)
        data = self.path.read_bytes()
        self.assertEqual(data[:8], MAGIC)
        self.assertEqual(int.from_bytes(data[8:12], "little"), 6)

    def test_load_into_module(self):
        save_checkpoint(ParamStore.from_module(self.module), {}, self.path)
        torch.manual_seed(1)
        fresh = nn.Sequential(nn.Linear(3, 5), nn.LayerNorm(5), nn.Linear(5, 1)).double()
        load_checkpoint(self.path, into=fresh)
        x = weights_like((2, 3), 0)
        self.assertTrue(torch.equal(fresh(x), self.module(x)))

    def test_corrupt_magic(self):
        save_checkpoint(ParamStore.from_module(self.module), {}, self.path)
        data = bytearray(self.path.read_bytes())
        data[0:1] = b"X"
        self.path.write_bytes(bytes(data))
        with self.assertRaises(FormatError):
            load_checkpoint(self.path)

    def test_truncated_file(self):
        save_checkpoint(ParamStore.from_module(self.module), {}, self.path)
        self.path.write_bytes(self.path.read_bytes()[:40])
        with self.assertRaises(FormatError):
            load_checkpoint(self.path)

    def test_shape_mismatch(self):
        save_checkpoint(ParamStore.from_module(self.module), {}, self.path)
        other = nn.Sequential(nn.Linear(3, 4), nn.LayerNorm(4), nn.Linear(4, 1)).double()
        with self.assertRaises(FormatError):
            load_checkpoint(self.path, into=other)
