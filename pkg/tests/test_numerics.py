import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vltok.numerics import (
    OptimHyper,
    ParamStore,
    Tensor,
    adamw_step,
    as_tensor,
    attention,
    causal_mask,
    concat,
    cross_entropy,
    finite_difference_check,
    gelu,
    grad,
    layer_norm,
    matmul,
    no_grad,
    relu,
    sigmoid,
    softmax,
    truncated_normal,
)


def _oracle_softmax(v):
    e = [math.exp(x - max(v)) for x in v]
    return [x / sum(e) for x in e]


class TestSoftmax:
    def test_symmetric_pair(self):
        np.testing.assert_allclose(softmax(np.array([0.0, 0.0])).data, [0.5, 0.5], atol=0)

    def test_large_inputs_do_not_overflow(self):
        np.testing.assert_allclose(softmax(np.array([1000.0, 1000.0, 1000.0])).data, [1 / 3] * 3, rtol=1e-15)

    def test_log_three(self):
        np.testing.assert_allclose(softmax(np.array([0.0, math.log(3)])).data, [0.25, 0.75], rtol=1e-14)

    @given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-700, 700)))
    def test_simplex(self, v):
        p = softmax(v).data
        assert (p >= 0).all()
        assert abs(p.sum() - 1) <= 1e-12

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
    def test_matches_scalar_oracle(self, v):
        np.testing.assert_allclose(softmax(np.array(v)).data, _oracle_softmax(v), rtol=1e-12, atol=1e-300)

    def test_fully_masked_row_rejected(self):
        with pytest.raises(ValueError):
            softmax(np.zeros((2, 3)), mask=np.array([[True, False, False], [False, False, False]]))

    def test_masked_entries_are_zero(self):
        p = softmax(np.array([[1.0, 2.0, 3.0]]), mask=np.array([[True, True, False]])).data
        assert p[0, 2] == 0.0
        np.testing.assert_allclose(p[0, :2], _oracle_softmax([1.0, 2.0]), rtol=1e-14)


class TestLayerNorm:
    def test_constant_input(self):
        out = layer_norm(np.full(3, 7.5), np.ones(3), np.zeros(3)).data
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_unit_variance_passthrough(self):
        out = layer_norm(np.array([-1.0, 1.0]), np.ones(2), np.zeros(2), eps=1e-15).data
        np.testing.assert_allclose(out, [-1.0, 1.0], rtol=1e-12)

    def test_beta_shift(self):
        out = layer_norm(np.array([2.0, 2.0]), np.ones(2), np.array([5.0, 5.0])).data
        np.testing.assert_array_equal(out, [5.0, 5.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            layer_norm(np.ones(3), np.ones(2), np.zeros(2))


class TestAttention:
    def test_single_key(self, rng):
        v = rng.normal(size=(1, 5))
        out = attention(rng.normal(size=(4, 3)), rng.normal(size=(1, 3)), v).data
        np.testing.assert_allclose(out, np.repeat(v, 4, axis=0), rtol=1e-15)

    def test_causal_first_row(self, rng):
        q, k, v = (rng.normal(size=(4, 3)) for _ in range(3))
        out = attention(q, k, v, causal_mask(4)).data
        np.testing.assert_allclose(out[0], v[0], rtol=1e-15)
        k2, v2 = k.copy(), v.copy()
        k2[1:] += 10.0
        v2[1:] -= 3.0
        np.testing.assert_array_equal(attention(q, k2, v2, causal_mask(4)).data[0], out[0])

    def test_saturated_lookup(self, rng):
        q = np.eye(3) * 60.0
        v = rng.normal(size=(3, 2))
        out = attention(q, np.eye(3) * 60.0, v).data
        np.testing.assert_allclose(out, v, atol=1e-9)

    def test_all_true_mask_is_bitwise_noop(self, rng):
        q, k, v = rng.normal(size=(4, 8)), rng.normal(size=(6, 8)), rng.normal(size=(6, 2))
        a = attention(q, k, v).data
        b = attention(q, k, v, np.ones((4, 6), dtype=bool)).data
        assert np.array_equal(a, b)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            attention(np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 1)))


class TestCrossEntropy:
    def test_uniform(self):
        for t in range(4):
            assert cross_entropy(np.zeros(4), t).data == pytest.approx(math.log(4), rel=1e-15)

    def test_confident_correct(self):
        # -log sigmoid(20) computed independently with log1p
        expected = math.log1p(math.exp(-20.0))
        assert float(cross_entropy(np.array([10.0, -10.0]), 0).data) == pytest.approx(expected, rel=1e-6)
        assert expected == pytest.approx(2.06e-9, rel=1e-2)

    def test_confident_wrong(self):
        expected = 20.0 + math.log1p(math.exp(-20.0))
        assert float(cross_entropy(np.array([10.0, -10.0]), 1).data) == pytest.approx(expected, rel=1e-12)

    def test_batch_is_mean(self, rng):
        z = rng.normal(size=(5, 7))
        t = rng.integers(7, size=5)
        rows = [float(cross_entropy(z[i], int(t[i])).data) for i in range(5)]
        assert float(cross_entropy(z, t).data) == pytest.approx(np.mean(rows), rel=1e-14)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            cross_entropy(np.zeros(3), 3)

    def test_non_integer_target(self):
        with pytest.raises(TypeError):
            cross_entropy(np.zeros(3), 1.0)

    def test_nan_logits(self):
        with pytest.raises(FloatingPointError):
            cross_entropy(np.array([np.nan, 0.0]), 0)


class TestGrad:
    def test_sum(self, rng):
        ps = ParamStore()
        p = ps.add("p", rng.normal(size=(3, 2)))
        np.testing.assert_array_equal(grad(p.sum(), ps)["p"], np.ones((3, 2)))

    def test_half_square(self, rng):
        ps = ParamStore()
        p = ps.add("p", rng.normal(size=4))
        g = grad((p * p).sum() / 2.0, ps)["p"]
        np.testing.assert_allclose(g, p.data, rtol=1e-15)

    def test_unused_parameter_gets_zero(self, rng):
        ps = ParamStore()
        p = ps.add("p", rng.normal(size=2))
        ps.add("q", rng.normal(size=3))
        g = grad(p.sum(), ps)
        np.testing.assert_array_equal(g["q"], np.zeros(3))

    def test_non_scalar_loss(self, rng):
        ps = ParamStore()
        p = ps.add("p", rng.normal(size=2))
        with pytest.raises(ValueError):
            grad(p * 2.0, ps)

    def test_no_grad_builds_no_graph(self, rng):
        p = Tensor(rng.normal(size=3), requires_grad=True)
        with no_grad():
            y = (p * p).sum()
        assert not y.requires_grad

    def test_shared_subexpression_accumulates(self):
        ps = ParamStore()
        p = ps.add("p", np.array([3.0]))
        y = p * p
        loss = (y + y).sum()
        np.testing.assert_allclose(grad(loss, ps)["p"], [12.0])


def _fd_ops():
    rng = np.random.default_rng(5)
    x0 = rng.normal(size=(3, 4))
    w0 = rng.normal(size=(4, 5))
    mask = np.tril(np.ones((3, 3), dtype=bool))
    return {
        "matmul": (lambda x, w: (matmul(x, w) * matmul(x, w)).sum(), [x0, w0]),
        "broadcast_add": (lambda x, b: ((x + b) * (x + b)).sum(), [x0, rng.normal(size=4)]),
        "sigmoid": (lambda x: (sigmoid(x) * x).sum(), [x0]),
        "relu": (lambda x: (relu(x) * x).sum(), [x0 + 0.05]),
        "gelu": (lambda x: (gelu(x) * x).sum(), [x0]),
        "softmax_masked": (lambda x: (softmax(x[:, :3], mask=mask) * x[:, 1:]).sum(), [x0]),
        "layer_norm": (lambda x, g, b: (layer_norm(x, g, b) * x).sum(), [x0, rng.normal(size=4), rng.normal(size=4)]),
        "cross_entropy": (lambda x: cross_entropy(x, np.array([0, 3, 1])), [x0]),
        "attention": (lambda q, k, v: (attention(q, k, v, mask) * q[:, :2]).sum(), [x0, rng.normal(size=(3, 4)), rng.normal(size=(3, 2))]),
        "concat_index": (lambda x: concat([x, x[1:] * 2.0], axis=0).mean() * x.sum(), [x0]),
        "reshape_transpose": (lambda x: (x.reshape(4, 3).transpose(1, 0) * x).sum(), [x0]),
    }


@pytest.mark.parametrize("name", sorted(_fd_ops()))
def test_operation_gradients(name):
    fn, inputs = _fd_ops()[name]
    ps = ParamStore()
    ts = [ps.add(f"in{i}", a.copy()) for i, a in enumerate(inputs)]
    errors = finite_difference_check(lambda: fn(*ts), ps, samples_per_param=12)
    assert max(errors.values()) <= 1e-4, errors


class TestAdamW:
    def _store(self, value):
        ps = ParamStore()
        ps.add("p", np.asarray(value, dtype=float))
        return ps

    def test_zero_grad_no_decay(self):
        ps = self._store([1.0, -2.0])
        adamw_step(ps, {"p": np.zeros(2)}, OptimHyper(learning_rate=0.1, weight_decay=0.0))
        np.testing.assert_array_equal(ps["p"].data, [1.0, -2.0])

    def test_zero_grad_decay(self):
        ps = self._store([1.0, -2.0])
        adamw_step(ps, {"p": np.zeros(2)}, OptimHyper(learning_rate=0.1, weight_decay=0.01))
        np.testing.assert_allclose(ps["p"].data, np.array([1.0, -2.0]) * (1 - 0.1 * 0.01), rtol=1e-15)

    @pytest.mark.parametrize("g", [0.3, -7.0])
    def test_first_step_magnitude(self, g):
        ps = self._store([0.5])
        adamw_step(ps, {"p": np.array([g])}, OptimHyper(learning_rate=1e-3, weight_decay=0.0))
        step = ps["p"].data[0] - 0.5
        assert step == pytest.approx(-1e-3 * math.copysign(1, g), rel=1e-6)

    def test_deterministic(self, rng):
        g = {"p": rng.normal(size=5)}
        a, b = self._store(np.arange(5.0)), self._store(np.arange(5.0))
        for _ in range(3):
            adamw_step(a, g, OptimHyper())
            adamw_step(b, g, OptimHyper())
        assert np.array_equal(a["p"].data, b["p"].data)

    def test_missing_gradient(self):
        with pytest.raises(KeyError):
            adamw_step(self._store([1.0]), {}, OptimHyper())

    def test_bad_hyper(self):
        with pytest.raises(ValueError):
            OptimHyper(beta1=1.0)


class TestParamStore:
    def test_duplicate_name(self):
        ps = ParamStore()
        ps.add("a", np.zeros(2))
        with pytest.raises(KeyError):
            ps.add("a", np.zeros(2))

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            ParamStore()["missing"]

    def test_non_finite_value(self):
        with pytest.raises(FloatingPointError):
            ParamStore().add("a", np.array([np.inf]))

    def test_num_values(self):
        ps = ParamStore()
        ps.add("a", np.zeros((2, 3)))
        ps.add("b", np.zeros(4))
        assert ps.num_values() == 10


def test_truncated_normal_bounds(rng):
    x = truncated_normal(rng, (20000,), std=0.02)
    assert np.abs(x).max() <= 0.04
    assert 0.015 < x.std() < 0.02


def test_float64_everywhere():
    assert as_tensor([1, 2]).data.dtype == np.float64
