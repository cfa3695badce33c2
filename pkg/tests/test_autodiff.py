"""Tensor core: forward fixtures, gradient checks, graph invariants."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ossdet import autodiff as ad
from ossdet.autodiff import Tensor

from oracles import avg3x3s2_loop, conv2d_loop


def t(arr, rg=False):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=rg)


# ---------------------------------------------------------------------------
# Forward fixtures
# ---------------------------------------------------------------------------


class TestPointwise:
    def test_sigmoid_zero(self):
        assert ad.sigmoid(Tensor.zeros((1, 1, 1, 1))).item() == 0.5

    def test_sigmoid_log3(self):
        assert ad.sigmoid(Tensor.scalar(math.log(3))).item() == pytest.approx(0.75, abs=1e-15)

    def test_tanh_zero(self):
        assert ad.tanh(Tensor.zeros((1, 1, 1, 1))).item() == 0.0

    def test_open_ranges(self, rng):
        x = t(rng.uniform(-25, 25, (1, 2, 5, 5)))
        s = ad.sigmoid(x).data
        assert np.all(s > 0) and np.all(s < 1)
        xt = t(rng.uniform(-12, 12, (1, 2, 5, 5)))
        th = ad.tanh(xt).data
        assert np.all(th > -1) and np.all(th < 1)

    def test_pointwise_dispatch(self):
        x = t([[[[-1.0, 2.0]]]])
        assert np.array_equal(ad.pointwise(x, "relu").data, [[[[0.0, 2.0]]]])
        with pytest.raises(ValueError):
            ad.pointwise(x, "gelu")


class TestConv2d:
    def test_zero_input(self, rng):
        x = Tensor.zeros((1, 2, 4, 4))
        k = t(rng.normal(size=(3, 2, 3, 3)))
        b = Tensor.zeros((1, 3, 1, 1))
        assert np.all(ad.conv2d(x, k, b, 1, 1).data == 0)

    def test_identity_1x1(self, rng):
        x = t(rng.normal(size=(2, 3, 4, 4)))
        k = t(np.eye(3).reshape(3, 3, 1, 1))
        out = ad.conv2d(x, k, None, 1, 0)
        assert np.array_equal(out.data, x.data)

    def test_center_sum_45(self):
        x = t(np.arange(1, 10, dtype=float).reshape(1, 1, 3, 3))
        k = t(np.ones((1, 1, 3, 3)))
        out = ad.conv2d(x, k, None, 1, 1)
        assert out.data[0, 0, 1, 1] == 45.0

    def test_matches_loop_oracle(self, rng):
        x = rng.normal(size=(2, 3, 5, 5))
        k = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        for stride, pad in [(1, 1), (2, 1), (1, 0)]:
            out = ad.conv2d(t(x), t(k), t(b.reshape(1, 4, 1, 1)), stride, pad)
            ref = conv2d_loop(x, k, b, stride, pad)
            np.testing.assert_allclose(out.data, ref, atol=1e-12)

    def test_channel_mismatch_rejected(self, rng):
        x = t(rng.normal(size=(1, 8, 4, 4)))
        k = t(rng.normal(size=(4, 3, 3, 3)))
        with pytest.raises(ad.ShapeError, match="8 channels"):
            ad.conv2d(x, k, None, 1, 1)

    def test_even_kernel_rejected(self, rng):
        with pytest.raises(ad.ShapeError):
            ad.conv2d(t(rng.normal(size=(1, 1, 4, 4))), t(rng.normal(size=(1, 1, 2, 2))))


class TestPool:
    def test_constant_preserved(self):
        x = Tensor.full((1, 2, 4, 4), 3.25)
        assert np.all(ad.pool(x, "gap").data == 3.25)
        assert np.all(ad.pool(x, "avg3x3s2").data == 3.25)
        assert np.all(ad.pool(x, "channel_mean").data == 3.25)

    def test_gap_2x2(self):
        x = t(np.array([1.0, 2, 3, 4]).reshape(1, 1, 2, 2))
        assert ad.pool(x, "gap").item() == 2.5

    def test_avg3x3s2_ramp_fixture(self):
        # 4x4 ramp 0..15; values frozen from the scalar-loop oracle.
        x = t(np.arange(16, dtype=float).reshape(1, 1, 4, 4))
        out = ad.pool(x, "avg3x3s2")
        expected = np.array([[2.5, 4.0], [8.5, 10.0]])
        np.testing.assert_array_equal(out.data[0, 0], expected)
        np.testing.assert_array_equal(avg3x3s2_loop(x.data)[0, 0], expected)

    def test_avg3x3s2_matches_oracle(self, rng):
        x = rng.normal(size=(2, 3, 6, 8))
        np.testing.assert_allclose(
            ad.pool(t(x), "avg3x3s2").data, avg3x3s2_loop(x), atol=1e-13
        )

    def test_odd_dims_rejected(self, rng):
        with pytest.raises(ad.ShapeError):
            ad.pool(t(rng.normal(size=(1, 1, 5, 4))), "avg3x3s2")

    def test_channel_mean_shape(self, rng):
        out = ad.pool(t(rng.normal(size=(2, 5, 3, 3))), "channel_mean")
        assert out.shape == (2, 1, 3, 3)


class TestUpsample:
    def test_single_value(self):
        out = ad.upsample2x(Tensor.full((1, 1, 1, 1), 7.0))
        assert np.all(out.data == 7.0) and out.shape == (1, 1, 2, 2)

    def test_left_inverse_of_replication(self, rng):
        x = t(rng.normal(size=(2, 3, 4, 4)))
        up = ad.upsample2x(x)
        down = up.data.reshape(2, 3, 4, 2, 4, 2).mean(axis=(3, 5))
        np.testing.assert_array_equal(down, x.data)

    def test_checkerboard(self):
        x = t(np.array([[0.0, 1], [1, 0]]).reshape(1, 1, 2, 2))
        expected = np.array(
            [[0, 0, 1, 1], [0, 0, 1, 1], [1, 1, 0, 0], [1, 1, 0, 0]], dtype=float
        )
        np.testing.assert_array_equal(ad.upsample2x(x).data[0, 0], expected)


class TestMatrixOps:
    def test_softmax_constant(self):
        x = Tensor.full((1, 1, 1, 5), 2.0)
        np.testing.assert_allclose(ad.softmax(x, 3).data, 0.2, atol=1e-15)

    def test_softmax_analytic(self):
        x = t(np.array([0.0, math.log(3)]).reshape(1, 1, 1, 2))
        np.testing.assert_allclose(ad.softmax(x, 3).data[0, 0, 0], [0.25, 0.75], atol=1e-15)

    def test_softmax_rows_sum_to_one(self, rng):
        x = t(rng.normal(size=(2, 3, 4, 5)) * 10)
        s = ad.softmax(x, 3).data.sum(axis=3)
        np.testing.assert_allclose(s, 1.0, atol=1e-12)

    def test_matmul_identity(self, rng):
        a = t(rng.normal(size=(2, 1, 3, 3)))
        eye = t(np.broadcast_to(np.eye(3), (2, 1, 3, 3)).copy())
        np.testing.assert_allclose(ad.matmul(a, eye).data, a.data, atol=1e-15)

    def test_matmul_dim_mismatch(self, rng):
        with pytest.raises(ad.ShapeError):
            ad.matmul(t(rng.normal(size=(1, 1, 2, 3))), t(rng.normal(size=(1, 1, 2, 3))))

    def test_concat_preserves_order(self, rng):
        a, b = rng.normal(size=(1, 2, 2, 2)), rng.normal(size=(1, 3, 2, 2))
        out = ad.concat_channels([t(a), t(b)])
        np.testing.assert_array_equal(out.data[:, :2], a)
        np.testing.assert_array_equal(out.data[:, 2:], b)

    def test_fc_shape_guard(self, rng):
        with pytest.raises(ad.ShapeError):
            ad.fc(t(rng.normal(size=(1, 3, 2, 2))), t(rng.normal(size=(3, 3, 1, 1))))


class TestShift:
    def test_shift_clamps_edges(self):
        x = t(np.arange(9, dtype=float).reshape(1, 1, 3, 3))
        out = ad.shift2d(x, 1, 0).data[0, 0]
        np.testing.assert_array_equal(out, [[3, 4, 5], [6, 7, 8], [6, 7, 8]])

    def test_shift_zero_is_identity(self, rng):
        x = t(rng.normal(size=(1, 2, 3, 3)))
        np.testing.assert_array_equal(ad.shift2d(x, 0, 0).data, x.data)


# ---------------------------------------------------------------------------
# Backward fixtures and properties
# ---------------------------------------------------------------------------


class TestBackward:
    def test_sum_grad_ones(self, rng):
        x = t(rng.normal(size=(2, 3, 2, 2)), rg=True)
        ad.backward(ad.reduce_sum(x))
        np.testing.assert_array_equal(x.grad, np.ones(x.shape))

    def test_sigmoid_grad_quarter(self):
        x = Tensor.zeros((1, 2, 3, 3), requires_grad=True)
        ad.backward(ad.reduce_sum(ad.sigmoid(x)))
        np.testing.assert_allclose(x.grad, 0.25, atol=1e-15)

    def test_non_scalar_rejected(self, rng):
        x = t(rng.normal(size=(1, 1, 2, 2)), rg=True)
        with pytest.raises(ad.ShapeError):
            ad.backward(x)

    def test_accumulation_without_reset(self, rng):
        x = t(rng.normal(size=(1, 1, 2, 2)), rg=True)
        ad.backward(ad.reduce_sum(x))
        ad.backward(ad.reduce_sum(x * 2.0))
        np.testing.assert_allclose(x.grad, 3.0, atol=1e-15)

    def test_linearity_random_masks(self, rng):
        # Backward of a sum equals accumulated backwards of masked partial sums.
        x = rng.normal(size=(1, 2, 3, 3))
        mask = (rng.random((1, 2, 3, 3)) > 0.5).astype(float)

        a = t(x, rg=True)
        ad.backward(ad.reduce_sum(ad.tanh(a)))
        full = a.grad.copy()

        b = t(x, rg=True)
        y = ad.tanh(b)
        ad.backward(ad.reduce_sum(ad.mul(y, t(mask))))
        ad.backward(ad.reduce_sum(ad.mul(y, t(1.0 - mask))))
        np.testing.assert_allclose(b.grad, full, atol=1e-12)

    def test_each_node_visited_once(self, rng):
        # Diamond graph: y used twice; grad of x must be exactly 2*cos(x)... here
        # linear ops keep it exact: loss = sum(y + y) with y = 3x.
        x = t(rng.normal(size=(1, 1, 2, 2)), rg=True)
        y = x * 3.0
        ad.backward(ad.reduce_sum(ad.add(y, y)))
        np.testing.assert_array_equal(x.grad, np.full(x.shape, 6.0))

    def test_graph_topological_order(self, rng):
        x = t(rng.normal(size=(1, 1, 2, 2)), rg=True)
        z = ad.mul(ad.sigmoid(x), ad.tanh(x))
        g = ad.Graph.from_root(ad.reduce_sum(z))
        ids = [n.node_id for n in g.nodes]
        assert ids == sorted(ids)
        for node in g.nodes:
            for pid in node.input_ids:
                assert pid < node.node_id

    def test_forward_bit_reproducible(self, rng):
        x = rng.normal(size=(1, 3, 4, 4))
        k = rng.normal(size=(2, 3, 3, 3))

        def run():
            return ad.conv2d(ad.sigmoid(t(x)), t(k), None, 1, 1).data

        assert np.array_equal(run(), run())


def _fd_closure_check(closure, shapes, rng, tol=1e-4, step=1e-5):
    inputs = [rng.normal(size=s) for s in shapes]
    report = ad.grad_check(closure, inputs, step=step, tol=tol)
    assert report.deterministic
    assert report.max_rel_err <= tol, f"max rel err {report.max_rel_err}"


class TestGradCheck:
    def test_linear_nearly_exact(self, rng):
        report = ad.grad_check(
            lambda x: ad.reduce_sum(x * 3.0), [rng.normal(size=(1, 1, 2, 2))]
        )
        assert report.max_rel_err < 1e-9

    def test_tanh_chain(self, rng):
        report = ad.grad_check(
            lambda x: ad.reduce_sum(ad.tanh(ad.tanh(x))),
            [rng.normal(size=(1, 1, 3, 3))],
        )
        assert report.max_rel_err <= 1e-6

    def test_corrupted_backward_detected(self, rng):
        ad._set_backward_corruption("tanh", 1.05)
        try:
            report = ad.grad_check(
                lambda x: ad.reduce_sum(ad.tanh(x)), [rng.normal(size=(1, 1, 2, 2))]
            )
            assert report.max_rel_err > 1e-2
            assert not report.passed
        finally:
            ad._set_backward_corruption(None)

    def test_nondeterminism_detected(self, rng):
        state = {"n": 0}

        def closure(x):
            state["n"] += 1
            return ad.reduce_sum(x * float(state["n"]))

        report = ad.grad_check(closure, [rng.normal(size=(1, 1, 1, 2))])
        assert not report.deterministic
        assert not report.passed

    @pytest.mark.parametrize(
        "name,closure,shapes",
        [
            ("conv2d", lambda x, k, b: ad.reduce_sum(ad.conv2d(x, k, b, 1, 1)),
             [(1, 2, 4, 4), (3, 2, 3, 3), (1, 3, 1, 1)]),
            ("conv2d_s2", lambda x, k: ad.reduce_sum(ad.conv2d(x, k, None, 2, 1)),
             [(1, 2, 4, 4), (2, 2, 3, 3)]),
            ("sigmoid", lambda x: ad.reduce_sum(ad.sigmoid(x)), [(1, 2, 3, 3)]),
            ("tanh", lambda x: ad.reduce_sum(ad.mul(ad.tanh(x), ad.tanh(x))), [(1, 2, 3, 3)]),
            ("relu", lambda x: ad.reduce_sum(ad.relu(x)), [(1, 2, 3, 3)]),
            ("softplus", lambda x: ad.reduce_sum(ad.softplus(x)), [(1, 1, 3, 3)]),
            ("gap", lambda x: ad.reduce_sum(ad.mul(ad.pool(x, "gap"), ad.pool(x, "gap"))),
             [(2, 3, 4, 4)]),
            ("avg3x3s2", lambda x: ad.reduce_sum(ad.tanh(ad.pool(x, "avg3x3s2"))), [(1, 2, 4, 6)]),
            ("channel_mean", lambda x: ad.reduce_sum(ad.tanh(ad.pool(x, "channel_mean"))),
             [(1, 4, 3, 3)]),
            ("upsample2x", lambda x: ad.reduce_sum(ad.tanh(ad.upsample2x(x))), [(1, 2, 3, 3)]),
            ("matmul", lambda a, b: ad.reduce_sum(ad.tanh(ad.matmul(a, b))),
             [(1, 1, 3, 4), (1, 1, 4, 2)]),
            ("softmax", lambda x: ad.reduce_sum(ad.mul(ad.softmax(x, 1), ad.softmax(x, 1))),
             [(1, 4, 2, 2)]),
            ("div", lambda a, b: ad.reduce_sum(ad.div(a, ad.affine(ad.mul(b, b), 1.0, 1.0))),
             [(1, 1, 3, 3), (1, 1, 3, 3)]),
            ("sqrt", lambda x: ad.reduce_sum(ad.sqrt(ad.affine(ad.mul(x, x), 1.0, 0.5))),
             [(1, 1, 3, 3)]),
            ("smooth_l1", lambda x: ad.reduce_sum(ad.smooth_l1(x)), [(1, 1, 4, 4)]),
            ("shift2d", lambda x: ad.reduce_sum(ad.tanh(ad.shift2d(x, 1, -1))), [(1, 2, 4, 4)]),
            ("concat_slice", lambda a, b: ad.reduce_sum(
                ad.slice_channels(ad.concat_channels([a, b]), 1, 3)),
             [(1, 2, 2, 2), (1, 2, 2, 2)]),
            ("broadcast_mul", lambda x, g: ad.reduce_sum(ad.mul(x, ad.sigmoid(g))),
             [(1, 3, 2, 2), (1, 3, 1, 1)]),
            ("fc", lambda x, w, b: ad.reduce_sum(ad.tanh(ad.fc(x, w, b))),
             [(2, 3, 1, 1), (4, 3, 1, 1), (1, 4, 1, 1)]),
        ],
    )
    def test_operator_fd(self, name, closure, shapes, rng):
        _fd_closure_check(closure, shapes, rng)

    def test_composite_random_trials(self, rng):
        # Random composites of the op set vs finite differences.
        for _ in range(10):
            def closure(x, k):
                y = ad.conv2d(ad.sigmoid(x), k, None, 1, 1)
                z = ad.mul(ad.tanh(y), ad.softmax(y, 1))
                return ad.reduce_sum(ad.pool(z, "gap"))

            _fd_closure_check(closure, [(1, 2, 4, 4), (2, 2, 3, 3)], rng)


# ---------------------------------------------------------------------------
# Hypothesis properties
# ---------------------------------------------------------------------------


@given(st.integers(2, 6), st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
def test_softmax_sums_property(length, chans, seed):
    g = np.random.default_rng(seed)
    x = Tensor(g.normal(size=(1, chans, 1, length)) * 5)
    s = ad.softmax(x, 3).data.sum(axis=3)
    assert np.all(np.abs(s - 1.0) <= 1e-12)


@given(st.integers(0, 2 ** 31 - 1))
def test_relu_idempotent(seed):
    g = np.random.default_rng(seed)
    x = Tensor(g.normal(size=(1, 2, 3, 3)))
    once = ad.relu(x).data
    twice = ad.relu(ad.relu(x)).data
    assert np.array_equal(once, twice)


@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 3))
def test_upsample_pool_roundtrip(seed, c):
    g = np.random.default_rng(seed)
    x = Tensor(g.normal(size=(1, c, 3, 3)))
    up = ad.upsample2x(x).data
    down = up.reshape(1, c, 3, 2, 3, 2).mean(axis=(3, 5))
    assert np.array_equal(down, x.data)


class TestParamStore:
    def test_unique_names(self):
        store = ad.ParamStore()
        store.zeros("a/w", (1, 1, 1, 1))
        with pytest.raises(ValueError):
            store.zeros("a/w", (1, 1, 1, 1))

    def test_ordered_params(self):
        store = ad.ParamStore()
        names = ["m/one", "m/two", "m/three"]
        for n in names:
            store.zeros(n, (1, 1, 1, 1))
        assert [p.name for p in store.params()] == names
