"""Cross-spectral refinement: gate fixtures, oracle, gradients."""

import numpy as np
import pytest

from ossdet import autodiff as ad
from ossdet.autodiff import ParamStore, ShapeError, Tensor
from ossdet.cafr import CAFR

from oracles import cafr_gates_loop


def make_cafr(channels=3, seed=0, softmax_axis="row"):
    store = ParamStore(np.random.default_rng(seed))
    return store, CAFR(store, channels, softmax_axis=softmax_axis)


class TestGates:
    def test_c1_scalar_reduction(self):
        _, unit = make_cafr(channels=1)
        v_hi = Tensor(np.full((1, 1, 1, 1), 0.8))
        v_lo = Tensor(np.full((1, 1, 1, 1), -0.4))
        attn, w_hi, w_lo = unit.gates(v_hi, v_lo)
        assert attn.data.reshape(()) == 1.0
        assert w_hi.item() == 0.8
        assert w_lo.item() == -0.4

    def test_zero_hi_vector_uniform_rows(self, rng):
        _, unit = make_cafr(channels=4)
        v_hi = Tensor.zeros((1, 4, 1, 1))
        v_lo = Tensor(rng.normal(size=(1, 4, 1, 1)))
        attn, w_hi, w_lo = unit.gates(v_hi, v_lo)
        np.testing.assert_allclose(attn.data[0, 0], 0.25, atol=1e-15)
        np.testing.assert_allclose(w_hi.data, 0.0, atol=1e-15)
        np.testing.assert_allclose(w_lo.data.reshape(4),
                                   np.full(4, v_lo.data.mean()), atol=1e-12)

    def test_rows_sum_to_one(self, rng):
        _, unit = make_cafr(channels=5)
        attn, _, _ = unit.gates(Tensor(rng.normal(size=(2, 5, 1, 1))),
                                Tensor(rng.normal(size=(2, 5, 1, 1))))
        np.testing.assert_allclose(attn.data.sum(axis=3), 1.0, atol=1e-12)
        assert np.all((attn.data > 0) & (attn.data < 1))

    def test_matches_loop_oracle_c3(self, rng):
        for axis in ("row", "column"):
            _, unit = make_cafr(channels=3, softmax_axis=axis)
            v_hi = rng.normal(size=3)
            v_lo = rng.normal(size=3)
            attn, w_hi, w_lo = unit.gates(Tensor(v_hi.reshape(1, 3, 1, 1)),
                                          Tensor(v_lo.reshape(1, 3, 1, 1)))
            a_ref, hi_ref, lo_ref = cafr_gates_loop(v_hi, v_lo,
                                                    column_softmax=(axis == "column"))
            np.testing.assert_allclose(attn.data[0, 0], a_ref, atol=1e-12)
            np.testing.assert_allclose(w_hi.data.reshape(3), hi_ref, atol=1e-12)
            np.testing.assert_allclose(w_lo.data.reshape(3), lo_ref, atol=1e-12)

    def test_column_softmax_columns_sum_to_one(self, rng):
        _, unit = make_cafr(channels=4, softmax_axis="column")
        attn, _, _ = unit.gates(Tensor(rng.normal(size=(1, 4, 1, 1))),
                                Tensor(rng.normal(size=(1, 4, 1, 1))))
        np.testing.assert_allclose(attn.data.sum(axis=2), 1.0, atol=1e-12)


class TestRefine:
    def test_resolution_mismatch_rejected(self, rng):
        _, unit = make_cafr(channels=2)
        hi = Tensor(rng.normal(size=(1, 2, 4, 4)))
        with pytest.raises(ShapeError):
            unit(hi, Tensor(rng.normal(size=(1, 2, 4, 4))))

    def test_output_shape_matches_high_level(self, rng):
        _, unit = make_cafr(channels=3)
        hi = Tensor(rng.normal(size=(2, 3, 4, 4)))
        lo = Tensor(rng.normal(size=(2, 3, 8, 8)))
        assert unit(hi, lo).shape == hi.shape

    def test_full_composition_explicit(self, rng):
        # Rebuild the block's arithmetic with plain numpy on one sample.
        _, unit = make_cafr(channels=2, seed=4)
        hi = rng.normal(size=(1, 2, 2, 2))
        lo = rng.normal(size=(1, 2, 4, 4))
        out = unit(Tensor(hi), Tensor(lo))

        aligned = unit.align(Tensor(lo)).data
        v_hi = unit.fc_hi(ad.pool(Tensor(hi), "gap")).data
        v_lo = unit.fc_lo(ad.pool(Tensor(aligned), "gap")).data
        _, hi_ref, lo_ref = cafr_gates_loop(v_hi.reshape(2), v_lo.reshape(2))
        ref = hi_ref.reshape(1, 2, 1, 1) * hi + lo_ref.reshape(1, 2, 1, 1) * aligned
        np.testing.assert_allclose(out.data, ref, atol=1e-12)

    def test_gradient_matches_fd(self, rng):
        def closure(hi, lo):
            store = ParamStore(np.random.default_rng(9))
            unit = CAFR(store, 2)
            return ad.reduce_sum(ad.tanh(unit(hi, lo)))

        report = ad.grad_check(closure, [rng.normal(size=(1, 2, 2, 2)),
                                         rng.normal(size=(1, 2, 4, 4))])
        assert report.max_rel_err <= 1e-4

    def test_params_receive_gradients(self, rng):
        store, unit = make_cafr(channels=2)
        hi = Tensor(rng.normal(size=(1, 2, 2, 2)), requires_grad=True)
        lo = Tensor(rng.normal(size=(1, 2, 4, 4)), requires_grad=True)
        ad.backward(ad.reduce_sum(ad.mul(unit(hi, lo), unit(hi, lo))))
        for p in store.params():
            assert p.grad is not None, p.name
