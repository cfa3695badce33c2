"""Full model assembly, optimizer math, checkpoint round trips."""

import numpy as np
import pytest

from ossdet import autodiff as ad
from ossdet import msi
from ossdet.autodiff import ParamStore, Tensor
from ossdet.config import RunConfig, config_hash, to_kv_text
from ossdet.model import ModelConfig, OSSDet
from ossdet.optim import SGD, load_checkpoint, restore_into, save_checkpoint


@pytest.fixture(scope="module")
def small_model():
    return OSSDet(ModelConfig(bands=8, channels=8, num_classes=3, image_size=64))


@pytest.fixture(scope="module")
def small_scene():
    cfg = msi.GenConfig(image_size=64, num_classes=3, instances_min=2, instances_max=4)
    return msi.generate_scene(cfg, 21)


class TestModel:
    def test_forward_shapes(self, small_model, small_scene):
        cube, _ = small_scene
        out = small_model.forward(Tensor(cube.bands[None].astype(np.float64)))
        assert out["mask"].shape == (1, 1, 16, 16)
        shapes = [t[0].shape for t in out["head"]]
        assert shapes == [(1, 3, 16, 16), (1, 3, 8, 8), (1, 3, 4, 4), (1, 3, 2, 2)]

    def test_loss_finite_and_composed(self, small_model, small_scene):
        cube, ann = small_scene
        x = Tensor(cube.bands[None].astype(np.float64))
        losses = small_model.loss(x, [ann.boxes])
        total = losses["det"].item() + 0.6 * losses["act"].item()
        assert losses["loss"].item() == pytest.approx(total, rel=1e-12)
        assert np.isfinite(losses["loss"].item())

    def test_forward_deterministic(self, small_model, small_scene):
        cube, _ = small_scene
        x = Tensor(cube.bands[None].astype(np.float64))
        a = small_model.forward(x)["mask"].data
        b = small_model.forward(x)["mask"].data
        assert np.array_equal(a, b)

    def test_param_budget(self):
        model = OSSDet(ModelConfig())
        assert model.num_parameters() < 500_000

    def test_untrained_predicts_nothing(self, small_model, small_scene):
        cube, _ = small_scene
        dets = small_model.predict(Tensor(cube.bands[None].astype(np.float64)))
        assert dets == [[]]

    def test_rgb_band_model(self, small_scene):
        cube, ann = small_scene
        model = OSSDet(ModelConfig(bands=3, channels=8, num_classes=3, image_size=64))
        rgb = msi.project_rgb(cube.bands)
        losses = model.loss(Tensor(rgb[None].astype(np.float64)), [ann.boxes])
        assert np.isfinite(losses["loss"].item())


class TestSGD:
    def test_single_step_fixture(self):
        store = ParamStore(np.random.default_rng(0))
        p = store.create("w", np.full((1, 1, 1, 1), 2.0))
        opt = SGD(store.params(), lr=0.1, momentum=0.5, weight_decay=0.0,
                  clip_norm=0.0)
        loss = ad.reduce_sum(ad.mul(p.tensor, p.tensor))  # grad = 2w = 4
        ad.backward(loss)
        opt.step()
        assert p.data.reshape(()) == pytest.approx(2.0 - 0.1 * 4.0)
        opt.zero_grad()
        ad.backward(ad.reduce_sum(ad.mul(p.tensor, p.tensor)))
        opt.step()
        g2 = 2 * 1.6
        v2 = 0.5 * 4.0 + g2
        assert p.data.reshape(()) == pytest.approx(1.6 - 0.1 * v2)

    def test_weight_decay_pulls_to_zero(self):
        store = ParamStore(np.random.default_rng(0))
        p = store.create("w", np.full((1, 1, 1, 1), 1.0))
        opt = SGD(store.params(), lr=0.1, momentum=0.0, weight_decay=0.5,
                  clip_norm=0.0)
        p.tensor.grad = np.zeros_like(p.data)
        opt.step()
        assert p.data.reshape(()) == pytest.approx(1.0 - 0.1 * 0.5)

    def test_clipping_caps_global_norm(self):
        store = ParamStore(np.random.default_rng(0))
        p = store.create("w", np.zeros((1, 1, 1, 2)))
        opt = SGD(store.params(), lr=1.0, momentum=0.0, weight_decay=0.0,
                  clip_norm=1.0)
        p.tensor.grad = np.array([[[[3.0, 4.0]]]])
        norm = opt.step()
        assert norm == pytest.approx(5.0)
        np.testing.assert_allclose(p.data.reshape(2), [-0.6, -0.8], atol=1e-12)


class TestCheckpoint:
    def test_roundtrip_bytes_identical(self, tmp_path):
        model = OSSDet(ModelConfig(bands=3, channels=4, num_classes=2, image_size=64))
        opt = SGD(model.store.params())
        cfg_text = to_kv_text(RunConfig(seed=1))
        p1 = str(tmp_path / "a.ossck")
        p2 = str(tmp_path / "b.ossck")
        save_checkpoint(p1, model.store, opt, 7, cfg_text)
        ckpt = load_checkpoint(p1)
        model2 = OSSDet(ModelConfig(bands=3, channels=4, num_classes=2, image_size=64,
                                    init_seed=99))
        opt2 = SGD(model2.store.params())
        restore_into(model2.store, opt2, ckpt)
        save_checkpoint(p2, model2.store, opt2, 7, ckpt.config_text)
        with open(p1, "rb") as f:
            b1 = f.read()
        with open(p2, "rb") as f:
            b2 = f.read()
        assert b1 == b2

    def test_restore_shape_mismatch_rejected(self, tmp_path):
        m1 = OSSDet(ModelConfig(bands=3, channels=4, num_classes=2, image_size=64))
        path = str(tmp_path / "c.ossck")
        save_checkpoint(path, m1.store, None, 0, "x=1\n")
        m2 = OSSDet(ModelConfig(bands=8, channels=4, num_classes=2, image_size=64))
        with pytest.raises(ValueError, match="shape"):
            restore_into(m2.store, None, load_checkpoint(path))

    def test_iteration_and_hash_preserved(self, tmp_path):
        model = OSSDet(ModelConfig(bands=3, channels=4, num_classes=2, image_size=64))
        cfg = RunConfig(seed=5)
        path = str(tmp_path / "d.ossck")
        save_checkpoint(path, model.store, None, 123, to_kv_text(cfg))
        ckpt = load_checkpoint(path)
        assert ckpt.iteration == 123
        assert ckpt.config_hash() == config_hash(cfg)

    def test_bad_magic_rejected(self, tmp_path):
        path = str(tmp_path / "bad.ossck")
        with open(path, "wb") as f:
            f.write(b"JUNKJUNKJUNK")
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)
