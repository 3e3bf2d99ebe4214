import json
import os

import numpy as np
import pytest
import torch

from blindsr import datasets, training
from blindsr import degrade as deg
from blindsr.dpan import ModelConfig
from blindsr.kernels import make_isotropic_gaussian


def tiny_model_config():
    return ModelConfig(scale=2, width=8, groups=1, blocks_per_group=1, cr_width=4,
                       estimator_sizes=(5, 3, 1), estimator_channels=8, estimator_depth=2)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tinyset")
    imgs = datasets.make_synthetic_images(8, 64, seed=5)
    manifest = datasets.synthesize_dataset(
        [(f"img{i}", im) for i, im in enumerate(imgs)], root,
        scale=2, protocol="isotropic", seed=1,
    )
    return datasets.load_manifest(manifest)


class TestAugment:
    def test_identity_op_leaves_pair_unchanged(self):
        rng = np.random.default_rng(0)
        x, y = rng.uniform(size=(2, 8, 8, 3))
        a = training.dihedral(x, 0)
        np.testing.assert_array_equal(a, x)

    def test_pair_gets_same_transform(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(size=(16, 16, 3))
        y = x[::2, ::2]
        for seed in range(12):
            xa, ya = training.augment(x, y, seed)
            # decimation commutes with the dihedral group on aligned grids
            # only up to phase; just verify both received the same op by
            # matching against every candidate
            matched = [
                op for op in training.DIHEDRAL_OPS
                if np.array_equal(xa, training.dihedral(x, op))
                and np.array_equal(ya, training.dihedral(y, op))
            ]
            assert matched

    def test_two_horizontal_flips_compose_to_identity(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(size=(10, 10))
        flipped = training.dihedral(training.dihedral(x, 4), 4)
        np.testing.assert_array_equal(flipped, x)

    def test_isotropic_kernel_invariant_under_all_ops(self):
        k = make_isotropic_gaussian(9, 1.3).weights
        for op in training.DIHEDRAL_OPS:
            np.testing.assert_allclose(training.dihedral(k, op), k, atol=1e-12)

    def test_rejects_bad_op(self):
        with pytest.raises(ValueError):
            training.dihedral(np.zeros((4, 4)), 8)


class TestJointLoss:
    def test_zero_at_exact_targets(self):
        x = torch.rand(2, 3, 8, 8)
        k = torch.rand(2, 5, 5)
        total, image_l1, kernel_l1 = training.joint_loss(x, x, k, k)
        assert float(total) == 0.0 and float(image_l1) == 0.0 and float(kernel_l1) == 0.0

    def test_terms_are_separable(self):
        # the image-term gradient is unaffected by the kernel estimate
        sr = torch.rand(1, 3, 6, 6, requires_grad=True)
        hr = torch.rand(1, 3, 6, 6)
        target = torch.rand(1, 5, 5)
        grads = []
        for kernel in (torch.rand(1, 5, 5), torch.rand(1, 5, 5) * 10):
            total, _, _ = training.joint_loss(sr, hr, kernel, target)
            grads.append(torch.autograd.grad(total, sr)[0])
        assert torch.equal(grads[0], grads[1])

    def test_hand_built_case(self):
        # 2x2 image pair and 1x1 kernels, verified by direct summation
        sr = torch.tensor([[[[0.2, 0.4], [0.6, 0.8]]]])
        hr = torch.tensor([[[[0.1, 0.4], [0.9, 0.8]]]])
        khat = torch.tensor([[[0.7]]])
        ktgt = torch.tensor([[[1.0]]])
        total, image_l1, kernel_l1 = training.joint_loss(sr, hr, khat, ktgt)
        assert float(image_l1) == pytest.approx((0.1 + 0.0 + 0.3 + 0.0) / 4, abs=1e-7)
        assert float(kernel_l1) == pytest.approx(0.3, abs=1e-7)
        assert float(total) == pytest.approx(0.1 + 0.3, abs=1e-7)

    def test_nonnegative(self):
        for _ in range(5):
            sr, hr = torch.rand(2, 1, 3, 4, 4).unbind(0)
            k1, k2 = torch.rand(2, 1, 3, 3).unbind(0)
            total, _, _ = training.joint_loss(sr, hr, k1, k2)
            assert float(total) >= 0.0


class TestSchedule:
    def test_halving_arithmetic(self):
        cfg = training.TrainConfig(lr_init=4e-4, lr_halving_interval=100)
        assert training.learning_rate_at(cfg, 0) == 4e-4
        assert training.learning_rate_at(cfg, 99) == 4e-4
        assert training.learning_rate_at(cfg, 100) == 2e-4
        assert training.learning_rate_at(cfg, 200) == pytest.approx(1e-4)

    def test_default_config_echoes_full_protocol(self):
        cfg = training.TrainConfig()
        assert cfg.batch_size == 64
        assert cfg.lr_patch == 64
        assert cfg.lr_init == 4e-4
        assert (cfg.adam_beta1, cfg.adam_beta2) == (0.9, 0.99)
        assert cfg.iterations == 500_000
        assert cfg.lr_halving_interval == 200_000


class TestSampleDrawing:
    def test_patch_consistency_with_classical_degradation(self, tiny_dataset):
        cfg = training.TrainConfig(iterations=1, batch_size=1, lr_patch=16, scale=2, seed=3)
        cache = training._SampleCache(tiny_dataset, kernel_target_size=9)
        for it in range(4):
            x, y, target, spec = training._draw_sample(cache, cfg, it, 0)
            expected = deg.classical_degrade(x, spec)
            np.testing.assert_array_equal(y, expected)

    def test_deterministic_across_calls(self, tiny_dataset):
        cfg = training.TrainConfig(iterations=1, batch_size=1, lr_patch=16, scale=2, seed=3)
        cache = training._SampleCache(tiny_dataset, kernel_target_size=9)
        a = training._draw_sample(cache, cfg, 7, 2)
        b = training._draw_sample(cache, cfg, 7, 2)
        for left, right in zip(a[:3], b[:3]):
            np.testing.assert_array_equal(left, right)


class TestTrainLoop:
    def test_deterministic_loss_trajectory(self, tiny_dataset, tmp_path):
        cfg = training.TrainConfig(iterations=12, batch_size=2, lr_patch=16, scale=2,
                                   seed=7, val_interval=6, log_interval=1, val_count=2)
        res_a = training.train(cfg, tiny_model_config(), tiny_dataset, tmp_path / "a")
        res_b = training.train(cfg, tiny_model_config(), tiny_dataset, tmp_path / "b")
        losses_a = [h["loss"] for h in res_a["history"] if h["event"] == "train"]
        losses_b = [h["loss"] for h in res_b["history"] if h["event"] == "train"]
        assert len(losses_a) == 12
        np.testing.assert_allclose(losses_a, losses_b, rtol=1e-4)

    def test_writes_log_and_checkpoint(self, tiny_dataset, tmp_path):
        cfg = training.TrainConfig(iterations=4, batch_size=2, lr_patch=16, scale=2,
                                   seed=1, val_interval=2, log_interval=2, val_count=2)
        res = training.train(cfg, tiny_model_config(), tiny_dataset, tmp_path / "run")
        assert os.path.exists(res["checkpoint"])
        lines = [json.loads(l) for l in open(res["log"])]
        assert any(e["event"] == "train" for e in lines)
        assert any(e["event"] == "validation" for e in lines)
        from blindsr.dpan import load_model

        model = load_model(res["checkpoint"])
        assert model.cfg == tiny_model_config()

    def test_divergence_aborts_with_snapshot(self, tiny_dataset, tmp_path):
        cfg = training.TrainConfig(iterations=40, batch_size=2, lr_patch=16, scale=2, seed=0,
                                   lr_init=1e6, grad_clip=0.0, val_interval=1000,
                                   log_interval=1000, val_count=0)
        with pytest.raises(training.TrainingDiverged):
            training.train(cfg, tiny_model_config(), tiny_dataset, tmp_path / "run", val_records=[])
        assert (tmp_path / "run" / "diverged.pt").exists()

    def test_missing_dataset_file_reports_path(self, tiny_dataset, tmp_path):
        import dataclasses

        broken = [dataclasses.replace(tiny_dataset[0], hr_float_path="/nonexistent/x.npy")]
        cfg = training.TrainConfig(iterations=1, batch_size=1, lr_patch=16, scale=2, val_count=0)
        with pytest.raises(OSError, match="nonexistent"):
            training.train(cfg, tiny_model_config(), broken, tmp_path / "run", val_records=[])
