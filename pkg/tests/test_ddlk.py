import numpy as np
import pytest
import torch
from scipy.signal import convolve2d

from blindsr import ddlk
from blindsr.kernels import BlurKernel


def delta_t(size, dtype=torch.float64):
    d = torch.zeros(size, size, dtype=dtype)
    d[size // 2, size // 2] = 1.0
    return d


class TestCollapse:
    def test_stack_of_deltas_collapses_to_delta(self):
        stack = ddlk.FilterStack((delta_t(11), delta_t(7), delta_t(5), delta_t(1)))
        out = ddlk.collapse_filters(stack)
        expected = delta_t(21)
        assert float((out - expected).abs().max()) < 1e-12

    def test_two_boxes_make_triangle(self):
        # oracle: direct nested-loop full convolution
        box = torch.full((3, 3), 1.0 / 9.0, dtype=torch.float64)
        stack = ddlk.FilterStack((box, box))
        out = ddlk.collapse_filters(stack, normalize=False).numpy()
        expected = convolve2d(box.numpy(), box.numpy(), mode="full")
        assert out.shape == (5, 5)
        np.testing.assert_allclose(out, expected, atol=1e-14)

    def test_default_sizes_give_21(self):
        sizes = ddlk.DEFAULT_LAYER_SIZES
        stack = ddlk.FilterStack(tuple(torch.rand(s, s, dtype=torch.float64) for s in sizes))
        assert stack.receptive_field == 21
        assert ddlk.collapse_filters(stack).shape == (21, 21)

    def test_empty_stack_rejected(self):
        with pytest.raises(ValueError):
            ddlk.FilterStack(())

    def test_even_filter_rejected(self):
        with pytest.raises(ValueError):
            ddlk.FilterStack((torch.rand(4, 4),))

    def test_collapse_commutes_with_convolution(self):
        # convolving a signal with the collapsed kernel equals sequential
        # convolution with every filter, on a circular domain
        from blindsr.spectral import psf2otf

        rng = np.random.default_rng(4)
        torch.manual_seed(4)
        sizes = (7, 5, 3)
        filters = tuple(torch.randn(s, s, dtype=torch.float64) for s in sizes)
        stack = ddlk.FilterStack(filters)
        collapsed = ddlk.collapse_filters(stack, normalize=False)

        u = rng.normal(size=(32, 32))
        spectrum = np.fft.fft2(u)
        lhs = np.real(np.fft.ifft2(spectrum * psf2otf(collapsed, (32, 32)).numpy()))
        rhs = u
        for f in filters:
            rhs = np.real(np.fft.ifft2(np.fft.fft2(rhs) * psf2otf(f, (32, 32)).numpy()))
        np.testing.assert_allclose(lhs, rhs, atol=1e-8)

    def test_multilinear_in_each_filter(self):
        torch.manual_seed(0)
        filters = [torch.randn(5, 5, dtype=torch.float64), torch.randn(3, 3, dtype=torch.float64)]
        base = ddlk.collapse_filters(ddlk.FilterStack(tuple(filters)), normalize=False)
        for j, c in [(0, 2.5), (1, -1.25)]:
            scaled = list(filters)
            scaled[j] = scaled[j] * c
            out = ddlk.collapse_filters(ddlk.FilterStack(tuple(scaled)), normalize=False)
            assert float((out - c * base).abs().max()) < 1e-12


class TestKernelLoss:
    def test_zero_at_equal_kernels(self):
        k = torch.rand(9, 9, dtype=torch.float64)
        assert float(ddlk.kernel_loss(k, k)) == 0.0

    def test_delta_vs_uniform_closed_form(self):
        # oracle: brute-force summation gives 2*440/441^2
        delta = delta_t(21)
        uniform = torch.full((21, 21), 1.0 / 441.0, dtype=torch.float64)
        expected = float(np.abs(delta.numpy() - uniform.numpy()).sum() / 441.0)
        assert expected == pytest.approx(2 * 440 / 441**2, abs=1e-15)
        assert float(ddlk.kernel_loss(delta, uniform)) == pytest.approx(expected, abs=1e-15)

    def test_symmetric(self):
        a = torch.rand(9, 9, dtype=torch.float64)
        b = torch.rand(9, 9, dtype=torch.float64)
        assert float(ddlk.kernel_loss(a, b)) == pytest.approx(float(ddlk.kernel_loss(b, a)), abs=1e-15)

    def test_center_aligns_target(self):
        wide = torch.zeros(9, 9, dtype=torch.float64)
        wide[4, 4] = 1.0
        narrow = delta_t(5)
        # target cropped to the estimate's size: losses vanish
        assert float(ddlk.kernel_loss(narrow, wide)) == 0.0


class TestEstimator:
    def small(self):
        cfg = ddlk.EstimatorConfig(layer_sizes=(7, 5, 3, 1), channels=8, depth=3)
        torch.manual_seed(0)
        return ddlk.KernelEstimator(cfg)

    def test_deterministic(self):
        model = self.small()
        y = torch.rand(2, 3, 24, 24)
        a = model.generate_filters(y)
        b = model.generate_filters(y)
        for fa, fb in zip(a.filters, b.filters):
            assert torch.equal(fa, fb)

    def test_initialization_gives_delta_kernel(self):
        model = self.small()
        y = torch.rand(1, 3, 24, 24)
        with torch.no_grad():
            k = model(y)[0]
        expected = delta_t(13, dtype=k.dtype)
        assert float((k - expected).abs().max()) < 1e-6

    def test_estimate_is_collapse_of_generate(self):
        model = self.small()
        # perturb heads so filters are nontrivial
        for head in model.heads:
            torch.nn.init.normal_(head.weight, std=0.05)
        y = torch.rand(2, 3, 24, 24)
        direct = model(y)
        composed = ddlk.collapse_filters(model.generate_filters(y))
        assert torch.equal(direct, composed)

    def test_output_sums_to_one(self):
        model = self.small()
        for head in model.heads:
            torch.nn.init.normal_(head.weight, std=0.05)
        with torch.no_grad():
            k = model(torch.rand(3, 3, 32, 32))
        sums = k.sum(dim=(-2, -1))
        assert float((sums - 1).abs().max()) < 1e-6

    def test_small_image_rejected(self):
        model = self.small()
        with pytest.raises(ValueError):
            model.generate_filters(torch.rand(1, 3, 5, 5))

    def test_numpy_wrapper_returns_blur_kernel(self):
        model = self.small()
        img = np.random.default_rng(0).uniform(size=(24, 24, 3))
        k = ddlk.estimate_blur_kernel(model, img)
        assert isinstance(k, BlurKernel)
        assert k.size == 13
        assert k.total() == pytest.approx(1.0, abs=1e-8)


def fd_grad(fn, param, step=1e-3):
    grad = torch.zeros_like(param)
    flat, gf = param.reshape(-1), grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + step
        fp = fn().item()
        flat[i] = orig - step
        fm = fn().item()
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * step)
    return grad


def grads_close(analytic, numeric, rtol, atol=1e-6):
    return float((analytic - numeric).norm()) <= atol + rtol * max(
        float(analytic.norm()), float(numeric.norm())
    )


class TestGradients:
    def test_loss_of_collapse_matches_finite_differences(self):
        torch.manual_seed(1)
        sizes = (7, 5, 3, 1)
        filters = [torch.randn(s, s, dtype=torch.float64, requires_grad=True) for s in sizes]
        target = torch.rand(13, 13, dtype=torch.float64)
        target /= target.sum()

        def loss_fn():
            return ddlk.kernel_loss(ddlk.collapse_filters(ddlk.FilterStack(tuple(filters))), target)

        analytic = torch.autograd.grad(loss_fn(), filters)
        for param, grad in zip(filters, analytic):
            with torch.no_grad():
                numeric = fd_grad(loss_fn, param)
            assert grads_close(grad, numeric, rtol=1e-4)
