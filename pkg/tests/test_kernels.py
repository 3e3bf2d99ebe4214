import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blindsr.kernels import (
    BlurKernel,
    gaussian8_set,
    gaussian8_widths,
    load_kernel,
    load_kernel_binary,
    load_kernel_text,
    make_anisotropic_gaussian,
    make_isotropic_gaussian,
    perturb_multiplicative,
    sample_training_kernel,
    save_kernel_binary,
    save_kernel_text,
)

odd_sizes = st.integers(min_value=1, max_value=15).map(lambda n: 2 * n + 1)
sigmas = st.floats(min_value=0.1, max_value=6.0, allow_nan=False)
angles = st.floats(min_value=-math.pi, max_value=math.pi, allow_nan=False)


class TestIsotropicGaussian:
    def test_tiny_sigma_is_numerically_a_delta(self):
        k = make_isotropic_gaussian(21, 0.175)
        assert k.weights[10, 10] >= 0.999

    def test_visual_test_width(self):
        k = make_isotropic_gaussian(21, 2.6)
        assert k.size == 21
        assert k.total() == pytest.approx(1.0, abs=1e-12)

    def test_matches_outer_product_of_1d_gaussian(self):
        # independent oracle: brute-force evaluation on the 5x5 grid
        k = make_isotropic_gaussian(5, 1.0)
        g = np.exp(-np.arange(-2.0, 3.0) ** 2 / 2.0)
        expected = np.outer(g, g)
        expected /= expected.sum()
        np.testing.assert_allclose(k.weights, expected, atol=1e-14)

    def test_symmetries(self):
        k = make_isotropic_gaussian(9, 1.7).weights
        np.testing.assert_allclose(k, np.rot90(k), atol=1e-15)
        np.testing.assert_allclose(k, k[::-1], atol=1e-15)
        np.testing.assert_allclose(k, k[:, ::-1], atol=1e-15)

    @pytest.mark.parametrize("size", [0, 2, 4, -3])
    def test_rejects_bad_sizes(self, size):
        with pytest.raises(ValueError):
            make_isotropic_gaussian(size, 1.0)

    @pytest.mark.parametrize("sigma", [0.0, -1.0])
    def test_rejects_bad_sigma(self, sigma):
        with pytest.raises(ValueError):
            make_isotropic_gaussian(5, sigma)

    def test_larger_sigma_spreads_center_weight(self):
        centers = [make_isotropic_gaussian(9, s).weights[4, 4] for s in (0.5, 1.0, 2.0, 4.0)]
        assert all(a > b for a, b in zip(centers, centers[1:]))


class TestAnisotropicGaussian:
    @given(sigma=sigmas, theta=angles)
    @settings(max_examples=40, deadline=None)
    def test_equal_widths_reduce_to_isotropic(self, sigma, theta):
        a = make_anisotropic_gaussian(11, sigma, sigma, theta)
        b = make_isotropic_gaussian(11, sigma)
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-12)

    def test_axis_swap_equals_quarter_turn(self):
        a = make_anisotropic_gaussian(31, 3.0, 1.0, 0.0)
        b = make_anisotropic_gaussian(31, 1.0, 3.0, math.pi / 2)
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-12)

    def test_empirical_covariance_matches_request(self):
        # oracle: second moments by direct summation over the grid
        sigma1, sigma2, theta = 4.0, 1.5, math.pi / 6
        k = make_anisotropic_gaussian(31, sigma1, sigma2, theta).weights
        half = 15
        u, v = np.meshgrid(np.arange(-half, half + 1), np.arange(-half, half + 1), indexing="xy")
        emp = np.array([
            [(k * u * u).sum(), (k * u * v).sum()],
            [(k * u * v).sum(), (k * v * v).sum()],
        ])
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        expected = rot @ np.diag([sigma1**2, sigma2**2]) @ rot.T
        np.testing.assert_allclose(emp, expected, rtol=0.02)

    def test_rejects_nonpositive_widths(self):
        with pytest.raises(ValueError):
            make_anisotropic_gaussian(11, 2.0, 0.0, 0.1)


class TestPerturbation:
    def test_zero_amplitude_is_identity(self):
        k = make_isotropic_gaussian(9, 1.2)
        out = perturb_multiplicative(k, 0.0, seed=5)
        np.testing.assert_array_equal(out.weights, k.weights)

    def test_deterministic_given_seed(self):
        k = make_isotropic_gaussian(9, 1.2)
        a = perturb_multiplicative(k, 0.25, seed=42)
        b = perturb_multiplicative(k, 0.25, seed=42)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_delta_stays_delta(self):
        out = perturb_multiplicative(BlurKernel.delta(7), 0.25, seed=7)
        assert out.weights[3, 3] == pytest.approx(1.0, abs=1e-15)
        assert out.total() == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("amplitude", [-0.1, 1.0, 1.5])
    def test_rejects_bad_amplitude(self, amplitude):
        with pytest.raises(ValueError):
            perturb_multiplicative(BlurKernel.delta(7), amplitude, seed=0)


class TestGaussian8:
    def test_scale4_widths(self):
        np.testing.assert_allclose(
            gaussian8_widths(4), [1.80, 2.00, 2.20, 2.40, 2.60, 2.80, 3.00, 3.20], atol=1e-12
        )

    def test_scale2_endpoints(self):
        widths = gaussian8_widths(2)
        assert widths[0] == pytest.approx(0.80)
        assert widths[-1] == pytest.approx(1.60)

    def test_scale3_kernels_valid(self):
        kernels = gaussian8_set(3)
        assert len(kernels) == 8
        for k in kernels:
            assert k.size == 21
            assert k.total() == pytest.approx(1.0, abs=1e-8)

    def test_rejects_unknown_scale(self):
        with pytest.raises(ValueError):
            gaussian8_set(5)


class TestTrainingKernelSampling:
    def test_deterministic(self):
        a = sample_training_kernel("isotropic", 4, seed=1)
        b = sample_training_kernel("isotropic", 4, seed=1)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_anisotropic_sizes(self):
        assert sample_training_kernel("anisotropic", 4, seed=0).size == 31
        assert sample_training_kernel("anisotropic", 2, seed=0).size == 11

    def test_anisotropic_scale3_unsupported(self):
        with pytest.raises(ValueError):
            sample_training_kernel("anisotropic", 3, seed=0)

    def test_unknown_protocol(self):
        with pytest.raises(ValueError):
            sample_training_kernel("motion", 4, seed=0)

    def test_isotropic_width_distribution_covers_range(self):
        # oracle: histogram of drawn widths over many seeds
        widths = np.asarray([sample2_width(seed) for seed in range(10_000)])
        assert widths.min() < 0.25
        assert widths.max() > 1.95
        hist, _ = np.histogram(widths, bins=10, range=(0.2, 2.0))
        assert hist.min() > 500  # roughly uniform


def sample2_width(seed):
    from blindsr.kernels import sample_training_spec

    return sample_training_spec("isotropic", 2, seed).sigma1


class TestBlurKernelInvariants:
    @given(size=odd_sizes, sigma=sigmas, sigma2=sigmas, theta=angles,
           amplitude=st.floats(min_value=0.0, max_value=0.9), seed=st.integers(0, 2**31))
    @settings(max_examples=150, deadline=None)
    def test_synthesized_kernels_satisfy_invariants(self, size, sigma, sigma2, theta, amplitude, seed):
        k = make_anisotropic_gaussian(size, sigma, sigma2, theta)
        k = perturb_multiplicative(k, amplitude, seed)
        assert k.size % 2 == 1
        assert np.all(k.weights >= 0)
        assert k.total() == pytest.approx(1.0, abs=1e-8)

    def test_rejects_even_and_nonsquare(self):
        with pytest.raises(ValueError):
            BlurKernel(np.ones((4, 4)))
        with pytest.raises(ValueError):
            BlurKernel(np.ones((3, 5)))
        with pytest.raises(ValueError):
            BlurKernel(np.full((3, 3), np.nan))


class TestKernelFiles:
    def test_text_round_trip_is_exact(self, tmp_path):
        k = make_anisotropic_gaussian(11, 2.3, 0.9, 0.4)
        path = tmp_path / "k.txt"
        save_kernel_text(path, k)
        loaded = load_kernel_text(path)
        np.testing.assert_array_equal(loaded.weights, k.weights)
        header = path.read_text().splitlines()[0]
        assert header == "DCLSK1 11"

    def test_binary_round_trip(self, tmp_path):
        k = make_isotropic_gaussian(21, 1.8)
        path = tmp_path / "k.bin"
        save_kernel_binary(path, k)
        loaded = load_kernel_binary(path)
        np.testing.assert_allclose(loaded.weights, k.weights, atol=1e-7)
        # second round trip through float32 is exact
        save_kernel_binary(path, loaded)
        again = load_kernel_binary(path)
        np.testing.assert_array_equal(again.weights, loaded.weights)

    def test_autodetect_formats(self, tmp_path):
        k = make_isotropic_gaussian(7, 1.1)
        save_kernel_text(tmp_path / "a.txt", k)
        save_kernel_binary(tmp_path / "b.bin", k)
        assert load_kernel(tmp_path / "a.txt").size == 7
        assert load_kernel(tmp_path / "b.bin").size == 7

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(b"not a kernel at all")
        with pytest.raises(ValueError):
            load_kernel(path)
