"""Degradation pipeline: blur, downsample, noise, and the LR-space kernel.

The forward model takes an HR image x, convolves it circularly with an HR
blur kernel, downsamples by s, and adds white Gaussian noise. The same
degradation can be rewritten on the LR grid as convolution of the plainly
downsampled image with a derived LR-space kernel; `reformulate_kernel`
computes that kernel by regularized spectral division.

Circular boundary handling is used everywhere because the frequency-domain
identities behind the reformulation are exact only under it.
"""

from dataclasses import dataclass

import numpy as np
import torch

from .images import bt601_luminance, channel_count, validate_image
from .kernels import BlurKernel
from .seeds import rng_for

DOWNSAMPLERS = ("decimate", "bicubic")


@dataclass(frozen=True)
class DegradationSpec:
    """Full recipe for one LR synthesis: y = (x conv kernel) down_s + noise."""

    scale: int
    kernel: BlurKernel
    noise_sigma: float = 0.0  # std on the 0-255 sample scale
    downsampler: str = "decimate"
    seed: int = 0

    def __post_init__(self):
        if self.scale not in (1, 2, 3, 4):
            raise ValueError(f"scale must be in {{1,2,3,4}}, got {self.scale}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.downsampler not in DOWNSAMPLERS:
            raise ValueError(f"downsampler must be one of {DOWNSAMPLERS}")


@dataclass(frozen=True)
class ReformulationConfig:
    """Settings for the regularized spectral division producing the LR kernel.

    epsilon is interpreted relative to the mean spectral power of the
    downsampled image by default (mode 'relative'), which makes the result
    invariant to rescaling the image intensity; 'absolute' uses it as-is.
    """

    epsilon: float = 1e-2
    output_size: int = 21
    epsilon_mode: str = "relative"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.output_size < 1 or self.output_size % 2 == 0:
            raise ValueError("output_size must be a positive odd integer")
        if self.epsilon_mode not in ("relative", "absolute"):
            raise ValueError("epsilon_mode must be 'relative' or 'absolute'")


def center_crop_to_multiple(img: np.ndarray, s: int) -> np.ndarray:
    """Center-crop so both spatial dimensions are divisible by s."""
    img = validate_image(img)
    h, w = img.shape[:2]
    nh, nw = (h // s) * s, (w // s) * s
    if nh == 0 or nw == 0:
        raise ValueError(f"image {img.shape} too small to crop to a multiple of {s}")
    top, left = (h - nh) // 2, (w - nw) // 2
    return img[top : top + nh, left : left + nw]


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bicubic resampling with antialiasing disabled (both directions)."""
    img = validate_image(img)
    arr = img[:, :, None] if img.ndim == 2 else img
    t = torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None]
    out = torch.nn.functional.interpolate(
        t, size=(out_h, out_w), mode="bicubic", align_corners=False, antialias=False
    )
    res = out[0].numpy().transpose(1, 2, 0)
    return res[:, :, 0] if img.ndim == 2 else res


def downsample(img: np.ndarray, s: int, mode: str = "decimate") -> np.ndarray:
    """Shrink by integer factor s: keep every s-th sample, or bicubic resample."""
    img = validate_image(img)
    if s < 1 or int(s) != s:
        raise ValueError(f"scale must be a positive integer, got {s}")
    s = int(s)
    h, w = img.shape[:2]
    if h % s or w % s:
        raise ValueError(f"image dimensions {h}x{w} not divisible by scale {s}")
    if mode == "decimate":
        return img[::s, ::s] if img.ndim == 2 else img[::s, ::s, :]
    if mode == "bicubic":
        return img if s == 1 else bicubic_resize(img, h // s, w // s)
    raise ValueError(f"unknown downsampling mode {mode!r}")


def circular_convolve(img: np.ndarray, kernel: BlurKernel) -> np.ndarray:
    """2D convolution with circular (periodic) boundary, per channel."""
    img = validate_image(img)
    h, w = img.shape[:2]
    if kernel.size > h or kernel.size > w:
        raise ValueError(f"kernel size {kernel.size} exceeds image {h}x{w}")
    otf = np.fft.fft2(_pad_kernel_centered(kernel.weights, (h, w)))
    if img.ndim == 2:
        return np.real(np.fft.ifft2(np.fft.fft2(img) * otf))
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = np.real(np.fft.ifft2(np.fft.fft2(img[:, :, c]) * otf))
    return out


def _pad_kernel_centered(weights: np.ndarray, shape) -> np.ndarray:
    """Zero-pad kernel to `shape` with its center moved to index (0, 0)."""
    kh, kw = weights.shape
    padded = np.zeros(shape, dtype=np.float64)
    padded[:kh, :kw] = weights
    return np.roll(padded, (-(kh // 2), -(kw // 2)), axis=(0, 1))


def classical_degrade(img: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """Blur with the HR kernel, downsample by spec.scale, add Gaussian noise.

    The image is center-cropped first so the scale divides its dimensions.
    Noise std is spec.noise_sigma / 255 in [0,1] units, i.i.d. per sample,
    deterministic given spec.seed.
    """
    img = center_crop_to_multiple(img, spec.scale)
    blurred = circular_convolve(img, spec.kernel)
    lr = downsample(blurred, spec.scale, spec.downsampler)
    return _add_noise(lr, spec.noise_sigma, spec.seed)


def apply_lr_degradation(
    lr_base: np.ndarray, kernel: BlurKernel, noise_sigma: float = 0.0, seed: int = 0
) -> np.ndarray:
    """LR-space form of the degradation: convolve the downsampled image directly."""
    return _add_noise(circular_convolve(lr_base, kernel), noise_sigma, seed)


def _add_noise(img: np.ndarray, noise_sigma: float, seed: int) -> np.ndarray:
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if noise_sigma == 0:
        return img
    rng = rng_for(seed, "degrade-noise")
    return img + rng.normal(0.0, noise_sigma / 255.0, size=img.shape)


def reformulate_kernel(
    img: np.ndarray, kernel: BlurKernel, s: int, cfg: ReformulationConfig = ReformulationConfig()
) -> BlurKernel:
    """Derive the LR-space kernel that reproduces blur+downsample on the LR grid.

    Computes, on the downsampled grid,

        conj(D) / (|D|^2 + eps) * B

    where D is the spectrum of the plainly downsampled image and B the
    spectrum of the blurred-then-downsampled image, inverts the transform,
    circularly shifts the result so the window with dominant mass is
    centered, crops to cfg.output_size, and renormalizes to sum 1.

    RGB inputs are reduced to BT.601 luminance first; the resulting kernel
    is shared across channels. The output may contain small negative side
    lobes.
    """
    img = validate_image(img)
    if channel_count(img) == 3:
        img = bt601_luminance(img)
    img = center_crop_to_multiple(img, s)

    base = downsample(img, s, "decimate")
    blurred = downsample(circular_convolve(img, kernel), s, "decimate")
    h, w = base.shape
    if cfg.output_size > min(h, w):
        raise ValueError(f"output_size {cfg.output_size} exceeds LR grid {h}x{w}")

    spec_base = np.fft.fft2(base)
    spec_blur = np.fft.fft2(blurred)
    power = np.abs(spec_base) ** 2
    eps = cfg.epsilon * float(power.mean()) if cfg.epsilon_mode == "relative" else cfg.epsilon
    ratio = np.conj(spec_base) / (power + eps) * spec_blur
    full = np.real(np.fft.ifft2(ratio))

    centered = _center_dominant_mass(full)
    half = cfg.output_size // 2
    cy, cx = h // 2, w // 2
    crop = centered[cy - half : cy + half + 1, cx - half : cx + half + 1]
    return BlurKernel(crop).normalized()


def _center_dominant_mass(full: np.ndarray) -> np.ndarray:
    """Roll `full` so the 3x3 window holding the most |mass| is centered.

    A small scoring window keeps the location unambiguous: with a window as
    large as the final crop, every placement containing a compact kernel
    ties and the argmax degenerates.
    """
    h, w = full.shape
    mass = np.real(
        np.fft.ifft2(np.fft.fft2(np.abs(full)) * np.fft.fft2(_pad_kernel_centered(np.ones((3, 3)), (h, w))))
    )
    cy, cx = np.unravel_index(int(np.argmax(mass)), mass.shape)
    return np.roll(full, (h // 2 - cy, w // 2 - cx), axis=(0, 1))
