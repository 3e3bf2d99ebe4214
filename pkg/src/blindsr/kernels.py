"""Blur kernel synthesis and kernel file I/O.

Kernels are sampled on the integer offset grid
(u, v) in [-(size-1)/2, (size-1)/2]^2 around the center pixel, with no
sub-pixel shift, and normalized to sum to 1. Synthesized Gaussians are
nonnegative; reformulated or estimated kernels routed through BlurKernel
may carry small negative side lobes, so nonnegativity is not enforced by
the container itself.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from .seeds import rng_for

# Benchmark width grids: 8 widths, inclusive endpoints, per upscaling factor.
GAUSSIAN8_WIDTH_RANGES = {2: (0.80, 1.60), 3: (1.35, 2.40), 4: (1.80, 3.20)}
# Training width ranges for the isotropic protocol.
ISOTROPIC_TRAIN_WIDTH_RANGES = {2: (0.2, 2.0), 3: (0.2, 3.0), 4: (0.2, 4.0)}
# Anisotropic protocol: kernel side per scale, width range, full rotation.
ANISOTROPIC_KERNEL_SIZES = {2: 11, 4: 31}
ANISOTROPIC_WIDTH_RANGE = (0.6, 5.0)
DEFAULT_KERNEL_SIZE = 21
DEFAULT_PERTURB_AMPLITUDE = 0.25

_TEXT_MAGIC = "DCLSK1"
_BINARY_MAGIC = b"DCLS"


@dataclass(frozen=True, eq=False)
class BlurKernel:
    """Odd-sized 2D kernel; `weights` is a (size, size) float64 matrix."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"kernel must be square 2D, got shape {w.shape}")
        if w.shape[0] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {w.shape[0]}")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel contains non-finite weights")
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def center(self) -> int:
        return self.size // 2

    def total(self) -> float:
        return float(self.weights.sum())

    def normalized(self) -> "BlurKernel":
        s = self.weights.sum()
        if abs(s) < 1e-300:
            raise ValueError("cannot normalize a kernel with zero total weight")
        return BlurKernel(self.weights / s)

    @staticmethod
    def delta(size: int) -> "BlurKernel":
        _check_odd_size(size)
        w = np.zeros((size, size))
        w[size // 2, size // 2] = 1.0
        return BlurKernel(w)


@dataclass(frozen=True)
class KernelSpec:
    """Reproducible recipe for one synthesized kernel."""

    family: str  # "isotropic" | "anisotropic"
    size: int
    sigma1: float
    sigma2: float = 0.0
    theta: float = 0.0
    perturb_amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("isotropic", "anisotropic"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        _check_odd_size(self.size)
        if self.sigma1 <= 0:
            raise ValueError("sigma1 must be > 0")
        if self.family == "isotropic":
            object.__setattr__(self, "sigma2", self.sigma1)
            object.__setattr__(self, "theta", 0.0)
        elif self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0")
        if not 0.0 <= self.perturb_amplitude < 1.0:
            raise ValueError("perturb_amplitude must lie in [0, 1)")

    def realize(self) -> BlurKernel:
        if self.family == "isotropic":
            k = make_isotropic_gaussian(self.size, self.sigma1)
        else:
            k = make_anisotropic_gaussian(self.size, self.sigma1, self.sigma2, self.theta)
        if self.perturb_amplitude > 0:
            k = perturb_multiplicative(k, self.perturb_amplitude, self.seed)
        return k


def _check_odd_size(size: int) -> None:
    if not isinstance(size, (int, np.integer)) or size < 3 or size % 2 == 0:
        raise ValueError(f"kernel size must be an odd integer >= 3, got {size!r}")


def _offset_grid(size: int):
    half = (size - 1) // 2
    v, u = np.meshgrid(np.arange(-half, half + 1), np.arange(-half, half + 1), indexing="ij")
    return u.astype(np.float64), v.astype(np.float64)


def make_isotropic_gaussian(size: int, sigma: float) -> BlurKernel:
    """Isotropic Gaussian exp(-(u^2+v^2)/(2 sigma^2)) on the offset grid, sum 1."""
    _check_odd_size(size)
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    u, v = _offset_grid(size)
    w = np.exp(-(u * u + v * v) / (2.0 * sigma * sigma))
    return BlurKernel(w).normalized()


def make_anisotropic_gaussian(size: int, sigma1: float, sigma2: float, theta: float) -> BlurKernel:
    """Bivariate Gaussian with covariance R(theta) diag(sigma1^2, sigma2^2) R(theta)^T.

    Axis 1 (sigma1) points along angle theta in (u, v) coordinates, where u
    is the horizontal offset and v the vertical one.
    """
    _check_odd_size(size)
    if sigma1 <= 0 or sigma2 <= 0:
        raise ValueError("sigma1 and sigma2 must be > 0")
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    cov = rot @ np.diag([sigma1**2, sigma2**2]) @ rot.T
    prec = np.linalg.inv(cov)
    u, v = _offset_grid(size)
    quad = prec[0, 0] * u * u + (prec[0, 1] + prec[1, 0]) * u * v + prec[1, 1] * v * v
    return BlurKernel(np.exp(-0.5 * quad)).normalized()


def perturb_multiplicative(kernel: BlurKernel, amplitude: float, seed: int) -> BlurKernel:
    """Multiply each weight by an i.i.d. uniform draw from [1-amplitude, 1+amplitude], renormalize."""
    if not 0.0 <= amplitude < 1.0:
        raise ValueError(f"amplitude must lie in [0, 1), got {amplitude}")
    if amplitude == 0.0:
        return kernel
    rng = rng_for(seed, "perturb")
    factors = rng.uniform(1.0 - amplitude, 1.0 + amplitude, size=kernel.weights.shape)
    return BlurKernel(kernel.weights * factors).normalized()


def gaussian8_set(scale: int) -> list:
    """The 8 isotropic 21x21 evaluation kernels for a given scale.

    Widths are linearly spaced, inclusive of both endpoints of the
    per-scale range (e.g. 1.80 ... 3.20 step 0.20 for scale 4).
    """
    if scale not in GAUSSIAN8_WIDTH_RANGES:
        raise ValueError(f"unsupported scale {scale!r}; expected one of {sorted(GAUSSIAN8_WIDTH_RANGES)}")
    lo, hi = GAUSSIAN8_WIDTH_RANGES[scale]
    return [make_isotropic_gaussian(DEFAULT_KERNEL_SIZE, w) for w in np.linspace(lo, hi, 8)]


def gaussian8_widths(scale: int) -> np.ndarray:
    if scale not in GAUSSIAN8_WIDTH_RANGES:
        raise ValueError(f"unsupported scale {scale!r}; expected one of {sorted(GAUSSIAN8_WIDTH_RANGES)}")
    lo, hi = GAUSSIAN8_WIDTH_RANGES[scale]
    return np.linspace(lo, hi, 8)


def sample_training_spec(
    protocol: str,
    scale: int,
    seed: int,
    perturb_amplitude: float = DEFAULT_PERTURB_AMPLITUDE,
) -> KernelSpec:
    """Draw one training-kernel spec per protocol.

    isotropic: 21x21, width uniform over the per-scale range.
    anisotropic: 11x11 (x2) or 31x31 (x4), widths uniform over (0.6, 5),
    rotation uniform over [-pi, pi], multiplicative perturbation applied.
    """
    rng = rng_for(seed, "train-kernel", protocol, scale)
    if protocol == "isotropic":
        if scale not in ISOTROPIC_TRAIN_WIDTH_RANGES:
            raise ValueError(f"unsupported scale {scale!r} for isotropic protocol")
        lo, hi = ISOTROPIC_TRAIN_WIDTH_RANGES[scale]
        return KernelSpec(
            family="isotropic",
            size=DEFAULT_KERNEL_SIZE,
            sigma1=float(rng.uniform(lo, hi)),
            seed=seed,
        )
    if protocol == "anisotropic":
        if scale not in ANISOTROPIC_KERNEL_SIZES:
            raise ValueError(f"unsupported scale {scale!r} for anisotropic protocol")
        lo, hi = ANISOTROPIC_WIDTH_RANGE
        return KernelSpec(
            family="anisotropic",
            size=ANISOTROPIC_KERNEL_SIZES[scale],
            sigma1=float(rng.uniform(lo, hi)),
            sigma2=float(rng.uniform(lo, hi)),
            theta=float(rng.uniform(-math.pi, math.pi)),
            perturb_amplitude=perturb_amplitude,
            seed=seed,
        )
    raise ValueError(f"unknown protocol {protocol!r}; expected 'isotropic' or 'anisotropic'")


def sample_training_kernel(
    protocol: str,
    scale: int,
    seed: int,
    perturb_amplitude: float = DEFAULT_PERTURB_AMPLITUDE,
) -> BlurKernel:
    return sample_training_spec(protocol, scale, seed, perturb_amplitude).realize()


def save_kernel_text(path, kernel: BlurKernel) -> None:
    """Text format: header line 'DCLSK1 <size>', then size rows of floats."""
    lines = [f"{_TEXT_MAGIC} {kernel.size}"]
    for row in kernel.weights:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_kernel_text(path) -> BlurKernel:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != _TEXT_MAGIC:
            raise ValueError(f"{path}: not a {_TEXT_MAGIC} kernel file")
        size = int(header[1])
        rows = [[float(tok) for tok in fh.readline().split()] for _ in range(size)]
    w = np.array(rows, dtype=np.float64)
    if w.shape != (size, size):
        raise ValueError(f"{path}: expected {size}x{size} weights, got {w.shape}")
    return BlurKernel(w)


def save_kernel_binary(path, kernel: BlurKernel) -> None:
    """Binary format: 8-byte header (magic 'DCLS' + uint32 LE size), then float32 LE weights."""
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC + struct.pack("<I", kernel.size))
        fh.write(kernel.weights.astype("<f4").tobytes())


def load_kernel_binary(path) -> BlurKernel:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8 or header[:4] != _BINARY_MAGIC:
            raise ValueError(f"{path}: not a binary kernel file")
        (size,) = struct.unpack("<I", header[4:])
        payload = fh.read(4 * size * size)
    w = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(size, size)
    return BlurKernel(w)


def save_kernel(path, kernel: BlurKernel) -> None:
    """Dispatch on extension: '.bin' binary, anything else text."""
    if str(path).endswith(".bin"):
        save_kernel_binary(path, kernel)
    else:
        save_kernel_text(path, kernel)


def load_kernel(path) -> BlurKernel:
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(_TEXT_MAGIC.encode("ascii") + b" "):
        return load_kernel_text(path)
    if head.startswith(_BINARY_MAGIC):
        return load_kernel_binary(path)
    raise ValueError(f"{path}: unrecognized kernel file header")
