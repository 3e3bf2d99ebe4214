"""Frequency-domain deconvolution: PSF->OTF and the restoration operators.

All operators share one algebraic shape: a complex frequency response

    H = conj(K) / (conj(K) K + penalty)

where K is the kernel's transform at signal resolution and the penalty is
what distinguishes the family: a constant noise-to-signal ratio (Wiener),
the spectrum of a fixed smoothness filter scaled by 1/lambda (constrained
least squares), or the spectrum of a per-channel predicted smoothness
filter with the multiplier absorbed (the per-channel "deep" variant).

Everything here runs on torch tensors and is differentiable with respect
to signals, kernels, and smoothness filters; numpy arrays and BlurKernel
inputs are accepted and converted.
"""

from dataclasses import dataclass, field

import numpy as np
import torch

from .kernels import BlurKernel

LAPLACIAN_3X3 = np.array([[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]])

# Relative threshold on |denominator| below which an operator is singular.
_SINGULAR_TOL = 1e-12
# Allowed imaginary leakage when applying an operator to a real signal.
_IMAG_TOL = 1e-6


class SingularOperatorError(Exception):
    """The requested frequency response divides by (numerically) zero."""


def as_filter_tensor(k, dtype=None) -> torch.Tensor:
    """Accept BlurKernel / ndarray / tensor and return a float tensor."""
    if isinstance(k, BlurKernel):
        k = k.weights
    if isinstance(k, np.ndarray):
        t = torch.from_numpy(np.ascontiguousarray(k))
    elif isinstance(k, torch.Tensor):
        t = k
    else:
        t = torch.as_tensor(k)
    if not t.is_floating_point():
        t = t.double()
    return t.to(dtype) if dtype is not None else t


@dataclass(frozen=True, eq=False)
class DeconvOperator:
    """A frequency response on an HxW grid, conjugate-symmetric for real kernels."""

    response: torch.Tensor

    def __post_init__(self):
        if self.response.ndim != 2 or not self.response.is_complex():
            raise ValueError("response must be a complex 2D tensor")

    @property
    def shape(self):
        return tuple(self.response.shape)


@dataclass(frozen=True)
class ClsConfig:
    """Constrained-least-squares settings: smoothness filter P and multiplier lambda."""

    smooth_filter: np.ndarray = field(default_factory=lambda: LAPLACIAN_3X3.copy())
    lam: float = 100.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be > 0")


@dataclass(frozen=True, eq=False)
class SmoothFilterBank:
    """One small 2D smoothness filter per feature channel, shape (L, f, f)."""

    filters: torch.Tensor

    def __post_init__(self):
        t = as_filter_tensor(self.filters)
        if t.ndim != 3 or t.shape[-1] != t.shape[-2]:
            raise ValueError(f"bank must be (L, f, f), got {tuple(t.shape)}")
        if t.shape[0] < 1:
            raise ValueError("bank must contain at least one filter")
        if t.shape[-1] % 2 == 0:
            raise ValueError("filter size must be odd")
        if not torch.all(torch.isfinite(t)):
            raise ValueError("bank contains non-finite values")
        object.__setattr__(self, "filters", t)

    def __len__(self) -> int:
        return self.filters.shape[0]

    @property
    def filter_size(self) -> int:
        return self.filters.shape[-1]

    @staticmethod
    def uniform(count: int, filter_2d) -> "SmoothFilterBank":
        f = as_filter_tensor(filter_2d)
        return SmoothFilterBank(f.expand(count, *f.shape).clone())


def psf2otf(kernel, shape) -> torch.Tensor:
    """Transform a spatial kernel to its frequency response at `shape` resolution.

    The kernel is zero-padded, circularly shifted so its center pixel lands
    at index (0, 0), and Fourier-transformed. Supports batched kernels with
    leading dimensions: (..., kh, kw) -> (..., H, W) complex.
    """
    k = as_filter_tensor(kernel)
    h, w = int(shape[0]), int(shape[1])
    kh, kw = k.shape[-2], k.shape[-1]
    if kh > h or kw > w:
        raise ValueError(f"kernel {kh}x{kw} larger than target grid {h}x{w}")
    padded = torch.nn.functional.pad(k, (0, w - kw, 0, h - kh))
    shifted = torch.roll(padded, shifts=(-(kh // 2), -(kw // 2)), dims=(-2, -1))
    return torch.fft.fft2(shifted)


def _check_nonsingular(denom: torch.Tensor) -> None:
    with torch.no_grad():
        d = denom.detach().abs()
        if float(d.min()) <= _SINGULAR_TOL * max(float(d.max()), 1.0):
            raise SingularOperatorError(
                "deconvolution response is singular: kernel and penalty spectra "
                "vanish together at some frequency"
            )


def _ratio_response(otf_k: torch.Tensor, penalty: torch.Tensor) -> torch.Tensor:
    denom = otf_k.conj() * otf_k + penalty
    _check_nonsingular(denom)
    return otf_k.conj() / denom


def cls_operator(kernel, cfg: ClsConfig, shape) -> DeconvOperator:
    """Closed-form constrained-least-squares response.

    H = conj(K) / (conj(K) K + (1/lambda) conj(P) P) with P the smoothness
    filter; lambda -> inf recovers the plain inverse filter.
    """
    otf_k = psf2otf(kernel, shape)
    otf_p = psf2otf(cfg.smooth_filter, shape).to(otf_k.dtype)
    penalty = (otf_p.conj() * otf_p) / cfg.lam
    return DeconvOperator(_ratio_response(otf_k, penalty))


def wiener_operator(kernel, nsr: float, shape) -> DeconvOperator:
    """Classic Wiener response conj(K) / (|K|^2 + nsr) with constant noise-to-signal ratio."""
    if nsr < 0:
        raise ValueError("nsr must be >= 0")
    otf_k = psf2otf(kernel, shape)
    penalty = torch.full_like(otf_k, complex(nsr, 0.0))
    return DeconvOperator(_ratio_response(otf_k, penalty))


def dcls_responses(kernel, bank_filters, shape) -> torch.Tensor:
    """Per-channel responses conj(K) / (|K|^2 + |P_i|^2), batched.

    kernel: (..., kh, kw); bank_filters: (..., L, f, f) sharing leading
    dims with the kernel. Returns (..., L, H, W) complex. The Lagrange
    multiplier is absorbed into the per-channel filters.
    """
    k = as_filter_tensor(kernel)
    p = as_filter_tensor(bank_filters).to(k.dtype)
    otf_k = psf2otf(k.unsqueeze(-3), shape)
    otf_p = psf2otf(p, shape)
    return _ratio_response(otf_k, otf_p.conj() * otf_p)


def dcls_operator(kernel, bank: SmoothFilterBank, shape) -> list:
    """One DeconvOperator per channel of the smoothness-filter bank."""
    responses = dcls_responses(kernel, bank.filters, shape)
    return [DeconvOperator(responses[i]) for i in range(responses.shape[0])]


def apply_response(response: torch.Tensor, signal: torch.Tensor) -> torch.Tensor:
    """Filter a real signal by a complex frequency response; returns the real part.

    Raises if the imaginary residue exceeds the conjugate-symmetry budget,
    which would mean the response does not correspond to a real filter.
    """
    if signal.shape[-2:] != response.shape[-2:]:
        raise ValueError(f"signal {tuple(signal.shape)} does not match response {tuple(response.shape[-2:])}")
    out = torch.fft.ifft2(response * torch.fft.fft2(signal))
    with torch.no_grad():
        residue = float(out.imag.detach().norm())
        scale = float(signal.detach().norm())
        if residue > _IMAG_TOL * max(scale, 1e-30):
            raise ValueError("response is not conjugate-symmetric: imaginary residue too large")
    return out.real


def apply_deconv(op: DeconvOperator, signal):
    """Apply an operator to one channel; numpy in -> numpy out, tensor in -> tensor out."""
    if isinstance(signal, np.ndarray):
        out = apply_response(op.response, torch.from_numpy(np.ascontiguousarray(signal)).to(torch.float64))
        return out.numpy()
    return apply_response(op.response, signal)


def deconv_rgb(img: np.ndarray, kernel, method: str = "cls", cfg=None) -> np.ndarray:
    """Deblur an LR image in sample space, channel by channel.

    method 'wiener' (cfg: float noise-to-signal ratio, default 1e-2),
    'cls' (cfg: ClsConfig, default Laplacian with lambda=100), or 'dcls'
    (cfg: SmoothFilterBank with one filter per image channel). The
    frequency response is built once per kernel and shared across channels.
    """
    img = np.asarray(img, dtype=np.float64)
    channels = 1 if img.ndim == 2 else img.shape[2]
    shape = img.shape[:2]
    if method == "wiener":
        nsr = 1e-2 if cfg is None else float(cfg)
        ops = [wiener_operator(kernel, nsr, shape)] * channels
    elif method == "cls":
        ops = [cls_operator(kernel, cfg if cfg is not None else ClsConfig(), shape)] * channels
    elif method in ("dcls", "dcls_rgb"):
        bank = cfg if cfg is not None else SmoothFilterBank.uniform(channels, LAPLACIAN_3X3 / np.sqrt(100.0))
        if len(bank) != channels:
            raise ValueError(f"bank has {len(bank)} filters for a {channels}-channel image")
        ops = dcls_operator(kernel, bank, shape)
    else:
        raise ValueError(f"unknown deconvolution method {method!r}")
    if img.ndim == 2:
        return apply_deconv(ops[0], img)
    out = np.empty_like(img)
    for c in range(channels):
        out[:, :, c] = apply_deconv(ops[c], img[:, :, c])
    return out
