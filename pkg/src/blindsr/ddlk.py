"""Image-conditioned estimation of the LR-space blur kernel.

Instead of regressing kernel weights directly, a conditioning network
generates a stack of small linear filters from the input image. Because
the stack contains no nonlinearity between filters, it collapses
analytically into one kernel by sequential full convolution; with the
default filter sizes (11, 7, 5, 1) the collapsed kernel is 21x21. The
collapsed kernel is projected to sum 1 by explicit division.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .kernels import BlurKernel
from .spectral import as_filter_tensor

DEFAULT_LAYER_SIZES = (11, 7, 5, 1)


@dataclass(frozen=True, eq=False)
class FilterStack:
    """Ordered linear filters h_1..h_r, each (..., k_i, k_i) with shared leading dims."""

    filters: tuple

    def __post_init__(self):
        filters = tuple(as_filter_tensor(f) for f in self.filters)
        if not filters:
            raise ValueError("filter stack must contain at least one filter")
        lead = filters[0].shape[:-2]
        for f in filters:
            if f.shape[-1] != f.shape[-2] or f.shape[-1] % 2 == 0:
                raise ValueError(f"filters must be square with odd size, got {tuple(f.shape)}")
            if f.shape[:-2] != lead:
                raise ValueError("all filters must share leading dimensions")
            if not torch.all(torch.isfinite(f)):
                raise ValueError("filter stack contains non-finite values")
        object.__setattr__(self, "filters", filters)

    @property
    def sizes(self) -> tuple:
        return tuple(f.shape[-1] for f in self.filters)

    @property
    def receptive_field(self) -> int:
        return 1 + sum(s - 1 for s in self.sizes)


def full_convolve(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Full (non-truncated) 2D convolution of batched filters.

    a: (..., m, m), b: (..., n, n) with identical leading dims; output
    (..., m+n-1, m+n-1). True convolution, i.e. b is flipped.
    """
    lead = a.shape[:-2]
    m, n = a.shape[-1], b.shape[-1]
    batch = int(np.prod(lead)) if lead else 1
    inp = a.reshape(1, batch, m, m)
    weight = torch.flip(b, dims=(-2, -1)).reshape(batch, 1, n, n)
    out = torch.nn.functional.conv2d(inp, weight, padding=n - 1, groups=batch)
    return out.reshape(*lead, m + n - 1, m + n - 1)


def collapse_filters(stack: FilterStack, normalize: bool = True) -> torch.Tensor:
    """Collapse the stack into a single kernel: delta conv h_1 conv ... conv h_r.

    Output size equals the stack's receptive field. With normalize=True the
    result is divided by its sum (the sum-to-one projection).
    """
    first = stack.filters[0]
    out = torch.ones(*first.shape[:-2], 1, 1, dtype=first.dtype, device=first.device)
    for f in stack.filters:
        out = full_convolve(out, f)
    if normalize:
        out = out / out.sum(dim=(-2, -1), keepdim=True)
    return out


def collapse_to_kernel(stack: FilterStack) -> BlurKernel:
    """Collapse an unbatched stack and wrap it as a BlurKernel."""
    k = collapse_filters(stack)
    if k.ndim != 2:
        raise ValueError("collapse_to_kernel expects an unbatched stack")
    return BlurKernel(k.detach().cpu().numpy())


def center_align(kernel: torch.Tensor, size: int) -> torch.Tensor:
    """Center-crop or zero-pad the trailing 2D dims of `kernel` to `size`."""
    cur = kernel.shape[-1]
    if cur == size:
        return kernel
    if cur > size:
        off = (cur - size) // 2
        return kernel[..., off : off + size, off : off + size]
    pad = (size - cur) // 2
    return torch.nn.functional.pad(kernel, (pad, pad, pad, pad))


def kernel_loss(estimated, target) -> torch.Tensor:
    """Mean absolute difference, with the target center-aligned to the estimate's size."""
    k = as_filter_tensor(estimated)
    t = center_align(as_filter_tensor(target).to(k.dtype), k.shape[-1])
    return (k - t).abs().mean()


@dataclass(frozen=True)
class EstimatorConfig:
    """Architecture of the filter-generating network."""

    layer_sizes: tuple = DEFAULT_LAYER_SIZES
    channels: int = 64
    depth: int = 5
    in_channels: int = 3

    def __post_init__(self):
        if not self.layer_sizes:
            raise ValueError("layer_sizes must be nonempty")
        if any(s < 1 or s % 2 == 0 for s in self.layer_sizes):
            raise ValueError(f"layer sizes must be odd, got {self.layer_sizes}")
        if self.depth < 1 or self.channels < 1:
            raise ValueError("depth and channels must be >= 1")

    @property
    def kernel_size(self) -> int:
        return 1 + sum(s - 1 for s in self.layer_sizes)


class KernelEstimator(nn.Module):
    """Conditioning trunk + per-layer heads emitting the linear filter stack.

    The trunk is a plain convolutional feature extractor pooled to a global
    descriptor; one fully connected head per filter emits its weights. Heads
    start at zero with a delta bias, so an untrained estimator returns the
    identity kernel.
    """

    def __init__(self, cfg: EstimatorConfig = EstimatorConfig()):
        super().__init__()
        self.cfg = cfg
        layers = [nn.Conv2d(cfg.in_channels, cfg.channels, 3, padding=1), nn.LeakyReLU(0.1, inplace=True)]
        for _ in range(cfg.depth - 1):
            layers += [nn.Conv2d(cfg.channels, cfg.channels, 3, padding=1), nn.LeakyReLU(0.1, inplace=True)]
        self.trunk = nn.Sequential(*layers)
        self.heads = nn.ModuleList(nn.Linear(cfg.channels, s * s) for s in cfg.layer_sizes)
        self._init_identity()
        # each 3x3 conv adds 2 pixels of context
        self.trunk_receptive_field = 2 * cfg.depth + 1

    def _init_identity(self) -> None:
        for head, size in zip(self.heads, self.cfg.layer_sizes):
            nn.init.zeros_(head.weight)
            delta = torch.zeros(size, size)
            delta[size // 2, size // 2] = 1.0
            with torch.no_grad():
                head.bias.copy_(delta.reshape(-1))

    def generate_filters(self, image: torch.Tensor) -> FilterStack:
        """Map a (B, C, H, W) image batch to its per-layer filters."""
        if image.ndim != 4:
            raise ValueError(f"expected (B, C, H, W) input, got {tuple(image.shape)}")
        if min(image.shape[-2:]) < self.trunk_receptive_field:
            raise ValueError(
                f"image {tuple(image.shape[-2:])} smaller than trunk receptive field "
                f"{self.trunk_receptive_field}"
            )
        descriptor = self.trunk(image).mean(dim=(-2, -1))
        filters = tuple(
            head(descriptor).reshape(image.shape[0], size, size)
            for head, size in zip(self.heads, self.cfg.layer_sizes)
        )
        return FilterStack(filters)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        """Estimate the (B, K, K) blur kernel, normalized to sum 1."""
        return collapse_filters(self.generate_filters(image))


def estimate_blur_kernel(model: KernelEstimator, image: np.ndarray) -> BlurKernel:
    """Single-image convenience wrapper returning a BlurKernel."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.shape[2] != model.cfg.in_channels:
        raise ValueError(f"estimator expects {model.cfg.in_channels} channels, got {arr.shape[2]}")
    t = torch.from_numpy(arr.transpose(2, 0, 1))[None].to(next(model.parameters()).dtype)
    with torch.no_grad():
        k = model(t)[0]
    return BlurKernel(k.double().cpu().numpy()).normalized()
