"""Reconstruction network with feature-space deblurring and dual paths.

Pipeline per LR image: extract features, predict one small smoothness
filter per channel, deconvolve every feature channel with the estimated
kernel in the frequency domain, then refine through groups of dual-path
attention blocks. The deconvolved path carries full width; the primitive
(blurred) path is channel-reduced and re-fused by concatenation inside
every block. Pixel-shuffle upsampling produces the HR output.
"""

import os
import tempfile
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .ddlk import EstimatorConfig, KernelEstimator
from .spectral import LAPLACIAN_3X3, apply_response, dcls_responses


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the reconstruction network and kernel estimator."""

    scale: int = 4
    width: int = 64
    groups: int = 5
    blocks_per_group: int = 10
    cr_width: int = 16
    feature_layers: int = 3
    feature_bias: bool = True
    smooth_filter_size: int = 3
    attention_reduction: int = 16
    estimator_sizes: tuple = (11, 7, 5, 1)
    estimator_channels: int = 64
    estimator_depth: int = 5
    in_channels: int = 3

    def __post_init__(self):
        if self.scale not in (2, 3, 4):
            raise ValueError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.groups < 1 or self.blocks_per_group < 1:
            raise ValueError("groups and blocks_per_group must be >= 1")
        if not 1 <= self.cr_width <= self.width:
            raise ValueError("cr_width must lie in [1, width]")
        if self.smooth_filter_size % 2 == 0:
            raise ValueError("smooth_filter_size must be odd")
        object.__setattr__(self, "estimator_sizes", tuple(int(s) for s in self.estimator_sizes))

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(
            layer_sizes=self.estimator_sizes,
            channels=self.estimator_channels,
            depth=self.estimator_depth,
            in_channels=self.in_channels,
        )


class FeatureExtractor(nn.Module):
    """Shallow convolutional feature trunk, no normalization layers."""

    def __init__(self, in_channels: int, width: int, layers: int, bias: bool = True):
        super().__init__()
        mods = [nn.Conv2d(in_channels, width, 3, padding=1, bias=bias)]
        for _ in range(layers - 1):
            mods += [nn.ReLU(inplace=True), nn.Conv2d(width, width, 3, padding=1, bias=bias)]
        self.body = nn.Sequential(*mods)

    def forward(self, x):
        return self.body(x)


class SmoothFilterPredictor(nn.Module):
    """Shared head mapping pooled features to one filter per channel.

    Zero-initialized with a Laplacian bias: before training every channel
    receives the classical smoothness filter.
    """

    def __init__(self, channels: int, filter_size: int = 3):
        super().__init__()
        self.channels = channels
        self.filter_size = filter_size
        self.fc1 = nn.Linear(channels, channels)
        self.fc2 = nn.Linear(channels, channels * filter_size * filter_size)
        nn.init.zeros_(self.fc2.weight)
        base = torch.zeros(filter_size, filter_size, dtype=torch.float64)
        lap = torch.from_numpy(LAPLACIAN_3X3)
        off = (filter_size - 3) // 2
        if off >= 0:
            base[off : off + 3, off : off + 3] = lap
        else:
            base[0, 0] = 1.0
        with torch.no_grad():
            self.fc2.bias.copy_(base.reshape(-1).repeat(channels).to(self.fc2.bias.dtype))

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        pooled = features.mean(dim=(-2, -1))
        out = self.fc2(torch.relu(self.fc1(pooled)))
        return out.reshape(features.shape[0], self.channels, self.filter_size, self.filter_size)


def dcls_feature_deconv(features: torch.Tensor, kernel: torch.Tensor, bank: torch.Tensor) -> torch.Tensor:
    """Deconvolve every feature channel with its own response.

    features: (B, L, H, W); kernel: (B, kh, kw); bank: (B, L, f, f).
    Differentiable in all three arguments.
    """
    if features.ndim != 4:
        raise ValueError(f"expected (B, L, H, W) features, got {tuple(features.shape)}")
    if kernel.shape[0] != features.shape[0] or bank.shape[:2] != features.shape[:2]:
        raise ValueError("batch/channel shapes of features, kernel and bank disagree")
    responses = dcls_responses(kernel, bank, features.shape[-2:])
    return apply_response(responses, features)


class ChannelAttention(nn.Module):
    """Squeeze-excite gating: global pool, bottleneck, sigmoid scale."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.gate = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Conv2d(channels, hidden, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, channels, 1),
            nn.Sigmoid(),
        )

    def forward(self, x):
        return x * self.gate(x)


class DualPathBlock(nn.Module):
    """One refinement step of the deconvolved and primitive paths.

    Deconvolved path: concatenate with the reduced primitive features,
    transform, apply channel attention, add residual. Primitive path:
    independent transform with its own residual. Zero-initializing the
    final convolution of each path makes the block an identity map.
    """

    def __init__(self, width: int, cr_width: int, reduction: int = 16, zero_residual: bool = False):
        super().__init__()
        self.merge = nn.Conv2d(width + cr_width, width, 3, padding=1)
        self.refine = nn.Conv2d(width, width, 3, padding=1)
        self.attention = ChannelAttention(width, reduction)
        self.prim1 = nn.Conv2d(cr_width, cr_width, 3, padding=1)
        self.prim2 = nn.Conv2d(cr_width, cr_width, 3, padding=1)
        if zero_residual:
            self.zero_residual_init()

    def zero_residual_init(self) -> None:
        nn.init.zeros_(self.refine.weight)
        nn.init.zeros_(self.refine.bias)
        nn.init.zeros_(self.prim2.weight)
        nn.init.zeros_(self.prim2.bias)

    def forward(self, deblurred, primitive):
        if deblurred.shape[1] != self.merge.in_channels - self.prim1.in_channels:
            raise ValueError(f"deblurred path carries {deblurred.shape[1]} channels, "
                             f"expected {self.merge.in_channels - self.prim1.in_channels}")
        if primitive.shape[1] != self.prim1.in_channels:
            raise ValueError(f"primitive path carries {primitive.shape[1]} channels, "
                             f"expected {self.prim1.in_channels}")
        t = self.refine(torch.relu(self.merge(torch.cat([deblurred, primitive], dim=1))))
        d_out = deblurred + self.attention(t)
        p_out = primitive + self.prim2(torch.relu(self.prim1(primitive)))
        return d_out, p_out


class DualPathGroup(nn.Module):
    """A chain of blocks with one more residual around the whole group, per path."""

    def __init__(self, width: int, cr_width: int, blocks: int, reduction: int = 16):
        super().__init__()
        self.blocks = nn.ModuleList(DualPathBlock(width, cr_width, reduction) for _ in range(blocks))
        self.tail_d = nn.Conv2d(width, width, 3, padding=1)
        self.tail_p = nn.Conv2d(cr_width, cr_width, 3, padding=1)

    def forward(self, deblurred, primitive):
        d, p = deblurred, primitive
        for block in self.blocks:
            d, p = block(d, p)
        return deblurred + self.tail_d(d), primitive + self.tail_p(p)


class Upsampler(nn.Sequential):
    """Sub-pixel (pixel-shuffle) upscaling by 2, 3 or 4."""

    def __init__(self, width: int, scale: int):
        mods = []
        if scale in (2, 4):
            for _ in range(scale // 2):
                mods += [nn.Conv2d(width, 4 * width, 3, padding=1), nn.PixelShuffle(2)]
        elif scale == 3:
            mods += [nn.Conv2d(width, 9 * width, 3, padding=1), nn.PixelShuffle(3)]
        else:
            raise ValueError(f"unsupported scale {scale}")
        super().__init__(*mods)


class Reconstructor(nn.Module):
    """Feature extraction, smoothness-filter prediction and the dual-path trunk."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.extractor = FeatureExtractor(cfg.in_channels, cfg.width, cfg.feature_layers, cfg.feature_bias)
        self.filter_head = SmoothFilterPredictor(cfg.width, cfg.smooth_filter_size)
        self.reduce = nn.Conv2d(cfg.width, cfg.cr_width, 1)
        self.groups = nn.ModuleList(
            DualPathGroup(cfg.width, cfg.cr_width, cfg.blocks_per_group, cfg.attention_reduction)
            for _ in range(cfg.groups)
        )
        self.fuse = nn.Conv2d(cfg.width + cfg.cr_width, cfg.width, 3, padding=1)
        self.upsampler = Upsampler(cfg.width, cfg.scale)
        self.to_image = nn.Conv2d(cfg.width, cfg.in_channels, 3, padding=1)

    def extract_features(self, image: torch.Tensor) -> torch.Tensor:
        return self.extractor(image)

    def predict_smooth_filters(self, features: torch.Tensor) -> torch.Tensor:
        return self.filter_head(features)

    def reconstruct(self, deblurred: torch.Tensor, primitive: torch.Tensor) -> torch.Tensor:
        """Run the dual-path trunk on (deblurred, reduced-primitive) and upsample."""
        d, p = deblurred, self.reduce(primitive)
        for group in self.groups:
            d, p = group(d, p)
        fused = self.fuse(torch.cat([d, p], dim=1))
        return self.to_image(self.upsampler(fused))


class BlindSR(nn.Module):
    """Full model: kernel estimation, feature deblurring, dual-path reconstruction."""

    def __init__(self, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        self.estimator = KernelEstimator(cfg.estimator_config())
        self.reconstructor = Reconstructor(cfg)

    def estimator_parameters(self):
        return self.estimator.parameters()

    def reconstructor_parameters(self):
        return self.reconstructor.parameters()

    def forward(self, image: torch.Tensor, identity_deconv: bool = False):
        """Map a (B, C, H, W) LR batch to (SR batch, estimated kernels).

        identity_deconv=True bypasses the feature deblurring (features pass
        through unchanged), for space-ablation comparisons.
        """
        kernel = self.estimator(image)
        features = self.reconstructor.extract_features(image)
        if identity_deconv:
            deblurred = features
        else:
            bank = self.reconstructor.predict_smooth_filters(features)
            deblurred = dcls_feature_deconv(features, kernel, bank)
        sr = self.reconstructor.reconstruct(deblurred, features)
        return sr, kernel


CHECKPOINT_FORMAT = "blindsr-checkpoint-v1"


def save_model(path, model: BlindSR, extra: dict | None = None) -> None:
    """Atomically write a self-describing checkpoint (config + named parameters)."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(model.cfg),
        "state": model.state_dict(),
        "extra": extra or {},
    }
    path = str(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            torch.save(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path) -> BlindSR:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    cfg = ModelConfig(**payload["config"])
    model = BlindSR(cfg)
    model.load_state_dict(payload["state"])
    model.eval()
    return model


def super_resolve(model: BlindSR, image: np.ndarray, identity_deconv: bool = False):
    """Numpy-facing single-image inference; returns (sr_image, BlurKernel)."""
    from .kernels import BlurKernel

    arr = np.asarray(image, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    dtype = next(model.parameters()).dtype
    t = torch.from_numpy(arr.transpose(2, 0, 1))[None].to(dtype)
    model.eval()
    with torch.no_grad():
        sr, kernel = model(t, identity_deconv=identity_deconv)
    out = sr[0].double().cpu().numpy().transpose(1, 2, 0)
    if squeeze:
        out = out[:, :, 0]
    return out, BlurKernel(kernel[0].double().cpu().numpy()).normalized()
