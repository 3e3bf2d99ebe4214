"""Evaluation: Y-channel PSNR/SSIM, kernel error, observation fit, benchmark harness.

PSNR and SSIM follow the standard single-image-restoration conventions:
scores on the BT.601 luminance channel in [0,1], a border of `scale`
pixels shaved before scoring, peak value 1.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import convolve2d

from . import degrade as deg
from .images import bt601_luminance, validate_image
from .kernels import BlurKernel
from .seeds import child_seed


def rgb_to_y(img: np.ndarray) -> np.ndarray:
    """BT.601 luminance of an RGB image in [0,1] (Y in [16/255, 235/255])."""
    return bt601_luminance(img)


def _shave(img: np.ndarray, border: int) -> np.ndarray:
    if border == 0:
        return img
    if 2 * border >= min(img.shape[:2]):
        raise ValueError(f"border {border} leaves no pixels on image {img.shape}")
    return img[border:-border, border:-border]


def psnr(a: np.ndarray, b: np.ndarray, border: int = 0) -> float:
    """Peak signal-to-noise ratio in dB on [0,1] images; inf for identical inputs."""
    a, b = validate_image(a), validate_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if border < 0:
        raise ValueError("border must be >= 0")
    diff = _shave(a, border) - _shave(b, border)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(coords**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a: np.ndarray, b: np.ndarray, window_size: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local structural similarity with a Gaussian window, dynamic range 1.

    Local means/variances/covariance come from Gaussian-weighted windows
    evaluated only where the window fits entirely inside the image.
    """
    a, b = validate_image(a), validate_image(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("ssim expects single-channel images; convert with rgb_to_y first")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < window_size:
        raise ValueError(f"image {a.shape} smaller than the {window_size}x{window_size} window")
    w = _gaussian_window(window_size, sigma)
    c1, c2 = k1**2, k2**2

    mu_a = convolve2d(a, w, mode="valid")
    mu_b = convolve2d(b, w, mode="valid")
    var_a = convolve2d(a * a, w, mode="valid") - mu_a**2
    var_b = convolve2d(b * b, w, mode="valid") - mu_b**2
    cov = convolve2d(a * b, w, mode="valid") - mu_a * mu_b
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    return float(score.mean())


def kernel_mse(estimated: BlurKernel, reference: BlurKernel) -> float:
    """Sum of squared differences after dividing each kernel by its peak weight.

    Kernels of different sizes are zero-padded to the larger size,
    center-aligned. The normalization makes the score insensitive to the
    kernels' absolute scale; the exact definition is fixed here so scores
    are comparable across runs of this package.
    """
    size = max(estimated.size, reference.size)
    a = _pad_center(estimated.weights, size)
    b = _pad_center(reference.weights, size)
    pa, pb = a.max(), b.max()
    if pa <= 0 or pb <= 0:
        raise ValueError("kernel peak must be positive for peak normalization")
    d = a / pa - b / pb
    return float(np.sum(d * d))


def _pad_center(w: np.ndarray, size: int) -> np.ndarray:
    pad = (size - w.shape[0]) // 2
    if pad == 0:
        return w
    return np.pad(w, pad)


def lr_psnr(lr: np.ndarray, hr: np.ndarray, kernel: BlurKernel, scale: int) -> float:
    """How well `kernel` explains the observation: PSNR of lr vs (hr downsampled) conv kernel."""
    hr = deg.center_crop_to_multiple(hr, scale)
    base = deg.downsample(hr, scale, "decimate")
    if base.shape != validate_image(lr).shape:
        raise ValueError(f"lr shape {lr.shape} does not match downsampled hr {base.shape}")
    return psnr(lr, deg.circular_convolve(base, kernel), border=0)


def y_psnr(a: np.ndarray, b: np.ndarray, border: int) -> float:
    """PSNR on the luminance channel (RGB inputs) or directly (grayscale)."""
    ya = rgb_to_y(a) if a.ndim == 3 else a
    yb = rgb_to_y(b) if b.ndim == 3 else b
    return psnr(ya, yb, border=border)


def y_ssim(a: np.ndarray, b: np.ndarray, border: int) -> float:
    ya = rgb_to_y(a) if a.ndim == 3 else a
    yb = rgb_to_y(b) if b.ndim == 3 else b
    return ssim(_shave(ya, border), _shave(yb, border))


# ---------------------------------------------------------------------------
# Benchmark harness


@dataclass(frozen=True)
class RestoreContext:
    """What a restorer may know about the degradation of the sample at hand."""

    scale: int
    kernel: BlurKernel
    lr_kernel: BlurKernel | None = None


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    method: str
    scale: int
    kernel_id: int
    noise_sigma: float
    image_id: str
    psnr: float
    ssim: float
    kernel_width: float = float("nan")


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def per_kernel(self) -> list:
        """Mean over images for every (method, kernel, noise) cell."""
        cells = {}
        for r in self.rows:
            cells.setdefault((r.method, r.kernel_id, r.noise_sigma, r.kernel_width), []).append(r)
        out = []
        for (method, kid, noise, width), rows in sorted(cells.items()):
            out.append({
                "method": method,
                "kernel_id": kid,
                "noise_sigma": noise,
                "kernel_width": width,
                "psnr": float(np.mean([r.psnr for r in rows])),
                "ssim": float(np.mean([r.ssim for r in rows])),
                "images": len(rows),
            })
        return out

    def summary(self) -> list:
        """Mean over kernels of the per-kernel image means, per (method, noise)."""
        cells = {}
        for cell in self.per_kernel():
            cells.setdefault((cell["method"], cell["noise_sigma"]), []).append(cell)
        out = []
        for (method, noise), cellrows in sorted(cells.items()):
            out.append({
                "method": method,
                "noise_sigma": noise,
                "psnr": float(np.mean([c["psnr"] for c in cellrows])),
                "ssim": float(np.mean([c["ssim"] for c in cellrows])),
                "kernels": len(cellrows),
            })
        return out

    def to_tsv(self) -> str:
        header = "dataset\tmethod\tscale\tkernel_id\tkernel_width\tnoise_sigma\timage_id\tpsnr\tssim"
        lines = [header]
        for r in sorted(self.rows, key=lambda r: (r.method, r.kernel_id, r.noise_sigma, r.image_id)):
            lines.append(
                f"{r.dataset}\t{r.method}\t{r.scale}\t{r.kernel_id}\t{r.kernel_width:.4g}"
                f"\t{r.noise_sigma:g}\t{r.image_id}\t{r.psnr:.2f}\t{r.ssim:.4f}"
            )
        lines.append("")
        lines.append("method\tnoise_sigma\tmean_psnr\tmean_ssim")
        for s in self.summary():
            lines.append(f"{s['method']}\t{s['noise_sigma']:g}\t{s['psnr']:.2f}\t{s['ssim']:.4f}")
        return "\n".join(lines) + "\n"

    def save(self, tsv_path, json_path) -> None:
        with open(tsv_path, "w") as fh:
            fh.write(self.to_tsv())
        rows = []
        for r in self.rows:
            row = asdict(r)
            if math.isnan(row["kernel_width"]):
                row["kernel_width"] = None  # strict-JSON stand-in for NaN
            rows.append(row)
        with open(json_path, "w") as fh:
            json.dump({"rows": rows, "summary": self.summary()}, fh, indent=2, sort_keys=True)

    @staticmethod
    def load_json(path) -> "EvalReport":
        with open(path) as fh:
            payload = json.load(fh)
        rows = []
        for row in payload["rows"]:
            if row.get("kernel_width") is None:
                row["kernel_width"] = float("nan")
            rows.append(ReportRow(**row))
        return EvalReport(rows)


def bicubic_restorer():
    """Baseline: bicubic upscale of the LR observation."""

    def restore(lr: np.ndarray, ctx: RestoreContext) -> np.ndarray:
        h, w = lr.shape[:2]
        return deg.bicubic_resize(lr, h * ctx.scale, w * ctx.scale)

    return restore


def deconv_bicubic_restorer(method: str = "cls", cfg=None):
    """Baseline: deblur the LR image with its LR-space kernel, then bicubic upscale."""
    from .spectral import deconv_rgb

    def restore(lr: np.ndarray, ctx: RestoreContext) -> np.ndarray:
        if ctx.lr_kernel is None:
            raise ValueError("deconv baseline needs lr_kernel; run the benchmark with compute_lr_kernels=True")
        h, w = lr.shape[:2]
        deblurred = deconv_rgb(lr, ctx.lr_kernel, method=method, cfg=cfg)
        return deg.bicubic_resize(deblurred, h * ctx.scale, w * ctx.scale)

    return restore


def model_restorer(model):
    """Restorer backed by a trained model (feature-space deblurring path)."""
    from .dpan import super_resolve

    def restore(lr: np.ndarray, ctx: RestoreContext) -> np.ndarray:
        return super_resolve(model, lr)[0]

    return restore


def model_rgb_deconv_restorer(model, cls_cfg=None):
    """Space-ablation route: deblur the LR image in sample space with the model's
    own kernel estimate, then run the backbone with feature deblurring bypassed."""
    from .ddlk import estimate_blur_kernel
    from .dpan import super_resolve
    from .spectral import ClsConfig, deconv_rgb

    cls_cfg = cls_cfg or ClsConfig()

    def restore(lr: np.ndarray, ctx: RestoreContext) -> np.ndarray:
        kernel = estimate_blur_kernel(model.estimator, lr)
        deblurred = deconv_rgb(lr, kernel, method="cls", cfg=cls_cfg)
        return super_resolve(model, deblurred, identity_deconv=True)[0]

    return restore


def run_benchmark(
    images: list,
    kernels: list,
    methods: dict,
    scale: int,
    noise_levels=(0.0,),
    downsampler: str = "decimate",
    seed: int = 0,
    compute_lr_kernels: bool = False,
    dataset: str = "dataset",
    kernel_widths=None,
    border: int | None = None,
) -> EvalReport:
    """Degrade every (image, kernel, noise) cell and score every method on it.

    images: list of (image_id, hr_array); methods: {name: restorer}.
    Restorer outputs are clamped to [0,1] before scoring, mirroring 8-bit
    export. Border defaults to the scale.
    """
    border = scale if border is None else border
    report = EvalReport()
    for kid, kernel in enumerate(kernels):
        width = float(kernel_widths[kid]) if kernel_widths is not None else float("nan")
        for image_id, hr in images:
            hr_ref = deg.center_crop_to_multiple(hr, scale)
            lr_kernel = None
            if compute_lr_kernels:
                lr_kernel = deg.reformulate_kernel(hr_ref, kernel, scale)
            ctx = RestoreContext(scale=scale, kernel=kernel, lr_kernel=lr_kernel)
            for noise in noise_levels:
                spec = deg.DegradationSpec(
                    scale=scale, kernel=kernel, noise_sigma=noise, downsampler=downsampler,
                    seed=child_seed(seed, "bench", kid, image_id, noise),
                )
                lr = deg.classical_degrade(hr_ref, spec)
                for name, restorer in methods.items():
                    sr = np.clip(restorer(lr, ctx), 0.0, 1.0)
                    report.rows.append(ReportRow(
                        dataset=dataset, method=name, scale=scale, kernel_id=kid,
                        noise_sigma=float(noise), image_id=str(image_id),
                        psnr=y_psnr(sr, hr_ref, border), ssim=y_ssim(sr, hr_ref, border),
                        kernel_width=width,
                    ))
    return report


def save_psnr_curve(report: EvalReport, path, title: str = "PSNR vs kernel width") -> None:
    """Render per-method PSNR-vs-width curves (one point per kernel) to an image file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cells = report.per_kernel()
    methods = sorted({c["method"] for c in cells})
    fig, ax = plt.subplots(figsize=(5, 4))
    for method in methods:
        pts = [(c["kernel_width"], c["psnr"]) for c in cells if c["method"] == method]
        pts.sort()
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        ax.plot(xs, ys, marker="o", label=method)
    ax.set_xlabel("kernel width")
    ax.set_ylabel("PSNR (dB)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
