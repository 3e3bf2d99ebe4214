"""Dataset synthesis: paired HR/LR images with kernels and cached LR-space targets.

A synthesized dataset directory contains HR images (8-bit PNG plus a
lossless float copy), degraded LR images (same two forms), the blur
kernel of each sample, the cached LR-space kernel computed from the
noiseless pair, and a JSON-lines manifest tying them together. Everything
is derived deterministically from one seed.
"""

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from . import degrade as deg
from .images import load_float, save_float, save_png
from .kernels import (
    BlurKernel,
    KernelSpec,
    gaussian8_set,
    gaussian8_widths,
    load_kernel,
    sample_training_spec,
    save_kernel,
)
from .seeds import child_seed, rng_for

KERNEL_PROTOCOLS = ("gaussian8", "isotropic", "anisotropic")


@dataclass(frozen=True)
class SampleRecord:
    """One manifest row; paths are resolved against the manifest directory on load."""

    image_id: str
    hr_path: str
    hr_float_path: str
    lr_path: str
    lr_float_path: str
    kernel_path: str
    lr_kernel_path: str
    scale: int
    noise_sigma: float
    downsampler: str
    noise_seed: int
    kernel_spec: dict | None = None

    def load_hr(self) -> np.ndarray:
        return load_float(self.hr_float_path)

    def load_lr(self) -> np.ndarray:
        return load_float(self.lr_float_path)

    def load_kernel(self) -> BlurKernel:
        return load_kernel(self.kernel_path)

    def load_lr_kernel(self) -> BlurKernel:
        return load_kernel(self.lr_kernel_path)


def make_synthetic_images(count: int, size: int, seed: int, channels: int = 3) -> list:
    """Generate structured test images: soft color fields under hard-edged
    shapes, thin strokes and oriented gratings, clipped to [0.02, 0.98]."""
    images = []
    for i in range(count):
        rng = rng_for(seed, "synthetic-image", i)
        img = deg.bicubic_resize(rng.uniform(0.15, 0.85, size=(6, 6, channels)), size, size)
        yy, xx = np.mgrid[0:size, 0:size]
        for _ in range(int(rng.integers(10, 20))):
            color = rng.uniform(0.0, 1.0, size=channels)
            cy, cx = rng.uniform(0, size, size=2)
            if rng.random() < 0.5:
                ry, rx = rng.uniform(size * 0.04, size * 0.25, size=2)
                ang = rng.uniform(0, np.pi)
                dy, dx = yy - cy, xx - cx
                u = np.cos(ang) * dx + np.sin(ang) * dy
                v = -np.sin(ang) * dx + np.cos(ang) * dy
                mask = (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
            else:
                hy, hx = rng.uniform(size * 0.03, size * 0.2, size=2)
                mask = (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)
            img[mask] = 0.75 * color + 0.25 * img[mask]
        for _ in range(int(rng.integers(4, 8))):
            # thin stroke: pixels within `width` of a random line segment
            p0 = rng.uniform(0, size, size=2)
            ang = rng.uniform(0, np.pi)
            direction = np.array([np.cos(ang), np.sin(ang)])
            length = rng.uniform(size * 0.2, size * 0.9)
            width = rng.uniform(0.6, 2.0)
            rel = np.stack([yy - p0[0], xx - p0[1]], axis=-1)
            along = rel @ direction
            perp = rel @ np.array([-direction[1], direction[0]])
            mask = (np.abs(perp) <= width) & (along >= 0) & (along <= length)
            img[mask] = rng.uniform(0.0, 1.0, size=channels)
        for _ in range(int(rng.integers(2, 5))):
            freq = rng.uniform(0.3, 1.1)
            ang = rng.uniform(0, np.pi)
            phase = rng.uniform(0, 2 * np.pi)
            cy, cx = rng.uniform(0.2 * size, 0.8 * size, size=2)
            radius = rng.uniform(size * 0.1, size * 0.35)
            region = ((yy - cy) ** 2 + (xx - cx) ** 2) <= radius**2
            wave = 0.18 * np.sin(freq * (np.cos(ang) * xx + np.sin(ang) * yy) + phase)
            img += (wave * region)[:, :, None] * rng.uniform(0.4, 1.0, size=channels)
        images.append(np.clip(img, 0.02, 0.98))
    return images


def synthesize_dataset(
    images: list,
    out_dir,
    scale: int,
    protocol: str = "gaussian8",
    noise_sigma: float = 0.0,
    downsampler: str = "decimate",
    seed: int = 0,
    epsilon: float = 1e-2,
    lr_kernel_size: int | None = None,
    perturb_amplitude: float | None = None,
) -> str:
    """Degrade `images` (list of (name, array)) and write a manifest.

    protocol 'gaussian8' pairs every image with each of the 8 benchmark
    kernels; 'isotropic'/'anisotropic' draw one training kernel per image.
    lr_kernel_size None picks the protocol default: 21 for the isotropic
    protocols, the blur kernel's own size for the anisotropic one.
    Returns the manifest path.
    """
    if protocol not in KERNEL_PROTOCOLS:
        raise ValueError(f"unknown kernel protocol {protocol!r}; expected one of {KERNEL_PROTOCOLS}")
    out_dir = str(out_dir)
    for sub in ("hr", "lr", "kernels", "lr_kernels"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    shared_kernel_paths = None
    if protocol == "gaussian8":
        shared_kernel_paths = []
        widths = gaussian8_widths(scale)
        for kid, kernel in enumerate(gaussian8_set(scale)):
            rel = os.path.join("kernels", f"gaussian8_k{kid}.txt")
            save_kernel(os.path.join(out_dir, rel), kernel)
            shared_kernel_paths.append(rel)

    records = []
    for name, img in images:
        hr = deg.center_crop_to_multiple(np.asarray(img, dtype=np.float64), scale)
        hr_png = os.path.join("hr", f"{name}.png")
        hr_npy = os.path.join("hr", f"{name}.npy")
        save_png(os.path.join(out_dir, hr_png), hr)
        save_float(os.path.join(out_dir, hr_npy), hr)

        if protocol == "gaussian8":
            kernels = list(zip(gaussian8_set(scale), [None] * 8))
        else:
            kw = {} if perturb_amplitude is None else {"perturb_amplitude": perturb_amplitude}
            spec = sample_training_spec(protocol, scale, child_seed(seed, "kernel", name), **kw)
            kernels = [(spec.realize(), spec)]
            widths = None

        for kid, (kernel, kspec) in enumerate(kernels):
            if protocol == "gaussian8":
                sample_id = f"{name}_k{kid}"
                kernel_rel = shared_kernel_paths[kid]
            else:
                sample_id = name
                kernel_rel = os.path.join("kernels", f"{sample_id}.txt")
                save_kernel(os.path.join(out_dir, kernel_rel), kernel)

            crop = lr_kernel_size
            if crop is None:
                crop = kernel.size if protocol == "anisotropic" else 21
            rc = deg.ReformulationConfig(epsilon=epsilon, output_size=crop)
            lr_kernel = deg.reformulate_kernel(hr, kernel, scale, rc)
            lrk_rel = os.path.join("lr_kernels", f"{sample_id}.txt")
            save_kernel(os.path.join(out_dir, lrk_rel), lr_kernel)

            noise_seed = child_seed(seed, "noise", sample_id)
            dspec = deg.DegradationSpec(
                scale=scale, kernel=kernel, noise_sigma=noise_sigma,
                downsampler=downsampler, seed=noise_seed,
            )
            lr = deg.classical_degrade(hr, dspec)
            lr_png = os.path.join("lr", f"{sample_id}.png")
            lr_npy = os.path.join("lr", f"{sample_id}.npy")
            save_png(os.path.join(out_dir, lr_png), lr)
            save_float(os.path.join(out_dir, lr_npy), lr)

            records.append(SampleRecord(
                image_id=sample_id,
                hr_path=hr_png, hr_float_path=hr_npy,
                lr_path=lr_png, lr_float_path=lr_npy,
                kernel_path=kernel_rel, lr_kernel_path=lrk_rel,
                scale=scale, noise_sigma=noise_sigma, downsampler=downsampler,
                noise_seed=noise_seed,
                kernel_spec=dataclasses.asdict(kspec) if kspec is not None else (
                    {"family": "isotropic", "size": kernel.size,
                     "sigma1": float(widths[kid]), "sigma2": float(widths[kid]),
                     "theta": 0.0, "perturb_amplitude": 0.0, "seed": 0}
                ),
            ))

    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    with open(manifest_path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(dataclasses.asdict(rec), sort_keys=True) + "\n")
    return manifest_path


def load_manifest(path) -> list:
    """Read a manifest and resolve all paths against its directory."""
    base = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            for key in ("hr_path", "hr_float_path", "lr_path", "lr_float_path",
                        "kernel_path", "lr_kernel_path"):
                row[key] = os.path.join(base, row[key])
            records.append(SampleRecord(**row))
    if not records:
        raise ValueError(f"{path}: manifest is empty")
    return records


def load_hr_directory(path, limit: int | None = None) -> list:
    """Load (name, image) pairs from a directory of PNG images, sorted by name."""
    from .images import load_png

    names = sorted(n for n in os.listdir(path) if n.lower().endswith((".png", ".bmp")))
    if limit is not None:
        names = names[:limit]
    if not names:
        raise FileNotFoundError(f"no PNG images found in {path}")
    return [(os.path.splitext(n)[0], load_png(os.path.join(path, n))) for n in names]


def kernel_spec_to_blur(spec_dict: dict) -> BlurKernel:
    return KernelSpec(**spec_dict).realize()
