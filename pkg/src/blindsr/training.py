"""Joint training of the kernel estimator and the reconstruction network.

The loss is an unweighted sum of two mean-absolute-error terms: the SR
output against the HR patch and the estimated kernel against the cached
LR-space kernel of the training image. LR patches are synthesized on the
fly by degrading augmented HR patches, so every sample is exactly
reproducible from (manifest row, iteration, batch slot) and the master
seed.
"""

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np
import torch

from . import degrade as deg
from .ddlk import center_align, kernel_loss
from .dpan import BlindSR, ModelConfig, save_model, super_resolve
from .kernels import BlurKernel
from .metrics import y_psnr
from .seeds import child_seed, rng_for
from .spectral import SingularOperatorError


class TrainingDiverged(RuntimeError):
    """Raised when optimization blows up; a diagnostic snapshot is saved first."""


def _snapshot_and_raise(out_dir, model, iteration: int, reason: str):
    snapshot = os.path.join(out_dir, "diverged.pt")
    save_model(snapshot, model, extra={"iteration": iteration, "reason": reason})
    raise TrainingDiverged(
        f"training diverged at iteration {iteration} ({reason}); snapshot saved to {snapshot}"
    )


@dataclass(frozen=True)
class TrainConfig:
    """Defaults mirror the full-scale protocol; toy runs override them."""

    iterations: int = 500_000
    batch_size: int = 64
    lr_patch: int = 64
    lr_init: float = 4e-4
    lr_halving_interval: int = 200_000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    scale: int = 4
    protocol: str = "isotropic"
    noise_min: float = 0.0
    noise_max: float = 0.0
    seed: int = 0
    grad_clip: float = 10.0
    val_interval: int = 500
    log_interval: int = 50
    val_count: int = 4
    augment: bool = True
    downsampler: str = "decimate"

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 1 or self.lr_patch < 1:
            raise ValueError("batch_size, iterations and lr_patch must be >= 1")
        if self.lr_init <= 0 or self.lr_halving_interval < 1:
            raise ValueError("lr_init must be > 0 and lr_halving_interval >= 1")
        if not 0.0 <= self.noise_min <= self.noise_max:
            raise ValueError("need 0 <= noise_min <= noise_max")
        if self.scale not in (2, 3, 4):
            raise ValueError("scale must be 2, 3 or 4")


DIHEDRAL_OPS = range(8)


def dihedral(arr: np.ndarray, op: int) -> np.ndarray:
    """Apply one of the 8 flip/rotation symmetries (op in 0..7) to spatial axes."""
    if not 0 <= op < 8:
        raise ValueError(f"op must be in 0..7, got {op}")
    out = arr[:, ::-1] if op >= 4 else arr
    return np.ascontiguousarray(np.rot90(out, op % 4))


def augment(hr: np.ndarray, lr: np.ndarray, seed: int):
    """Apply the same randomly drawn flip/rotation to both members of a pair."""
    op = int(rng_for(seed, "augment").integers(0, 8))
    return dihedral(hr, op), dihedral(lr, op)


def joint_loss(sr: torch.Tensor, hr: torch.Tensor, kernel: torch.Tensor, target: torch.Tensor):
    """Unweighted sum of image L1 and kernel L1; returns (total, image_l1, kernel_l1)."""
    image_l1 = (sr - hr).abs().mean()
    kernel_l1 = kernel_loss(kernel, target)
    return image_l1 + kernel_l1, image_l1, kernel_l1


def learning_rate_at(cfg: TrainConfig, iteration: int) -> float:
    """Step-halving schedule: lr_init / 2^(iteration // interval)."""
    return cfg.lr_init * 0.5 ** (iteration // cfg.lr_halving_interval)


class _SampleCache:
    """Keeps decoded HR arrays and kernels of the manifest in memory."""

    def __init__(self, records, kernel_target_size: int):
        self.records = records
        self.hr = [r.load_hr() for r in records]
        self.kernels = [r.load_kernel().weights for r in records]
        self.targets = [
            center_align(torch.from_numpy(r.load_lr_kernel().weights), kernel_target_size).numpy()
            for r in records
        ]


def _draw_sample(cache: _SampleCache, cfg: TrainConfig, iteration: int, slot: int):
    """Deterministically derive one training triple (hr patch, lr patch, kernel target)."""
    rng = rng_for(cfg.seed, "sample", iteration, slot)
    idx = int(rng.integers(0, len(cache.records)))
    hr = cache.hr[idx]
    s, p = cfg.scale, cfg.lr_patch
    lr_h, lr_w = hr.shape[0] // s, hr.shape[1] // s
    if lr_h < p or lr_w < p:
        raise ValueError(f"lr_patch {p} exceeds LR grid {lr_h}x{lr_w} of {cache.records[idx].image_id}")
    top = int(rng.integers(0, lr_h - p + 1))
    left = int(rng.integers(0, lr_w - p + 1))
    op = int(rng.integers(0, 8)) if cfg.augment else 0
    noise = float(rng.uniform(cfg.noise_min, cfg.noise_max))

    x = dihedral(hr[top * s : (top + p) * s, left * s : (left + p) * s], op)
    kernel = BlurKernel(dihedral(cache.kernels[idx], op))
    target = dihedral(cache.targets[idx], op)
    spec = deg.DegradationSpec(
        scale=s, kernel=kernel, noise_sigma=noise, downsampler=cfg.downsampler,
        seed=child_seed(cfg.seed, "noise", iteration, slot),
    )
    y = deg.classical_degrade(x, spec)
    return x, y, target, spec


def _to_batch(arrays, dtype) -> torch.Tensor:
    stacked = np.stack(arrays)
    if stacked.ndim == 4:  # images: B,H,W,C -> B,C,H,W
        stacked = stacked.transpose(0, 3, 1, 2)
    return torch.from_numpy(np.ascontiguousarray(stacked)).to(dtype)


def _validate(model: BlindSR, cache: _SampleCache, cfg: TrainConfig):
    """Full-image validation: Y-PSNR of the SR output and kernel L1 per record."""
    model.eval()
    psnrs, kl1s = [], []
    for rec, hr, target in zip(cache.records, cache.hr, cache.targets):
        lr = rec.load_lr()
        sr, kernel = super_resolve(model, lr)
        psnrs.append(y_psnr(np.clip(sr, 0, 1), hr, border=cfg.scale))
        kl1s.append(float(np.abs(kernel.weights - target).mean()))
    model.train()
    return {
        "val_psnr": float(np.mean(psnrs)),
        "val_kernel_l1_median": float(np.median(kl1s)),
        "val_kernel_l1_mean": float(np.mean(kl1s)),
    }


def bicubic_baseline_psnr(records, scale: int) -> float:
    """Mean held-out Y-PSNR of plain bicubic upscaling of the stored LR images."""
    vals = []
    for rec in records:
        hr = rec.load_hr()
        lr = rec.load_lr()
        up = deg.bicubic_resize(lr, hr.shape[0], hr.shape[1])
        vals.append(y_psnr(np.clip(up, 0, 1), hr, border=scale))
    return float(np.mean(vals))


def train(
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    records,
    out_dir,
    val_records=None,
) -> dict:
    """Run the optimization and return a summary dict.

    Writes `metrics.jsonl` (one record per log/validation event) and the
    final self-describing checkpoint `model.pt` into out_dir. Deterministic
    for a fixed (cfg, manifest) in single-threaded runs.
    """
    os.makedirs(out_dir, exist_ok=True)
    if model_cfg.scale != cfg.scale:
        raise ValueError(f"model scale {model_cfg.scale} != training scale {cfg.scale}")
    if val_records is None:
        if cfg.val_count >= len(records):
            raise ValueError("val_count must leave at least one training record")
        val_records = records[len(records) - cfg.val_count :] if cfg.val_count else []
        records = records[: len(records) - cfg.val_count]

    torch.manual_seed(child_seed(cfg.seed, "torch-init"))
    model = BlindSR(model_cfg)
    model.train()
    kernel_size = model.estimator.cfg.kernel_size
    cache = _SampleCache(records, kernel_size)
    val_cache = _SampleCache(val_records, kernel_size) if val_records else None

    optimizer = torch.optim.Adam(
        model.parameters(), lr=cfg.lr_init, betas=(cfg.adam_beta1, cfg.adam_beta2)
    )
    dtype = next(model.parameters()).dtype
    log_path = os.path.join(out_dir, "metrics.jsonl")
    checkpoint_path = os.path.join(out_dir, "model.pt")
    history = []

    def log(entry: dict) -> None:
        history.append(entry)
        with open(log_path, "a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    if os.path.exists(log_path):
        os.unlink(log_path)

    initial_val = _validate(model, val_cache, cfg) if val_cache else {}
    baseline = bicubic_baseline_psnr(val_records, cfg.scale) if val_records else float("nan")
    log({"iteration": 0, "event": "validation", **initial_val, "bicubic_psnr": baseline})

    final_val = dict(initial_val)
    for iteration in range(cfg.iterations):
        lr_now = learning_rate_at(cfg, iteration)
        for group in optimizer.param_groups:
            group["lr"] = lr_now

        xs, ys, targets = [], [], []
        for slot in range(cfg.batch_size):
            x, y, target, spec = _draw_sample(cache, cfg, iteration, slot)
            if slot == 0 and iteration % cfg.val_interval == 0:
                # online spot check: the sample must be re-derivable in isolation
                x2, y2, t2, _ = _draw_sample(cache, cfg, iteration, slot)
                if not (np.array_equal(x, x2) and np.array_equal(y, y2) and np.array_equal(target, t2)):
                    raise AssertionError("sample re-derivation mismatch; pipeline is not deterministic")
            xs.append(x)
            ys.append(y)
            targets.append(target)
        hr_b = _to_batch(xs, dtype)
        lr_b = _to_batch(ys, dtype)
        target_b = _to_batch(targets, dtype)

        try:
            sr, kernel = model(lr_b)
            total, image_l1, kernel_l1 = joint_loss(sr, hr_b, kernel, target_b)
            diverged = not torch.isfinite(total)
        except SingularOperatorError as exc:
            _snapshot_and_raise(out_dir, model, iteration, reason=str(exc))
        if diverged:
            _snapshot_and_raise(out_dir, model, iteration,
                                reason=f"non-finite loss {float(total.detach())}")
        optimizer.zero_grad()
        total.backward()
        if cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        optimizer.step()

        step = iteration + 1
        if step % cfg.log_interval == 0 or step == cfg.iterations:
            log({
                "iteration": step, "event": "train", "lr": lr_now,
                "loss": float(total.detach()), "image_l1": float(image_l1.detach()),
                "kernel_l1": float(kernel_l1.detach()),
            })
        if val_cache and (step % cfg.val_interval == 0 or step == cfg.iterations):
            final_val = _validate(model, val_cache, cfg)
            log({"iteration": step, "event": "validation", **final_val, "bicubic_psnr": baseline})

    extra = {
        "train_config": dataclasses.asdict(cfg),
        "initial_validation": initial_val,
        "final_validation": final_val,
        "bicubic_psnr": baseline,
    }
    save_model(checkpoint_path, model, extra=extra)
    return {
        "checkpoint": checkpoint_path,
        "log": log_path,
        "initial_validation": initial_val,
        "final_validation": final_val,
        "bicubic_psnr": baseline,
        "history": history,
    }
