"""Command-line entry point tying the pipeline together.

Subcommands: synth, reformulate, estimate, deconv, sr, train, eval, plot.
Every command resolves its configuration from built-in defaults, an
optional flat config file and --override flags, writes the resolved
config next to its outputs, and fails with a one-line JSON error on
stderr and a nonzero exit code.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from . import datasets, degrade, metrics, training
from .ddlk import estimate_blur_kernel
from .dpan import ModelConfig, load_model, super_resolve
from .images import load_png, save_float, save_png
from .kernels import BlurKernel, gaussian8_set, gaussian8_widths, load_kernel, save_kernel
from .spectral import ClsConfig, deconv_rgb


def default_out(command: str) -> str:
    return os.path.join(os.environ.get("BLINDSR_OUT", "runs"), command)


def _prepare_out(args, cfg: dict) -> str:
    out = args.out or default_out(args.command)
    os.makedirs(out, exist_ok=True)
    cfgmod.save_config(os.path.join(out, "resolved_config.cfg"), cfg)
    return out


def _resolve(args, defaults: dict, flag_keys: dict | None = None) -> dict:
    file_cfg = cfgmod.load_config(args.config) if args.config else None
    cfg = cfgmod.resolve(defaults, file_cfg, args.override)
    for key, attr in (flag_keys or {}).items():
        value = getattr(args, attr)
        if value is not None:
            cfg[key] = value
    return cfg


def _kernel_preview(path, kernel: BlurKernel) -> None:
    w = kernel.weights
    peak = np.abs(w).max()
    save_png(path, np.clip(w / peak, 0.0, 1.0) if peak > 0 else np.zeros_like(w))


# --------------------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    defaults = {
        "protocol": "gaussian8", "scale": 4, "noise_sigma": 0.0, "downsampler": "decimate",
        "seed": 0, "synthetic_count": 0, "synthetic_size": 96, "epsilon": 1e-2,
        "lr_kernel_size": 0,  # 0 = per-protocol default (21, or the kernel size)
        "hr_dir": "",
    }
    cfg = _resolve(args, defaults, {
        "protocol": "protocol", "scale": "scale", "noise_sigma": "noise_sigma",
        "downsampler": "downsampler", "seed": "seed", "synthetic_count": "synthetic_count",
        "synthetic_size": "synthetic_size", "hr_dir": "hr_dir",
    })
    out = _prepare_out(args, cfg)
    if cfg["hr_dir"]:
        images = datasets.load_hr_directory(cfg["hr_dir"])
    elif cfg["synthetic_count"] > 0:
        arrays = datasets.make_synthetic_images(cfg["synthetic_count"], cfg["synthetic_size"], cfg["seed"])
        images = [(f"synth{i:03d}", img) for i, img in enumerate(arrays)]
    else:
        raise ValueError("provide hr_dir or a positive synthetic_count")
    manifest = datasets.synthesize_dataset(
        images, out, scale=cfg["scale"], protocol=cfg["protocol"],
        noise_sigma=cfg["noise_sigma"], downsampler=cfg["downsampler"], seed=cfg["seed"],
        epsilon=cfg["epsilon"],
        lr_kernel_size=cfg["lr_kernel_size"] or None,
    )
    print(manifest)
    return 0


def cmd_reformulate(args) -> int:
    defaults = {"scale": 4, "epsilon": 1e-2, "epsilon_mode": "relative", "output_size": 21}
    cfg = _resolve(args, defaults, {"scale": "scale", "output_size": "output_size"})
    out = _prepare_out(args, cfg)
    hr = load_png(args.hr)
    kernel = load_kernel(args.kernel)
    epsilons = [float(e) for e in str(cfg["epsilon"]).split(",")]
    for eps in epsilons:
        rc = degrade.ReformulationConfig(epsilon=eps, output_size=cfg["output_size"],
                                         epsilon_mode=cfg["epsilon_mode"])
        lr_kernel = degrade.reformulate_kernel(hr, kernel, cfg["scale"], rc)
        suffix = "" if len(epsilons) == 1 else f"_eps{eps:g}"
        path = os.path.join(out, f"lr_kernel{suffix}.txt")
        save_kernel(path, lr_kernel)
        _kernel_preview(os.path.join(out, f"lr_kernel{suffix}.png"), lr_kernel)
        print(path)
    return 0


def cmd_estimate(args) -> int:
    cfg = _resolve(args, {})
    out = _prepare_out(args, cfg)
    model = load_model(args.checkpoint)
    lr = load_png(args.lr)
    kernel = estimate_blur_kernel(model.estimator, lr)
    path = os.path.join(out, "estimated_kernel.txt")
    save_kernel(path, kernel)
    _kernel_preview(os.path.join(out, "estimated_kernel.png"), kernel)
    print(path)
    return 0


def cmd_deconv(args) -> int:
    defaults = {"method": "cls", "nsr": 1e-2, "lam": 100.0}
    cfg = _resolve(args, defaults, {"method": "method", "nsr": "nsr", "lam": "lam"})
    out = _prepare_out(args, cfg)
    lr = load_png(args.lr)
    kernel = load_kernel(args.kernel)
    method = cfg["method"]
    method_cfg = float(cfg["nsr"]) if method == "wiener" else (
        ClsConfig(lam=float(cfg["lam"])) if method == "cls" else None
    )
    deblurred = deconv_rgb(lr, kernel, method=method, cfg=method_cfg)
    save_png(os.path.join(out, "deblurred.png"), deblurred)
    save_float(os.path.join(out, "deblurred.npy"), deblurred)
    print(os.path.join(out, "deblurred.png"))
    return 0


def cmd_sr(args) -> int:
    cfg = _resolve(args, {"rgb_deconv": False})
    out = _prepare_out(args, cfg)
    model = load_model(args.checkpoint)
    lr = load_png(args.lr)
    if cfg["rgb_deconv"]:
        kernel = estimate_blur_kernel(model.estimator, lr)
        deblurred = deconv_rgb(lr, kernel, method="cls", cfg=ClsConfig())
        sr, _ = super_resolve(model, deblurred, identity_deconv=True)
    else:
        sr, kernel = super_resolve(model, lr)
    save_png(os.path.join(out, "sr.png"), sr)
    save_kernel(os.path.join(out, "estimated_kernel.txt"), kernel)
    print(os.path.join(out, "sr.png"))
    return 0


_MODEL_KEYS = {f.name: f.default for f in dataclasses.fields(ModelConfig) if f.name != "estimator_sizes"}
_TRAIN_KEYS = {f.name: f.default for f in dataclasses.fields(training.TrainConfig)}


def _split_model_train(cfg: dict):
    model_kwargs = {k.removeprefix("model."): v for k, v in cfg.items() if k.startswith("model.")}
    train_kwargs = {k.removeprefix("train."): v for k, v in cfg.items() if k.startswith("train.")}
    if "estimator_sizes" in model_kwargs:
        model_kwargs["estimator_sizes"] = tuple(
            int(s) for s in str(model_kwargs["estimator_sizes"]).split(",")
        )
    return ModelConfig(**model_kwargs), training.TrainConfig(**train_kwargs)


def cmd_train(args) -> int:
    defaults = {f"model.{k}": v for k, v in _MODEL_KEYS.items()}
    defaults["model.estimator_sizes"] = "11,7,5,1"
    defaults.update({f"train.{k}": v for k, v in _TRAIN_KEYS.items()})
    cfg = _resolve(args, defaults)
    if args.seed is not None:
        cfg["train.seed"] = args.seed
    out = _prepare_out(args, cfg)
    model_cfg, train_cfg = _split_model_train(cfg)
    records = datasets.load_manifest(args.manifest)
    result = training.train(train_cfg, model_cfg, records, out)
    print(json.dumps({
        "checkpoint": result["checkpoint"],
        "final_validation": result["final_validation"],
        "bicubic_psnr": result["bicubic_psnr"],
    }, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    defaults = {
        "scale": 4, "noise_levels": "0", "methods": "bicubic", "downsampler": "decimate",
        "seed": 0, "dataset": "dataset", "compute_lr_kernels": False, "limit": 0,
    }
    cfg = _resolve(args, defaults, {
        "scale": "scale", "methods": "methods", "downsampler": "downsampler",
        "seed": "seed", "noise_levels": "noise_levels",
    })
    out = _prepare_out(args, cfg)
    limit = cfg["limit"] or None
    images = datasets.load_hr_directory(args.hr_dir, limit=limit)
    method_names = [m.strip() for m in str(cfg["methods"]).split(",") if m.strip()]
    model = load_model(args.checkpoint) if args.checkpoint else None
    methods = {}
    needs_lr_kernels = cfg["compute_lr_kernels"]
    for name in method_names:
        if name == "bicubic":
            methods[name] = metrics.bicubic_restorer()
        elif name == "deconv_bicubic":
            methods[name] = metrics.deconv_bicubic_restorer()
            needs_lr_kernels = True
        elif name == "model":
            if model is None:
                raise ValueError("method 'model' needs --checkpoint")
            methods[name] = metrics.model_restorer(model)
        elif name == "model_rgb_deconv":
            if model is None:
                raise ValueError("method 'model_rgb_deconv' needs --checkpoint")
            methods[name] = metrics.model_rgb_deconv_restorer(model)
        else:
            raise ValueError(f"unknown method {name!r}")
    scale = cfg["scale"]
    noise_levels = [float(x) for x in str(cfg["noise_levels"]).split(",")]
    report = metrics.run_benchmark(
        images, gaussian8_set(scale), methods, scale,
        noise_levels=noise_levels, downsampler=cfg["downsampler"], seed=cfg["seed"],
        compute_lr_kernels=needs_lr_kernels, dataset=cfg["dataset"],
        kernel_widths=gaussian8_widths(scale),
    )
    report.save(os.path.join(out, "report.tsv"), os.path.join(out, "report.json"))
    for row in report.summary():
        print(f"{row['method']}\tnoise={row['noise_sigma']:g}\t{row['psnr']:.2f} dB\tssim {row['ssim']:.4f}")
    return 0


def cmd_plot(args) -> int:
    cfg = _resolve(args, {"title": "PSNR vs kernel width"})
    out = _prepare_out(args, cfg)
    report = metrics.EvalReport.load_json(args.report)
    path = os.path.join(out, "psnr_curve.png")
    metrics.save_psnr_curve(report, path, title=cfg["title"])
    print(path)
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blindsr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output directory (default $BLINDSR_OUT/<command>)")

    p = sub.add_parser("synth", help="synthesize a degraded dataset with a manifest")
    common(p)
    p.add_argument("--hr-dir", dest="hr_dir")
    p.add_argument("--synthetic-count", dest="synthetic_count", type=int)
    p.add_argument("--synthetic-size", dest="synthetic_size", type=int)
    p.add_argument("--protocol", choices=datasets.KERNEL_PROTOCOLS)
    p.add_argument("--scale", type=int)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--downsampler", choices=degrade.DOWNSAMPLERS)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("reformulate", help="derive the LR-space kernel for an HR image + kernel")
    common(p)
    p.add_argument("--hr", required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--scale", type=int)
    p.add_argument("--output-size", dest="output_size", type=int)
    p.set_defaults(func=cmd_reformulate)

    p = sub.add_parser("estimate", help="estimate the blur kernel of an LR image")
    common(p)
    p.add_argument("--lr", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("deconv", help="deblur an LR image with a known kernel")
    common(p)
    p.add_argument("--lr", required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--method", choices=["wiener", "cls", "dcls"])
    p.add_argument("--nsr", type=float)
    p.add_argument("--lam", type=float)
    p.set_defaults(func=cmd_deconv)

    p = sub.add_parser("sr", help="super-resolve an LR image with a trained model")
    common(p)
    p.add_argument("--lr", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("train", help="jointly train estimator and reconstructor")
    common(p)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="benchmark methods over the 8-kernel protocol")
    common(p)
    p.add_argument("--hr-dir", dest="hr_dir", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--scale", type=int)
    p.add_argument("--methods")
    p.add_argument("--noise-levels", dest="noise_levels")
    p.add_argument("--downsampler", choices=degrade.DOWNSAMPLERS)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render PSNR-vs-width curves from a report")
    common(p)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
