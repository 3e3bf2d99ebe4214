"""Blind single-image super-resolution toolkit.

Estimates the blur kernel of a degraded low-resolution image in LR space,
deblurs feature maps with closed-form constrained-least-squares operators,
and reconstructs the high-resolution image with a dual-path attention
network. Includes the degradation protocols, classical deconvolution
baselines and evaluation metrics needed to validate each stage.
"""

from .degrade import (
    DegradationSpec,
    ReformulationConfig,
    apply_lr_degradation,
    classical_degrade,
    downsample,
    reformulate_kernel,
)
from .dpan import BlindSR, ModelConfig, load_model, save_model, super_resolve
from .kernels import (
    BlurKernel,
    KernelSpec,
    gaussian8_set,
    load_kernel,
    make_anisotropic_gaussian,
    make_isotropic_gaussian,
    perturb_multiplicative,
    sample_training_kernel,
    save_kernel,
)
from .metrics import EvalReport, kernel_mse, lr_psnr, psnr, rgb_to_y, run_benchmark, ssim
from .spectral import (
    ClsConfig,
    DeconvOperator,
    SingularOperatorError,
    SmoothFilterBank,
    apply_deconv,
    cls_operator,
    dcls_operator,
    deconv_rgb,
    psf2otf,
    wiener_operator,
)
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BlindSR",
    "BlurKernel",
    "ClsConfig",
    "DeconvOperator",
    "DegradationSpec",
    "EvalReport",
    "KernelSpec",
    "ModelConfig",
    "ReformulationConfig",
    "SingularOperatorError",
    "SmoothFilterBank",
    "TrainConfig",
    "apply_deconv",
    "apply_lr_degradation",
    "classical_degrade",
    "cls_operator",
    "dcls_operator",
    "deconv_rgb",
    "downsample",
    "gaussian8_set",
    "kernel_mse",
    "load_kernel",
    "load_model",
    "lr_psnr",
    "make_anisotropic_gaussian",
    "make_isotropic_gaussian",
    "perturb_multiplicative",
    "psf2otf",
    "psnr",
    "reformulate_kernel",
    "rgb_to_y",
    "run_benchmark",
    "sample_training_kernel",
    "save_kernel",
    "save_model",
    "ssim",
    "super_resolve",
    "train",
    "wiener_operator",
]
