"""Image containers and file I/O.

Images are numpy float64 arrays in [0, 1]: (H, W) for grayscale or
(H, W, 3) for RGB. Values may transiently leave [0, 1] inside pipelines;
clamping happens only when exporting to 8-bit PNG. Lossless intermediate
results go through the float container (.npy).
"""

import numpy as np
from PIL import Image as PILImage

# ITU-R BT.601 luma coefficients on the 0-255 scale.
_BT601_COEFFS = np.array([65.481, 128.553, 24.966])
_BT601_OFFSET = 16.0


def validate_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim not in (2, 3):
        raise ValueError(f"image must be HxW or HxWx3, got shape {img.shape}")
    if img.ndim == 3 and img.shape[2] != 3:
        raise ValueError(f"color images must have 3 channels, got {img.shape[2]}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image dimensions must be >= 1, got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite samples")
    return img


def channel_count(img: np.ndarray) -> int:
    return 1 if img.ndim == 2 else img.shape[2]


def bt601_luminance(img: np.ndarray) -> np.ndarray:
    """BT.601 luma of an RGB image in [0,1]: Y = (65.481 R + 128.553 G + 24.966 B + 16)/255."""
    img = validate_image(img)
    if img.ndim != 3:
        raise ValueError("luminance conversion expects a 3-channel image")
    return (img @ _BT601_COEFFS + _BT601_OFFSET) / 255.0


def load_png(path) -> np.ndarray:
    """Read an 8-bit PNG into a float64 image in [0,1]."""
    with PILImage.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return validate_image(arr)


def save_png(path, img: np.ndarray) -> None:
    """Write an image as 8-bit PNG; samples are clamped to [0,1] here."""
    img = validate_image(img)
    arr = np.clip(img, 0.0, 1.0)
    arr8 = np.round(arr * 255.0).astype(np.uint8)
    mode = "L" if arr8.ndim == 2 else "RGB"
    PILImage.fromarray(arr8, mode=mode).save(path, format="PNG")


def load_float(path) -> np.ndarray:
    return validate_image(np.load(path))


def save_float(path, img: np.ndarray) -> None:
    np.save(path, validate_image(img))
