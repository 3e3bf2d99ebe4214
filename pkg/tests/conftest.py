import numpy as np
import pytest
from skimage import data


def _to_float(img):
    return np.asarray(img, dtype=np.float64) / 255.0


@pytest.fixture(scope="session")
def photos():
    """Real photographs bundled with scikit-image, as float images in [0,1]."""
    return [
        _to_float(data.camera()),
        _to_float(data.astronaut()),
        _to_float(data.coffee()),
        _to_float(data.chelsea()),
        _to_float(data.moon()),
    ]


@pytest.fixture(scope="session")
def natural_gray(photos):
    return photos[0][:256, :256]


@pytest.fixture(scope="session")
def natural_rgb(photos):
    return photos[1][:256, :256]


def natural_crops(photos, count, size, seed=0):
    """Deterministic random crops cycling through the photo set."""
    rng = np.random.default_rng(seed)
    crops = []
    for trial in range(count):
        img = photos[trial % len(photos)]
        h, w = img.shape[:2]
        top = int(rng.integers(0, h - size + 1))
        left = int(rng.integers(0, w - size + 1))
        crops.append(img[top : top + size, left : left + size])
    return crops
