import numpy as np
import pytest
from PIL import Image

import artvision as av


def make_image(seed: int, size=(160, 160)) -> Image.Image:
    """A deterministic structured test image: waves plus a bright patch."""
    rng = np.random.default_rng(seed)
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    channels = []
    for _ in range(3):
        fx, fy = rng.uniform(5, 25, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        channels.append(np.sin(xx / fx + phase) + np.cos(yy / fy))
    arr = np.stack(channels, axis=-1)
    x0, y0 = rng.integers(10, w - 50), rng.integers(10, h - 50)
    arr[y0 : y0 + 40, x0 : x0 + 40] += 1.5
    arr = (arr - arr.min()) / (arr.max() - arr.min())
    return Image.fromarray((arr * 255).astype(np.uint8))


def write_corpus(directory, n: int, seed0: int = 0, size=(160, 160)):
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n):
        path = directory / f"lot{i:03d}.png"
        make_image(seed0 + i, size=size).save(path)
        paths.append(path)
    return paths


@pytest.fixture(scope="session")
def resnet():
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return av.load_backbone("resnet50")


@pytest.fixture(scope="session")
def vit():
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return av.load_backbone("vit_small")
