import numpy as np

from gradforge.errors import ConfigError
from gradforge.rng import make_stream

from .utils import LabeledDataset

STRIPE_CYCLES = 4  # stripes across one image side
NOISE_STD = 0.1


class ToyImages(LabeledDataset):
    """Synthetic size x size x 3 images, class c drawn as stripes at angle pi * c / classes.

    Each class also gets its own colour; every sample has a random stripe
    phase and Gaussian pixel noise. Labels are balanced and shuffled.
    Rows are the images flattened in (H, W, C) order.

    Args:
        samples (int): number of images.
        seed (int): seed of the ``data`` stream.
        size (int): image side length.
        classes (int): number of classes.
    """

    def __init__(self, samples=500, seed=1, size=32, classes=10, **kwargs):
        if samples < 1:
            raise ConfigError("data.samples", f"must be >= 1, got {samples}")
        if classes < 1:
            raise ConfigError("data.classes", f"must be >= 1, got {classes}")
        rng = make_stream(seed, "data")
        labels = rng.permutation(np.arange(samples) % classes)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=samples)
        noise = rng.standard_normal((samples, size, size, 3))

        v, u = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        angles = np.pi * labels / classes
        hues = 2.0 * np.pi * labels / classes
        offsets = np.array([0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0])
        colours = 0.5 + 0.5 * np.cos(hues[:, None] + offsets[None, :])

        along = u[None] * np.cos(angles)[:, None, None] + v[None] * np.sin(angles)[:, None, None]
        stripes = np.sin(2.0 * np.pi * STRIPE_CYCLES * along / size + phases[:, None, None])
        images = 0.5 + 0.4 * stripes[..., None] * colours[:, None, None, :] + NOISE_STD * noise
        images = np.clip(images, 0.0, 1.0)

        super().__init__(images.reshape(samples, -1), labels, classes, input_shape=(size, size, 3))


def toy_images(n, seed, size=32, classes=10):
    return ToyImages(samples=n, seed=seed, size=size, classes=classes)
