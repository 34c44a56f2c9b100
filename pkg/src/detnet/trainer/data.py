"""Procedural classification data standing in for ImageNet.

Each class is a (spatial frequency, orientation group) pair rendered as a
sinusoidal grating with random phase, per-channel gain and Gaussian noise.
Orientation groups are {0, 90} degrees and {45, 135} degrees, so a
horizontal flip never changes the label.  Random phase leaves every class
mean near zero, which keeps a linear model on raw pixels close to chance.
"""

from dataclasses import dataclass

import numpy as np

CYCLES = (2.0, 3.0, 4.5, 6.5, 9.0)
ORIENTATION_GROUPS = ((0.0, 90.0), (45.0, 135.0))


@dataclass
class Dataset:
    images: np.ndarray  # (n, 3, h, w) float32
    labels: np.ndarray  # (n,) int64
    n_classes: int

    def __len__(self):
        return len(self.labels)

    def split(self, n_train):
        return (Dataset(self.images[:n_train], self.labels[:n_train], self.n_classes),
                Dataset(self.images[n_train:], self.labels[n_train:], self.n_classes))


def synth_dataset(seed, n_samples, n_classes=10, hw=64, noise=0.5):
    if hw % 32:
        raise ValueError(f"hw must be divisible by 32, got {hw}")
    n_kinds = len(CYCLES) * len(ORIENTATION_GROUPS)
    if not 1 <= n_classes <= n_kinds:
        raise ValueError(f"n_classes must be in [1, {n_kinds}]")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n_samples) % n_classes).astype(np.int64)
    coords = (np.arange(hw) + 0.5) / hw
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    images = np.empty((n_samples, 3, hw, hw), dtype=np.float32)
    for i, c in enumerate(labels):
        cycles = CYCLES[c // 2] * rng.uniform(0.92, 1.08)
        theta = np.deg2rad(rng.choice(ORIENTATION_GROUPS[c % 2]) + rng.uniform(-6, 6))
        phase = rng.uniform(0, 2 * np.pi)
        u = xx * np.cos(theta) + yy * np.sin(theta)
        pattern = np.sin(2 * np.pi * cycles * u + phase)
        gain = rng.uniform(0.7, 1.3, size=(3, 1, 1))
        images[i] = gain * pattern + noise * rng.standard_normal((3, hw, hw))
    return Dataset(images, labels, n_classes)


def hflip(images):
    return images[..., ::-1]
