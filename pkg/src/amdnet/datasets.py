"""Synthetic fundus-like images for fixtures, demos and smoke training.

The images only mimic the gross layout of a fundus photograph (dark
surround, orange retinal disc, bright optic disc, dark vessels) plus a
class-specific lesion pattern; they are not clinically meaningful.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from .data import CLASSES
from .preprocess import ImageU8, to_u8, write_png


def make_fundus_image(size: int = 256, label: str | None = None, rng=None,
                      blur: int = 0) -> ImageU8:
    """Render one synthetic fundus RGB image.

    ``label`` selects a lesion pattern (``AMD``: yellow drusen near the
    centre, ``Cataract``: global haze, ``Diabetes``: red dots and bright
    exudates, ``Normal`` or ``None``: none).  ``blur`` applies a box filter of
    that width to simulate a defocused capture.
    """
    rng = np.random.default_rng(rng)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = size / 2 + rng.uniform(-0.03, 0.03) * size
    cx = size / 2 + rng.uniform(-0.03, 0.03) * size
    radius = 0.42 * size
    r = np.hypot(yy - cy, xx - cx)
    disk = r <= radius

    shade = np.clip(1.0 - 0.45 * (r / radius) ** 2, 0, 1)
    img = np.zeros((size, size, 3))
    base = np.array([200.0, 90.0, 40.0]) * rng.uniform(0.9, 1.1)
    img[disk] = base * shade[disk, None]

    # optic disc
    ody, odx = cy + rng.uniform(-0.05, 0.05) * size, cx + 0.22 * size * rng.choice([-1, 1])
    od = np.hypot(yy - ody, xx - odx) <= 0.07 * size
    img[od] = [245.0, 210.0, 150.0]

    # vessels: sinusoidal arcs leaving the optic disc
    for k in range(6):
        amp = rng.uniform(0.05, 0.25) * size
        phase = rng.uniform(0, 2 * np.pi)
        slope = rng.uniform(-0.6, 0.6)
        path = ody + slope * (xx - odx) + amp * np.sin((xx - odx) / (0.25 * size) + phase) * (k % 2 * 2 - 1)
        width = rng.uniform(0.006, 0.014) * size
        vessel = (np.abs(yy - path) < width) & disk & ~od
        img[vessel] *= 0.55

    if label == "AMD":
        for _ in range(25):
            dy, dx = rng.normal(0, 0.06 * size, 2)
            spot = np.hypot(yy - cy - dy, xx - cx - dx) <= rng.uniform(0.008, 0.02) * size
            img[spot & disk] = [235.0, 215.0, 90.0]
    elif label == "Diabetes":
        for _ in range(30):
            py, px = rng.uniform(0.2, 0.8, 2) * size
            spot = np.hypot(yy - py, xx - px) <= rng.uniform(0.005, 0.012) * size
            img[spot & disk] = [120.0, 10.0, 10.0] if rng.random() < 0.6 else [250.0, 240.0, 170.0]
    elif label == "Cataract":
        img[disk] = 0.5 * img[disk] + 0.5 * np.array([210.0, 190.0, 170.0])

    img += rng.normal(0, 3.0, img.shape) * disk[..., None]
    if blur > 1:
        img = ndimage.uniform_filter(img, size=(blur, blur, 1), mode="nearest")
    return ImageU8(to_u8(img), "RGB")


def make_disk_image(size: int = 256, radius: float = 60.0, value: int = 255) -> ImageU8:
    """Filled disk of ``value`` on black, centred, as a GRAY image."""
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    return ImageU8(((np.hypot(yy - c, xx - c) <= radius) * value).astype(np.uint8), "GRAY")


def make_classification(n_per_class: int = 10, size: int = 64, seed: int = 0):
    """Synthetic 4-class image set as network-ready arrays.

    Returns ``(X, y)`` where ``X`` is N x size x size x 3 in [0, 1] and ``y``
    holds class indices in :data:`amdnet.data.CLASSES` order.
    """
    rng = np.random.default_rng(seed)
    X, y = [], []
    for ci, label in enumerate(CLASSES):
        for _ in range(n_per_class):
            X.append(make_fundus_image(size, label, rng).data / 255.0)
            y.append(ci)
    return np.stack(X), np.asarray(y)


def write_synthetic_tree(root, n_per_class: int = 5, size: int = 128, seed: int = 0) -> Path:
    """Write ``root/<Class>/img_XXX.png`` for each class; returns ``root``."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for label in CLASSES:
        (root / label).mkdir(parents=True, exist_ok=True)
        for i in range(n_per_class):
            write_png(make_fundus_image(size, label, rng), root / label / f"img_{i:03d}.png")
    return root
