"""Input validation helpers shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np

from .exceptions import ShapeError, ValidationError
from .preprocess import ImageU8


def check_rgb_images(X) -> list[ImageU8]:
    """Coerce ``X`` to a list of RGB :class:`ImageU8`.

    Accepts a sequence of ImageU8, a sequence of H x W x 3 uint8 arrays or a
    single N x H x W x 3 uint8 array.
    """
    if isinstance(X, ImageU8):
        X = [X]
    if isinstance(X, np.ndarray):
        if X.ndim != 4:
            raise ShapeError(f"expected N x H x W x 3 images, got shape {X.shape}")
        X = list(X)
    out = []
    for i, img in enumerate(X):
        if not isinstance(img, ImageU8):
            arr = np.asarray(img)
            if arr.dtype != np.uint8:
                raise ValidationError(f"image {i}: expected uint8 pixels, got {arr.dtype}")
            img = ImageU8(arr, "RGB")
        if img.space != "RGB":
            raise ValidationError(f"image {i}: expected RGB, got {img.space}")
        out.append(img)
    if not out:
        raise ValidationError("no images given")
    return out


def check_batch(X, size: int | None = None, channels: int = 3) -> np.ndarray:
    """Validate a float network batch: N x size x size x channels, finite, in [0, 1]."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 4:
        raise ShapeError(f"expected an N x H x W x C batch, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValidationError("empty batch")
    if X.shape[3] != channels:
        raise ShapeError(f"expected {channels} channels, got {X.shape[3]}")
    if size is not None and X.shape[1:3] != (size, size):
        raise ShapeError(f"expected {size} x {size} images, got {X.shape[1]} x {X.shape[2]}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("batch contains NaN or infinite values")
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValidationError("pixel values must be pre-scaled to [0, 1]")
    return X


def check_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n_samples:
        raise ShapeError(f"expected {n_samples} labels, got shape {y.shape}")
    return y
