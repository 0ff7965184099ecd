"""Seeded training-time augmentation: flips, colour jitter, translation.

All randomness comes from an explicit :class:`numpy.random.Generator`;
:func:`sample_rng` derives the per-sample stream from
``(seed, epoch, sample_index)`` so loading order never changes the result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .preprocess import ImageU8, hsv_float_to_rgb, rgb_to_hsv_float, to_u8


@dataclass(frozen=True)
class AugmentConfig:
    p_hflip: float = 0.5
    p_vflip: float = 0.5
    brightness_delta: tuple = (-0.1, 0.1)
    contrast_factor: tuple = (0.8, 1.2)
    saturation_factor: tuple = (0.8, 1.2)
    hue_delta: tuple = (-0.05, 0.05)
    shift_fraction: tuple = (-0.1, 0.1)

    def __post_init__(self):
        for p in ("p_hflip", "p_vflip"):
            if not 0.0 <= getattr(self, p) <= 1.0:
                raise ConfigError(f"{p} must lie in [0, 1]")
        for name in ("brightness_delta", "contrast_factor", "saturation_factor",
                     "hue_delta", "shift_fraction"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} range is inverted: {lo} > {hi}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.contrast_factor[0] < 0 or self.saturation_factor[0] < 0:
            raise ConfigError("contrast and saturation factors must be non-negative")
        if max(abs(v) for v in self.shift_fraction) >= 1:
            raise ConfigError("shift_fraction must lie strictly inside (-1, 1)")

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(0.0, 0.0, (0.0, 0.0), (1.0, 1.0), (1.0, 1.0), (0.0, 0.0), (0.0, 0.0))


def sample_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, index])


def _uniform(rng, bounds) -> float:
    lo, hi = bounds
    return lo if lo == hi else float(rng.uniform(lo, hi))


def random_flip(img: ImageU8, rng, config: AugmentConfig | None = None) -> ImageU8:
    """Flip horizontally and vertically, each with its own probability."""
    config = AugmentConfig() if config is None else config
    u_h, u_v = rng.random(2)
    data = img.data
    if u_h < config.p_hflip:
        data = data[:, ::-1]
    if u_v < config.p_vflip:
        data = data[::-1]
    return ImageU8(data.copy(), img.space)


def adjust_brightness(x: np.ndarray, delta: float) -> np.ndarray:
    return np.clip(x + delta * 255.0, 0.0, 255.0)


def adjust_contrast(x: np.ndarray, factor: float) -> np.ndarray:
    mean = x.mean(axis=(0, 1), keepdims=True)
    return np.clip((x - mean) * factor + mean, 0.0, 255.0)


def adjust_saturation_hue(x: np.ndarray, factor: float, hue_delta: float) -> np.ndarray:
    if factor == 1.0 and hue_delta == 0.0:
        return x
    hsv = rgb_to_hsv_float(x / 255.0)
    hsv[..., 0] = (hsv[..., 0] + hue_delta) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] * factor, 0.0, 1.0)
    return hsv_float_to_rgb(hsv) * 255.0


def jitter_params(rng, config: AugmentConfig) -> dict:
    return {
        "brightness": _uniform(rng, config.brightness_delta),
        "contrast": _uniform(rng, config.contrast_factor),
        "saturation": _uniform(rng, config.saturation_factor),
        "hue": _uniform(rng, config.hue_delta),
    }


def apply_jitter(img: ImageU8, brightness=0.0, contrast=1.0, saturation=1.0, hue=0.0) -> ImageU8:
    """Brightness, contrast, saturation and hue in that order; one final rounding."""
    if img.space != "RGB":
        raise ConfigError("colour jitter needs an RGB image")
    x = img.data.astype(np.float64)
    x = adjust_brightness(x, brightness)
    x = adjust_contrast(x, contrast)
    x = adjust_saturation_hue(x, saturation, hue)
    return ImageU8(to_u8(x), "RGB")


def color_jitter(img: ImageU8, rng, config: AugmentConfig | None = None) -> ImageU8:
    config = AugmentConfig() if config is None else config
    return apply_jitter(img, **jitter_params(rng, config))


def shift_image(img: ImageU8, dx: int, dy: int) -> ImageU8:
    """Translate by whole pixels (+dx right, +dy down); vacated pixels become 0."""
    h, w = img.height, img.width
    out = np.zeros_like(img.data)
    if abs(dx) < w and abs(dy) < h:
        src = img.data[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
        out[max(0, dy):max(0, dy) + src.shape[0], max(0, dx):max(0, dx) + src.shape[1]] = src
    return ImageU8(out, img.space)


def shift_params(rng, config: AugmentConfig, width: int, height: int) -> tuple[int, int]:
    # truncation toward zero keeps |d| <= fraction * extent
    dx = int(_uniform(rng, config.shift_fraction) * width)
    dy = int(_uniform(rng, config.shift_fraction) * height)
    return dx, dy


def random_shift(img: ImageU8, rng, config: AugmentConfig | None = None) -> ImageU8:
    config = AugmentConfig() if config is None else config
    dx, dy = shift_params(rng, config, img.width, img.height)
    return shift_image(img, dx, dy)


def augment(img: ImageU8, rng, config: AugmentConfig | None = None) -> ImageU8:
    """Flip, colour jitter (RGB only), then shift."""
    config = AugmentConfig() if config is None else config
    out = random_flip(img, rng, config)
    if out.space == "RGB":
        out = color_jitter(out, rng, config)
    return random_shift(out, rng, config)
