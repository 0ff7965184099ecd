"""Fundus enhancement: colour spaces, CLAHE, gamma, resizing, histograms.

Images travel as :class:`ImageU8`, an 8-bit H x W x C array tagged with its
colour space, so that e.g. CLAHE refuses a three-channel RGB image.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, ShapeError, ValidationError

logger = logging.getLogger(__name__)

SPACES = {"RGB": 3, "LAB": 3, "HSV": 3, "GRAY": 1}

# sRGB (D65) -> XYZ
_RGB2XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])
_DELTA = 6.0 / 29.0


@dataclass(frozen=True)
class ImageU8:
    """8-bit raster, row-major H x W x C with an explicit colour space tag."""

    data: np.ndarray
    space: str = "RGB"

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ShapeError(f"image data must be H x W x C, got shape {data.shape}")
        if self.space not in SPACES:
            raise ValidationError(f"unknown colour space {self.space!r}")
        if data.shape[2] != SPACES[self.space]:
            raise ValidationError(
                f"{self.space} images need {SPACES[self.space]} channel(s), got {data.shape[2]}"
            )
        if data.dtype != np.uint8:
            if not np.issubdtype(data.dtype, np.integer):
                raise ValidationError(f"pixel data must be integer, got {data.dtype}")
            if data.size and (data.min() < 0 or data.max() > 255):
                raise ValidationError("pixel values must lie in 0..255")
            data = data.astype(np.uint8)
        object.__setattr__(self, "data", np.ascontiguousarray(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def plane(self) -> np.ndarray:
        """The single channel of a GRAY image as an H x W array."""
        return self.data[:, :, 0]


def _require(img: ImageU8, *spaces: str) -> None:
    if not isinstance(img, ImageU8):
        raise ValidationError(f"expected an ImageU8, got {type(img).__name__}")
    if img.space not in spaces:
        raise ValidationError(f"expected a {' or '.join(spaces)} image, got {img.space}")


def round_half_up(x) -> np.ndarray:
    return np.floor(np.asarray(x) + 0.5)


def to_u8(x) -> np.ndarray:
    return np.clip(round_half_up(x), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def read_image(path) -> ImageU8:
    """Decode a PNG or JPEG file as an RGB image."""
    from PIL import Image

    with Image.open(path) as im:
        return ImageU8(np.asarray(im.convert("RGB")), "RGB")


def write_png(img: ImageU8, path) -> None:
    from PIL import Image

    if img.space not in ("RGB", "GRAY"):
        raise ValidationError(f"only RGB or GRAY images can be written, got {img.space}")
    arr = img.plane if img.space == "GRAY" else img.data
    Image.fromarray(arr).save(path, format="PNG")


# ---------------------------------------------------------------------------
# colour spaces
# ---------------------------------------------------------------------------

def srgb_to_linear(c) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.abs(c) ** (1 / 2.4) - 0.055)


def rgb_to_lab_float(rgb) -> np.ndarray:
    """8-bit sRGB array (..., 3) -> float CIELAB (L in [0, 100]), D65 white."""
    xyz = srgb_to_linear(np.asarray(rgb, dtype=np.float64) / 255.0) @ _RGB2XYZ.T
    t = xyz / _WHITE_D65
    f = np.where(t > _DELTA ** 3, np.cbrt(t), t / (3 * _DELTA ** 2) + 4.0 / 29.0)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def lab_float_to_rgb(lab) -> np.ndarray:
    """Inverse of :func:`rgb_to_lab_float`; returns unclipped 0..255 floats."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    f = np.stack([fy + lab[..., 1] / 500.0, fy, fy - lab[..., 2] / 200.0], axis=-1)
    t = np.where(f > _DELTA, f ** 3, 3 * _DELTA ** 2 * (f - 4.0 / 29.0))
    lin = (t * _WHITE_D65) @ np.linalg.inv(_RGB2XYZ).T
    return linear_to_srgb(np.clip(lin, 0.0, 1.0)) * 255.0


def rgb_to_lab(img: ImageU8) -> ImageU8:
    """CIELAB stored in 8 bits: L scaled by 255/100, a and b offset by 128."""
    _require(img, "RGB")
    lab = rgb_to_lab_float(img.data)
    enc = np.stack([lab[..., 0] * 255.0 / 100.0, lab[..., 1] + 128.0, lab[..., 2] + 128.0], axis=-1)
    return ImageU8(to_u8(enc), "LAB")


def lab_to_rgb(img: ImageU8) -> ImageU8:
    _require(img, "LAB")
    d = img.data.astype(np.float64)
    lab = np.stack([d[..., 0] * 100.0 / 255.0, d[..., 1] - 128.0, d[..., 2] - 128.0], axis=-1)
    return ImageU8(to_u8(lab_float_to_rgb(lab)), "RGB")


def rgb_to_hsv_float(rgb) -> np.ndarray:
    """Hexcone HSV of a float RGB array in [0, 1]; H in [0, 1) turns."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    delta = v - rgb.min(axis=-1)
    s = np.where(v > 0, delta / np.where(v > 0, v, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    h = np.where(v == r, (g - b) / safe,
                 np.where(v == g, 2.0 + (b - r) / safe, 4.0 + (r - g) / safe))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_float_to_rgb(hsv) -> np.ndarray:
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = hsv[..., 0] % 1.0, hsv[..., 1], hsv[..., 2]
    h6 = h * 6.0
    sector = np.floor(h6).astype(int) % 6
    frac = h6 - np.floor(h6)
    p = v * (1 - s)
    q = v * (1 - s * frac)
    t = v * (1 - s * (1 - frac))
    choices = [
        np.stack(c, axis=-1)
        for c in ((v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q))
    ]
    out = np.zeros(hsv.shape)
    for k in range(6):
        out = np.where((sector == k)[..., None], choices[k], out)
    return out


def rgb_to_hsv(img: ImageU8) -> ImageU8:
    """8-bit HSV: hue as 256ths of a full turn, S and V scaled to 0..255."""
    _require(img, "RGB")
    hsv = rgb_to_hsv_float(img.data / 255.0)
    h = round_half_up(hsv[..., 0] * 256.0) % 256
    return ImageU8(to_u8(np.stack([h, hsv[..., 1] * 255.0, hsv[..., 2] * 255.0], axis=-1)), "HSV")


def hsv_to_rgb(img: ImageU8) -> ImageU8:
    _require(img, "HSV")
    d = img.data.astype(np.float64)
    hsv = np.stack([d[..., 0] / 256.0, d[..., 1] / 255.0, d[..., 2] / 255.0], axis=-1)
    return ImageU8(to_u8(hsv_float_to_rgb(hsv) * 255.0), "RGB")


def channel_extract(img: ImageU8, idx: int) -> ImageU8:
    """Pull one channel out as a GRAY image (e.g. L of LAB, G of RGB, V of HSV)."""
    if not 0 <= idx < img.channels:
        raise ShapeError(f"channel {idx} out of range for a {img.channels}-channel image")
    return ImageU8(img.data[:, :, idx], "GRAY")


def luminance(img: ImageU8) -> np.ndarray:
    """Rec. 601 luma of an RGB image (or the plane of a GRAY one) as floats."""
    _require(img, "RGB", "GRAY")
    if img.space == "GRAY":
        return img.plane.astype(np.float64)
    return img.data.astype(np.float64) @ np.array([0.299, 0.587, 0.114])


# ---------------------------------------------------------------------------
# CLAHE
# ---------------------------------------------------------------------------

def clip_histogram(hist: np.ndarray, ceiling: int) -> np.ndarray:
    """Clip bins at ``ceiling`` and spread the excess evenly over all 256 bins.

    The integer part of ``excess / 256`` goes to every bin; the remainder adds
    one count to bins 0, 1, ... in turn.  Single pass.
    """
    hist = hist.astype(np.int64)
    excess = int(np.maximum(hist - ceiling, 0).sum())
    if excess == 0:
        return hist
    out = np.minimum(hist, ceiling)
    out += excess // 256
    out[: excess % 256] += 1
    return out


def equalization_lut(hist: np.ndarray) -> np.ndarray:
    """Map levels through the normalised CDF, scaled to 0..255."""
    cdf = np.cumsum(hist)
    return to_u8(cdf * 255.0 / cdf[-1])


def clahe_luts(plane: np.ndarray, clip_limit: float, grid: tuple[int, int]) -> np.ndarray:
    """Per-tile lookup tables, shape (grid_y, grid_x, 256), of an edge-padded plane."""
    gy, gx = grid
    th, tw = plane.shape[0] // gy, plane.shape[1] // gx
    tile_px = th * tw
    ceiling = None if not np.isfinite(clip_limit) else max(1, int(clip_limit * tile_px / 256.0))
    luts = np.empty((gy, gx, 256), dtype=np.uint8)
    for i in range(gy):
        for j in range(gx):
            tile = plane[i * th:(i + 1) * th, j * tw:(j + 1) * tw]
            hist = np.bincount(tile.ravel(), minlength=256)
            if ceiling is not None:
                hist = clip_histogram(hist, ceiling)
            luts[i, j] = equalization_lut(hist)
    return luts


def _axis_weights(n: int, tile: int, count: int):
    # fractional tile coordinate of each pixel centre relative to tile centres
    pos = (np.arange(n) + 0.5) / tile - 0.5
    lo = np.floor(pos).astype(int)
    w = pos - lo
    return np.clip(lo, 0, count - 1), np.clip(lo + 1, 0, count - 1), w


def clahe(img: ImageU8, clip_limit: float = 2.0, grid: tuple[int, int] = (8, 8)) -> ImageU8:
    """Contrast-limited adaptive histogram equalisation of a GRAY image.

    The image is edge-padded at the bottom/right until the ``grid`` (rows,
    cols) of tiles divides it.  Each tile's histogram is clipped at
    ``clip_limit * tile_pixels / 256`` (pass ``float('inf')`` to disable),
    equalised, and every output pixel bilinearly blends the mappings of the
    four nearest tile centres.
    """
    _require(img, "GRAY")
    gy, gx = int(grid[0]), int(grid[1])
    if gy < 1 or gx < 1:
        raise ConfigError(f"CLAHE grid must be >= 1 x 1, got {grid}")
    if not clip_limit > 0:
        raise ConfigError(f"clip_limit must be positive, got {clip_limit}")
    h, w = img.height, img.width
    ph, pw = -(-h // gy) * gy, -(-w // gx) * gx
    plane = np.pad(img.plane, ((0, ph - h), (0, pw - w)), mode="edge")
    luts = clahe_luts(plane, clip_limit, (gy, gx)).astype(np.float64)

    y0, y1, wy = _axis_weights(ph, ph // gy, gy)
    x0, x1, wx = _axis_weights(pw, pw // gx, gx)
    y0, y1, wy = y0[:, None], y1[:, None], wy[:, None]
    top = (1 - wx) * luts[y0, x0, plane] + wx * luts[y0, x1, plane]
    bottom = (1 - wx) * luts[y1, x0, plane] + wx * luts[y1, x1, plane]
    out = (1 - wy) * top + wy * bottom
    return ImageU8(to_u8(out[:h, :w]), "GRAY")


# ---------------------------------------------------------------------------
# gamma, resize
# ---------------------------------------------------------------------------

def gamma_lut(gamma: float) -> np.ndarray:
    if not gamma > 0:
        raise ConfigError(f"gamma must be > 0, got {gamma}")
    levels = np.arange(256) / 255.0
    return to_u8(255.0 * levels ** (1.0 / gamma))


def gamma_correct(img: ImageU8, gamma: float) -> ImageU8:
    """``out = round(255 * (in / 255) ** (1 / gamma))``: gamma < 1 darkens, > 1 brightens."""
    _require(img, "RGB", "GRAY")
    return ImageU8(gamma_lut(gamma)[img.data], img.space)


def resize(img: ImageU8, size=(256, 256)) -> ImageU8:
    """Bilinear resampling with half-pixel centres to ``size`` = (height, width)."""
    if isinstance(size, int):
        size = (size, size)
    oh, ow = int(size[0]), int(size[1])
    if oh < 1 or ow < 1:
        raise ConfigError(f"resize target must be at least 1 x 1, got {size}")
    if (oh, ow) == (img.height, img.width):
        return ImageU8(img.data.copy(), img.space)

    def coords(n_out, n_in):
        src = np.clip((np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, wy = coords(oh, img.height)
    x0, x1, wx = coords(ow, img.width)
    d = img.data.astype(np.float64)
    wx = wx[None, :, None]
    top = d[y0][:, x0] * (1 - wx) + d[y0][:, x1] * wx
    bot = d[y1][:, x0] * (1 - wx) + d[y1][:, x1] * wx
    out = top * (1 - wy[:, None, None]) + bot * wy[:, None, None]
    return ImageU8(to_u8(out), img.space)


# ---------------------------------------------------------------------------
# histograms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Histogram256:
    bins: np.ndarray
    total: int

    def normalized(self) -> np.ndarray:
        return self.bins / self.total


def histogram(img: ImageU8) -> Histogram256:
    _require(img, "GRAY")
    bins = np.bincount(img.plane.ravel(), minlength=256).astype(np.int64)
    return Histogram256(bins, int(bins.sum()))


def histogram_distance(a: Histogram256, b: Histogram256) -> float:
    """L1 distance between normalised histograms, in [0, 2]."""
    return float(np.abs(a.normalized() - b.normalized()).sum())


def write_histogram_csv(hist: Histogram256, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin", "count"])
        for i, c in enumerate(hist.bins):
            w.writerow([i, int(c)])


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnhanceParams:
    clip_limit: float = 2.0
    grid: tuple = (8, 8)
    gamma: float | None = None
    size: int = 256


def enhance_pipeline(img: ImageU8, params: EnhanceParams | None = None) -> ImageU8:
    """RGB -> LAB -> L channel -> CLAHE -> optional gamma -> resize (GRAY out)."""
    params = EnhanceParams() if params is None else params
    _require(img, "RGB")
    stages = ["rgb_to_lab", "extract(L)", f"clahe(clip={params.clip_limit}, grid={tuple(params.grid)})"]
    out = clahe(channel_extract(rgb_to_lab(img), 0), params.clip_limit, tuple(params.grid))
    if params.gamma is not None:
        stages.append(f"gamma({params.gamma})")
        out = gamma_correct(out, params.gamma)
    stages.append(f"resize({params.size}x{params.size})")
    out = resize(out, (params.size, params.size))
    logger.debug("enhance stages: %s", " -> ".join(stages))
    return out


def to_network_input(img: ImageU8) -> np.ndarray:
    """GRAY image -> H x W x 3 float array in [0, 1] (channel replicated)."""
    _require(img, "GRAY")
    return np.repeat(img.data.astype(np.float64) / 255.0, 3, axis=2)


def save_enhanced(img: ImageU8, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    write_png(img, path)
