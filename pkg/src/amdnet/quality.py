"""Contour-based quality gate and full-reference fidelity metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .exceptions import PreconditionError, ShapeError, ValidationError
from .preprocess import ImageU8, luminance, to_u8

MIN_CONTOUR_POINTS = 16
MAX_VALUE = 255.0

# clockwise (y grows downward), starting west
_DIRS = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_DIR_INDEX = {d: i for i, d in enumerate(_DIRS)}


@dataclass(frozen=True)
class QualityThresholds:
    """Acceptance thresholds; set one to ``None`` to disable that check."""

    min_lum: float | None = 20.0
    max_lum: float | None = 235.0
    min_contrast: float | None = 15.0
    min_sharp: float | None = 15.0


@dataclass
class QualityReport:
    sharpness: float
    illumination: float
    contrast: float
    contour_count: int
    reasons: list = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return not self.reasons

    @property
    def decision(self) -> str:
        return "accept" if self.accepted else "reject"

    @property
    def reason(self) -> str:
        return ";".join(self.reasons)


@dataclass(frozen=True)
class ContourResult:
    contours: list
    sharpness: float
    threshold: float


# ---------------------------------------------------------------------------
# edges and contours
# ---------------------------------------------------------------------------

def gradient_magnitude(plane) -> np.ndarray:
    """Sobel gradient magnitude in intensity units per pixel (kernel / 8)."""
    p = np.asarray(plane, dtype=np.float64)
    gx = ndimage.sobel(p, axis=1, mode="nearest") / 8.0
    gy = ndimage.sobel(p, axis=0, mode="nearest") / 8.0
    return np.hypot(gx, gy)


def otsu_threshold(values, bins: int = 256) -> float:
    """Otsu's threshold over a ``bins``-bin histogram of ``values``."""
    v = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return hi
    hist, edges = np.histogram(v, bins=bins, range=(lo, hi))
    centers = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    s0 = np.cumsum(hist * centers)
    mu0 = s0 / np.maximum(w0, 1)
    mu1 = (s0[-1] - s0) / np.maximum(w1, 1)
    between = w0 * w1 * (mu0 - mu1) ** 2
    return float(edges[int(np.argmax(between[:-1])) + 1])


def trace_border(mask: np.ndarray, start: tuple[int, int]) -> list[tuple[int, int]]:
    """Moore-neighbour tracing of the outer border of the component at ``start``.

    ``start`` must be the component's first pixel in raster order, so its
    west neighbour is background.  Returns border pixels in clockwise order.
    """
    h, w = mask.shape

    def fg(y, x):
        return 0 <= y < h and 0 <= x < w and mask[y, x]

    p = start
    back = 0
    contour = [p]
    second = None
    limit = 4 * int(mask.sum()) + 8
    for _ in range(limit):
        for k in range(1, 9):
            d = (back + k) % 8
            q = (p[0] + _DIRS[d][0], p[1] + _DIRS[d][1])
            if fg(*q):
                break
        else:
            return contour  # isolated pixel
        prev = _DIRS[(d - 1) % 8]
        back = _DIR_INDEX[(p[0] + prev[0] - q[0], p[1] + prev[1] - q[1])]
        if p == start and q == second:
            break
        if second is None:
            second = q
        contour.append(q)
        p = q
    if len(contour) > 1 and contour[-1] == start:
        contour.pop()
    return contour


def extract_contours(img: ImageU8, min_points: int = MIN_CONTOUR_POINTS) -> ContourResult:
    """Sobel magnitude -> Otsu edge map -> outer border of each 8-connected edge blob.

    Contours with fewer than ``min_points`` points are dropped; sharpness is
    the mean gradient magnitude over the pixels of the retained contours.
    """
    if not isinstance(img, ImageU8) or img.space != "GRAY":
        raise ValidationError("extract_contours expects a GRAY ImageU8")
    if img.height < 3 or img.width < 3:
        raise PreconditionError(f"image must be at least 3 x 3, got {img.height} x {img.width}")
    mag = gradient_magnitude(img.plane)
    if mag.max() <= 0:
        return ContourResult([], 0.0, 0.0)
    thr = otsu_threshold(mag)
    edges = mag > thr
    labels, n = ndimage.label(edges, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return ContourResult([], 0.0, thr)
    flat = labels.ravel()
    ids, first = np.unique(flat, return_index=True)
    contours = []
    for lab, idx in zip(ids, first):
        if lab == 0:
            continue
        start = divmod(int(idx), img.width)
        c = trace_border(labels == lab, start)
        if len(c) >= min_points:
            contours.append(np.array(c, dtype=np.int64))
    if not contours:
        return ContourResult([], 0.0, thr)
    pts = np.unique(np.concatenate(contours), axis=0)
    sharp = float(mag[pts[:, 0], pts[:, 1]].mean())
    return ContourResult(contours, sharp, thr)


def assess_quality(img: ImageU8, thresholds: QualityThresholds | None = None) -> QualityReport:
    """Score illumination, contrast and edge sharpness and gate the image.

    Reason codes: ``illumination-low``, ``illumination-high``, ``contrast``,
    ``sharpness``.
    """
    t = QualityThresholds() if thresholds is None else thresholds
    lum = luminance(img)
    illum = float(lum.mean())
    contrast = float(lum.std())
    gray = ImageU8(to_u8(lum), "GRAY")
    if gray.height >= 3 and gray.width >= 3:
        cr = extract_contours(gray)
        sharp, count = cr.sharpness, len(cr.contours)
    else:
        sharp, count = 0.0, 0

    reasons = []
    if t.min_lum is not None and illum < t.min_lum:
        reasons.append("illumination-low")
    if t.max_lum is not None and illum > t.max_lum:
        reasons.append("illumination-high")
    if t.min_contrast is not None and contrast < t.min_contrast:
        reasons.append("contrast")
    if t.min_sharp is not None and sharp < t.min_sharp:
        reasons.append("sharpness")
    return QualityReport(sharp, illum, contrast, count, reasons)


# ---------------------------------------------------------------------------
# fidelity
# ---------------------------------------------------------------------------

def _pixels(img) -> np.ndarray:
    return (img.data if isinstance(img, ImageU8) else np.asarray(img)).astype(np.float64)


def mse(a, b) -> float:
    """Mean squared error over every pixel and channel."""
    x, y = _pixels(a), _pixels(b)
    if x.shape != y.shape:
        raise ValidationError(f"images differ in shape: {x.shape} vs {y.shape}")
    return float(np.mean((x - y) ** 2))


def psnr_from_mse(err: float, max_value: float = MAX_VALUE) -> float:
    if err < 0:
        raise ValueError("mse must be non-negative")
    if err == 0:
        return math.inf
    return 10.0 * math.log10(max_value ** 2 / err)


def psnr(a, b, max_value: float = MAX_VALUE) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    return psnr_from_mse(mse(a, b), max_value)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    h, w = img.shape
    rows = sum(g[i] * img[i:h - k + 1 + i, :] for i in range(k))
    return sum(g[j] * rows[:, j:w - k + 1 + j] for j in range(k))


def ssim(a, b, window: int = 11, sigma: float = 1.5, max_value: float = MAX_VALUE) -> float:
    """Mean SSIM over all fully-contained Gaussian windows of two GRAY images."""
    x, y = _pixels(a), _pixels(b)
    if x.ndim == 3:
        if x.shape[2] != 1:
            raise ValidationError("ssim expects single-channel images")
        x = x[:, :, 0]
    if y.ndim == 3:
        y = y[:, :, 0]
    if x.shape != y.shape:
        raise ShapeError(f"images differ in shape: {x.shape} vs {y.shape}")
    if min(x.shape) < window:
        raise PreconditionError(f"ssim needs images of at least {window} x {window}")
    c1 = (0.01 * max_value) ** 2
    c2 = (0.03 * max_value) ** 2
    g = gaussian_window(window, sigma)
    mu_x, mu_y = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mu_x ** 2
    syy = _filter_valid(y * y, g) - mu_y ** 2
    sxy = _filter_valid(x * y, g) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class FidelityScores:
    mse: float
    psnr: float
    ssim: float


def fidelity(processed, original) -> FidelityScores:
    err = mse(processed, original)
    return FidelityScores(err, psnr_from_mse(err), ssim(processed, original))


def format_psnr(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.2f}"
