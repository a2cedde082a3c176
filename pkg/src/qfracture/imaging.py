"""Grayscale image conditioning: denoise, contrast-enhance, normalise, augment,
edge-detect and flatten.

Images are 2-D float arrays of shape ``(height, width)`` with values in
``[0, 1]``.  Every filter pads by edge replication.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .errors import ConfigError, DataError

AUGMENT_OPS = ("rotate", "hflip", "vflip", "scale", "contrast")


def _default_augment_ops():
    return [
        {"op": "hflip"},
        {"op": "rotate", "degrees": 10.0},
        {"op": "scale", "factor": 1.1},
        {"op": "contrast", "factor": 1.2},
    ]


@dataclass
class PreprocessConfig:
    gaussian_sigma: float = 1.0
    gaussian_kernel: int = 5
    median_window: int = 3
    clahe_tiles: tuple[int, int] = (8, 8)
    clahe_clip: float = 2.0
    canny_low: float = 0.1
    canny_high: float = 0.3
    resize_to: tuple[int, int] = (64, 64)
    augment_ops: list = field(default_factory=_default_augment_ops)
    augment_seed: int = 0
    edge_blend: float = 0.3

    def __post_init__(self):
        self.clahe_tiles = tuple(int(t) for t in self.clahe_tiles)
        self.resize_to = tuple(int(t) for t in self.resize_to)
        self.augment_ops = [dict(op) for op in self.augment_ops]
        self.validate()

    def validate(self):
        if self.gaussian_sigma <= 0:
            raise ConfigError("gaussian_sigma must be positive")
        _check_odd("gaussian_kernel", self.gaussian_kernel)
        _check_odd("median_window", self.median_window)
        if len(self.clahe_tiles) != 2 or min(self.clahe_tiles) < 1:
            raise ConfigError("clahe_tiles must be a pair of positive integers")
        if not self.clahe_clip > 0:
            raise ConfigError("clahe_clip must be positive")
        if not 0 <= self.canny_low < self.canny_high:
            raise ConfigError("need 0 <= canny_low < canny_high")
        if len(self.resize_to) != 2 or min(self.resize_to) < 1:
            raise ConfigError("resize_to must be a pair of positive integers")
        if not 0.0 <= self.edge_blend <= 1.0:
            raise ConfigError("edge_blend must lie in [0, 1]")
        for op in self.augment_ops:
            _check_augment_op(op)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clahe_tiles"] = list(self.clahe_tiles)
        d["resize_to"] = list(self.resize_to)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown preprocess keys: {sorted(unknown)}")
        return cls(**d)


def _check_odd(name, k):
    if int(k) != k or k < 1 or k % 2 == 0:
        raise ConfigError(f"{name} must be a positive odd integer, got {k}")


def _check_augment_op(op):
    kind = op.get("op")
    if kind not in AUGMENT_OPS:
        raise ConfigError(f"unknown augmentation op {kind!r}")
    if kind == "rotate" and op.get("degrees", 0) < 0:
        raise ConfigError("rotate degrees must be non-negative")
    if kind in ("scale", "contrast") and not op.get("factor", 1.0) > 0:
        raise ConfigError(f"{kind} factor must be positive")


def check_image(img) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise DataError(f"expected a non-empty 2-D image, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
        raise DataError("pixel values must lie in [0, 1]")
    return a


# -- denoising ---------------------------------------------------------------

def gaussian_kernel(sigma: float, size: int) -> np.ndarray:
    """Normalised 1-D Gaussian taps; the 2-D kernel is their outer product."""
    _check_odd("kernel_size", size)
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    x = np.arange(size) - size // 2
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _correlate_separable(img, taps_y, taps_x):
    ry, rx = len(taps_y) // 2, len(taps_x) // 2
    p = np.pad(img, ((ry, ry), (rx, rx)), mode="edge")
    h, w = img.shape
    tmp = sum(t * p[:, j:j + w] for j, t in enumerate(taps_x))
    return sum(t * tmp[i:i + h, :] for i, t in enumerate(taps_y))


def gaussian_filter(img, sigma: float = 1.0, kernel_size: int = 5) -> np.ndarray:
    img = check_image(img)
    k = gaussian_kernel(sigma, kernel_size)
    return np.clip(_correlate_separable(img, k, k), 0.0, 1.0)


def median_filter(img, window: int = 3) -> np.ndarray:
    img = check_image(img)
    _check_odd("window", window)
    r = window // 2
    views = sliding_window_view(np.pad(img, r, mode="edge"), (window, window))
    return np.median(views, axis=(-2, -1))


# -- contrast ----------------------------------------------------------------

def _tile_edges(n, tiles):
    return [(i * n) // tiles for i in range(tiles + 1)]


def _equalization_lut(levels, clip):
    """Map 256 levels through the (optionally clipped) cumulative histogram."""
    total = levels.size
    hist = np.bincount(levels.ravel(), minlength=256).astype(np.float64)
    if math.isfinite(clip):
        limit = clip * total / 256.0
        excess = np.maximum(hist - limit, 0.0).sum()
        hist = np.minimum(hist, limit) + excess / 256.0
    cdf = np.cumsum(hist)
    cdf_min = cdf[np.argmax(hist > 0)]
    denom = total - cdf_min
    if denom <= 1e-12 * total:
        return np.arange(256) / 255.0
    return np.rint(np.clip((cdf - cdf_min) / denom, 0.0, 1.0) * 255.0) / 255.0


def _interp_coords(n, edges):
    centers = np.array([(edges[i] + edges[i + 1] - 1) / 2.0 for i in range(len(edges) - 1)])
    if len(centers) == 1:
        return np.zeros(n, int), np.zeros(n, int), np.zeros(n)
    pos = np.arange(n, dtype=np.float64)
    # beyond the outer centres the clipped fraction pins to the edge tile
    hi = np.clip(np.searchsorted(centers, pos, side="right"), 1, len(centers) - 1)
    lo = hi - 1
    span = centers[hi] - centers[lo]
    frac = np.clip((pos - centers[lo]) / span, 0.0, 1.0)
    return lo, hi, frac


def clahe(img, tiles=(8, 8), clip: float = 2.0) -> np.ndarray:
    """Contrast-limited adaptive histogram equalisation.

    Parameters
    ----------
    tiles : (rows, cols)
        Size of the tile grid.
    clip : float
        Clip limit as a multiple of the mean bin count; ``math.inf`` disables
        clipping.  Excess counts are spread uniformly over all 256 bins.

    Each tile gets an equalisation lookup table; output pixels blend the four
    nearest tile tables bilinearly by distance to the tile centres.
    """
    img = check_image(img)
    ty, tx = (int(t) for t in tiles)
    if ty < 1 or tx < 1:
        raise ConfigError("tile grid must be at least 1x1")
    if not clip > 0:
        raise ConfigError("clip must be positive")
    h, w = img.shape
    if h < ty or w < tx:
        raise ConfigError(f"image {h}x{w} is smaller than the {ty}x{tx} tile grid")
    levels = np.rint(img * 255.0).astype(np.int64)
    ey, ex = _tile_edges(h, ty), _tile_edges(w, tx)
    luts = np.empty((ty, tx, 256))
    for i in range(ty):
        for j in range(tx):
            luts[i, j] = _equalization_lut(levels[ey[i]:ey[i + 1], ex[j]:ex[j + 1]], clip)
    y0, y1, fy = _interp_coords(h, ey)
    x0, x1, fx = _interp_coords(w, ex)
    Y0, Y1, FY = y0[:, None], y1[:, None], fy[:, None]
    X0, X1, FX = x0[None, :], x1[None, :], fx[None, :]
    # nested lerps are exact where neighbouring tables agree
    a, b = luts[Y0, X0, levels], luts[Y0, X1, levels]
    c, d = luts[Y1, X0, levels], luts[Y1, X1, levels]
    top = a + FX * (b - a)
    bottom = c + FX * (d - c)
    return np.clip(top + FY * (bottom - top), 0.0, 1.0)


def normalize(img) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant image becomes all zeros."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi - lo <= 0:
        return np.zeros_like(img)
    return np.clip((img - lo) / (hi - lo), 0.0, 1.0)


# -- edges -------------------------------------------------------------------

_SOBEL_SMOOTH = np.array([1.0, 2.0, 1.0])
_SOBEL_DIFF = np.array([-1.0, 0.0, 1.0])


def sobel(img):
    """Return (gx, gy) with edge-replicated borders; y grows downwards."""
    gx = _correlate_separable(img, _SOBEL_SMOOTH, _SOBEL_DIFF)
    gy = _correlate_separable(img, _SOBEL_DIFF, _SOBEL_SMOOTH)
    return gx, gy


def canny(img, low: float = 0.1, high: float = 0.3, sigma: float = 1.0, kernel_size: int = 5) -> np.ndarray:
    """Binary Canny edge map.

    Gradient magnitudes are divided by 4 so a unit intensity step scores 1;
    ``low``/``high`` are hysteresis thresholds on that scale.  Non-maximum
    suppression keeps a pixel when it is >= its backward neighbour and > its
    forward neighbour along the quantised gradient direction, so plateaus
    of equal magnitude yield a one-pixel-wide line.
    """
    if not 0 <= low < high:
        raise ConfigError(f"need 0 <= low < high, got low={low}, high={high}")
    img = check_image(img)
    smooth = gaussian_filter(img, sigma, kernel_size)
    gx, gy = sobel(smooth)
    mag = np.hypot(gx, gy) / 4.0
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0

    p = np.pad(mag, 1, mode="edge")
    h, w = mag.shape

    def shifted(dy, dx):
        return p[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]

    sector = np.digitize(angle, [22.5, 67.5, 112.5, 157.5]) % 4
    offsets = [(0, 1), (1, 1), (1, 0), (1, -1)]
    keep = np.zeros_like(mag, dtype=bool)
    for s, (dy, dx) in enumerate(offsets):
        mask = sector == s
        fwd, back = shifted(dy, dx), shifted(-dy, -dx)
        keep |= mask & (mag >= back) & (mag > fwd)
    keep &= mag > 0

    weak = keep & (mag >= low)
    strong = keep & (mag >= high)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return np.zeros_like(mag)
    anchored = np.zeros(n + 1, dtype=bool)
    anchored[np.unique(labels[strong])] = True
    anchored[0] = False
    return anchored[labels].astype(np.float64)


# -- geometry ----------------------------------------------------------------

def _sample_bilinear(img, sy, sx):
    """Bilinear sample at float coords; outside samples read as zero."""
    h, w = img.shape
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    fy, fx = sy - y0, sx - x0
    out = np.zeros(sy.shape)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yy, xx = y0 + dy, x0 + dx
            ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            vals = np.where(ok, img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)], 0.0)
            out += wy * wx * vals
    return out


def rotate(img, degrees: float) -> np.ndarray:
    """Rotate about the centre, clockwise as displayed (row 0 at the top)."""
    img = check_image(img)
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    sx = c * dx + s * dy + cx
    sy = -s * dx + c * dy + cy
    return np.clip(_sample_bilinear(img, sy, sx), 0.0, 1.0)


def zoom(img, factor: float) -> np.ndarray:
    """Scale about the image centre keeping the canvas size (zero fill)."""
    img = check_image(img)
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return np.clip(_sample_bilinear(img, (yy - cy) / factor + cy, (xx - cx) / factor + cx), 0.0, 1.0)


def adjust_contrast(img, factor: float) -> np.ndarray:
    img = check_image(img)
    mean = img.mean()
    return np.clip(img * factor + mean * (1.0 - factor), 0.0, 1.0)


def resize(img, size) -> np.ndarray:
    """Bilinear resize to ``size = (width, height)`` with corner alignment."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    out_w, out_h = size

    def coords(n_in, n_out):
        if n_out == 1:
            return np.zeros(1)
        return np.arange(n_out) * (n_in - 1) / (n_out - 1)

    sy, sx = coords(h, out_h), coords(w, out_w)
    y0 = np.minimum(np.floor(sy).astype(int), h - 1)
    x0 = np.minimum(np.floor(sx).astype(int), w - 1)
    y1, x1 = np.minimum(y0 + 1, h - 1), np.minimum(x0 + 1, w - 1)
    fy, fx = (sy - y0)[:, None], (sx - x0)[None, :]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return np.clip(top * (1 - fy) + bot * fy, 0.0, 1.0)


def augment(img, cfg: PreprocessConfig) -> list[np.ndarray]:
    """One variant per configured op, in order.  Rotation angles are drawn
    uniformly from ``[-degrees, degrees]`` by a PRNG seeded with ``augment_seed``."""
    img = check_image(img)
    rng = np.random.default_rng(cfg.augment_seed)
    out = []
    for op in cfg.augment_ops:
        kind = op["op"]
        if kind == "hflip":
            out.append(img[:, ::-1].copy())
        elif kind == "vflip":
            out.append(img[::-1, :].copy())
        elif kind == "rotate":
            d = float(op.get("degrees", 0.0))
            out.append(rotate(img, rng.uniform(-d, d) if d > 0 else 0.0))
        elif kind == "scale":
            out.append(zoom(img, float(op.get("factor", 1.0))))
        elif kind == "contrast":
            out.append(adjust_contrast(img, float(op.get("factor", 1.0))))
        else:
            raise ConfigError(f"unknown augmentation op {kind!r}")
    return out


# -- pipeline glue -----------------------------------------------------------

def condition(img, cfg: PreprocessConfig) -> np.ndarray:
    """Gaussian -> median -> CLAHE -> min-max normalise."""
    img = gaussian_filter(img, cfg.gaussian_sigma, cfg.gaussian_kernel)
    img = median_filter(img, cfg.median_window)
    img = clahe(img, cfg.clahe_tiles, cfg.clahe_clip)
    return normalize(img)


def to_raw_vector(img, cfg: PreprocessConfig) -> np.ndarray:
    img = resize(check_image(img), cfg.resize_to)
    if cfg.edge_blend > 0:
        edges = canny(img, cfg.canny_low, cfg.canny_high, cfg.gaussian_sigma, cfg.gaussian_kernel)
        img = (1.0 - cfg.edge_blend) * img + cfg.edge_blend * edges
    return img.reshape(-1)


def load_image(path) -> np.ndarray:
    """Read a PNG (or any Pillow-readable file) as a [0, 1] grayscale array.

    Colour images are reduced by averaging their RGB channels.
    """
    from PIL import Image

    with Image.open(path) as im:
        im.load()
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            a = np.asarray(im, dtype=np.float64)
            peak = 65535.0 if im.mode.startswith("I;16") else max(a.max(), 1.0)
            return np.clip(a / peak, 0.0, 1.0)
        if im.mode == "L":
            return np.asarray(im, dtype=np.float64) / 255.0
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
    return rgb.mean(axis=2) / 255.0


def save_image(img, path):
    from PIL import Image

    a = np.rint(check_image(img) * 255.0).astype(np.uint8)
    Image.fromarray(a, mode="L").save(path)
