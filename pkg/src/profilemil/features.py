"""Low-level image descriptors: colour histogram (HoC), gradient histogram
(HoG) and a simplified GIST built from oriented gradient energy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .core import FeatureVector
from .errors import EmptyImage

LOW_LEVEL_SPACES = ("hoc", "hog", "gist")
GIST_RESIZE = 128


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB raster stored as an ``(height, width, 3)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise EmptyImage(f"expected an (h, w, 3) array, got shape {px.shape}")
        if px.shape[0] * px.shape[1] == 0:
            raise EmptyImage("image has zero area")
        px = np.ascontiguousarray(px, dtype=np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @classmethod
    def from_buffer(cls, width, height, data):
        """Build from a flat row-major ``r, g, b, r, g, b, ...`` buffer."""
        buf = np.asarray(data, dtype=np.uint8)
        if width * height == 0:
            raise EmptyImage("image has zero area")
        if buf.size != 3 * width * height:
            raise ValueError(f"buffer has {buf.size} bytes, expected {3 * width * height}")
        return cls(buf.reshape(height, width, 3))

    @classmethod
    def open(cls, path):
        from PIL import Image

        with Image.open(path) as im:
            return cls(np.asarray(im.convert("RGB")))


@dataclass(frozen=True)
class DescriptorConfig:
    hoc_bins_per_channel: int = 8
    hog_cell: int = 8
    hog_orientations: int = 9
    hog_resize: int = 128
    gist_grid: int = 4
    gist_orientations: int = 8
    gist_scales: int = 4

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if int(value) < 1:
                raise ValueError(f"{name} must be positive")
        if self.hoc_bins_per_channel > 256:
            raise ValueError("at most 256 bins per channel")
        if self.hog_resize % self.hog_cell:
            raise ValueError("hog_resize must be divisible by hog_cell")
        if GIST_RESIZE >> (self.gist_scales - 1) < self.gist_grid:
            raise ValueError("coarsest GIST scale is smaller than the grid")


def grayscale(img: RgbImage) -> np.ndarray:
    px = img.pixels.astype(float)
    return 0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]


def _interp_axis(n_in, n_out):
    # half-pixel centres, clamped at the edges
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_bilinear(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    lo, hi, t = _interp_axis(a.shape[0], out_h)
    rows = a[lo] * (1.0 - t)[:, None] + a[hi] * t[:, None]
    lo, hi, t = _interp_axis(a.shape[1], out_w)
    return rows[:, lo] * (1.0 - t) + rows[:, hi] * t


def central_gradients(a: np.ndarray):
    """``(gx, gy)`` by central differences with edge replication."""
    p = np.pad(a, 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) / 2.0
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) / 2.0
    return gx, gy


def _l2_normalise(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.zeros_like(v)


def extract_hoc(img: RgbImage, cfg: DescriptorConfig = DescriptorConfig()) -> FeatureVector:
    """Joint RGB histogram with ``bins**3`` entries summing to one."""
    b = cfg.hoc_bins_per_channel
    q = (img.pixels.astype(np.int64) * b) // 256
    idx = (q[..., 0] * b + q[..., 1]) * b + q[..., 2]
    hist = np.bincount(idx.ravel(), minlength=b ** 3).astype(float)
    return FeatureVector(hist / hist.sum(), "hoc")


def orientation_bins(theta: np.ndarray, n_bins: int) -> np.ndarray:
    # unsigned angle in [0, pi); a value on a boundary goes to the lower bin
    width = np.pi / n_bins
    return np.clip(np.ceil(theta / width).astype(int) - 1, 0, n_bins - 1)


def extract_hog(img: RgbImage, cfg: DescriptorConfig = DescriptorConfig()) -> FeatureVector:
    """Per-cell magnitude-weighted orientation histograms, globally L2-normalised."""
    size, cell, nb = cfg.hog_resize, cfg.hog_cell, cfg.hog_orientations
    g = resize_bilinear(grayscale(img), size, size)
    gx, gy = central_gradients(g)
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    bins = orientation_bins(theta, nb)
    n_cells = size // cell
    rr, cc = np.indices((size, size))
    cell_id = (rr // cell) * n_cells + (cc // cell)
    hist = np.bincount((cell_id * nb + bins).ravel(), weights=mag.ravel(),
                       minlength=n_cells * n_cells * nb)
    return FeatureVector(_l2_normalise(hist), "hog")


_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def gaussian_pyramid(a: np.ndarray, levels: int) -> list:
    out = [a]
    for _ in range(levels - 1):
        blurred = convolve1d(convolve1d(out[-1], _BINOMIAL, axis=0, mode="nearest"),
                             _BINOMIAL, axis=1, mode="nearest")
        out.append(blurred[::2, ::2])
    return out


def _grid_means(a: np.ndarray, grid: int) -> np.ndarray:
    h, w = a.shape
    rr, cc = np.indices((h, w))
    cell = (rr * grid // h) * grid + (cc * grid // w)
    sums = np.bincount(cell.ravel(), weights=a.ravel(), minlength=grid * grid)
    counts = np.bincount(cell.ravel(), minlength=grid * grid)
    return sums / counts


def gist_energy(img: RgbImage, cfg: DescriptorConfig = DescriptorConfig()) -> np.ndarray:
    """Unnormalised responses, shape ``(scales, orientations, grid * grid)``."""
    g = resize_bilinear(grayscale(img), GIST_RESIZE, GIST_RESIZE)
    angles = np.arange(cfg.gist_orientations) * np.pi / cfg.gist_orientations
    out = np.empty((cfg.gist_scales, cfg.gist_orientations, cfg.gist_grid ** 2))
    for s, level in enumerate(gaussian_pyramid(g, cfg.gist_scales)):
        gx, gy = central_gradients(level)
        for o, a in enumerate(angles):
            resp = gx * np.cos(a) + gy * np.sin(a)
            out[s, o] = _grid_means(resp * resp, cfg.gist_grid)
    return out


def extract_gist(img: RgbImage, cfg: DescriptorConfig = DescriptorConfig()) -> FeatureVector:
    return FeatureVector(_l2_normalise(gist_energy(img, cfg).ravel()), "gist")


EXTRACTORS = {"hoc": extract_hoc, "hog": extract_hog, "gist": extract_gist}


def extract(img: RgbImage, space: str, cfg: DescriptorConfig = DescriptorConfig()) -> FeatureVector:
    try:
        fn = EXTRACTORS[space]
    except KeyError:
        raise ValueError(f"no extractor for feature space {space!r}") from None
    return fn(img, cfg)
