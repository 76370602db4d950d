"""Vein contrast enhancement: CLAHE, high-frequency emphasis, circular Gabor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgcore import (
    TransferFunction,
    apply_frequency_filter,
    bin_index,
    convolve2d,
    equalize_histogram,
    normalize_minmax,
)
from .roi import RoiImage


@dataclass(frozen=True)
class ClaheParams:
    tiles_x: int = 8
    tiles_y: int = 4
    clip_limit: float = 2.0
    bins: int = 256

    def __post_init__(self):
        if self.tiles_x < 1 or self.tiles_y < 1:
            raise ValueError("tile counts must be >= 1")
        if not self.clip_limit >= 1.0:
            raise ValueError("clip_limit must be >= 1")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")


@dataclass(frozen=True)
class HfeParams:
    d0: float = 0.05
    k1: float = 0.5
    k2: float = 1.5

    def __post_init__(self):
        if not 0 < self.d0 <= 0.5:
            raise ValueError("d0 must lie in (0, 0.5]")
        if self.k1 < 0 or self.k2 <= 0:
            raise ValueError("need k1 >= 0 and k2 > 0")


@dataclass(frozen=True)
class CgfParams:
    f0: float = 0.1
    sigma: float = 6.0
    kernel_radius: int = 18

    def __post_init__(self):
        if self.f0 <= 0 or self.sigma <= 0 or self.kernel_radius < 1:
            raise ValueError("f0, sigma and kernel_radius must be positive")


def _tile_edges(n: int, tiles: int) -> np.ndarray:
    tiles = min(tiles, n)
    return np.linspace(0, n, tiles + 1).round().astype(int)


def _clipped_cdf(idx: np.ndarray, bins: int, clip_limit: float) -> np.ndarray:
    hist = np.bincount(idx.ravel(), minlength=bins).astype(np.float64)
    if np.isfinite(clip_limit):
        limit = clip_limit * idx.size / bins
        excess = np.maximum(hist - limit, 0.0).sum()
        hist = np.minimum(hist, limit) + excess / bins
    return np.cumsum(hist) / idx.size


def clahe_array(img: np.ndarray, p: ClaheParams = ClaheParams()) -> np.ndarray:
    """Contrast-limited adaptive equalization of a [0, 1] image.

    Tile mappings are inclusive CDFs of clipped histograms; each pixel blends
    the four mappings of the surrounding tile centers bilinearly.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    idx = bin_index(img, p.bins)
    ye, xe = _tile_edges(h, p.tiles_y), _tile_edges(w, p.tiles_x)
    ty, tx = len(ye) - 1, len(xe) - 1
    maps = np.empty((ty, tx, p.bins))
    for i in range(ty):
        for j in range(tx):
            maps[i, j] = _clipped_cdf(idx[ye[i] : ye[i + 1], xe[j] : xe[j + 1]], p.bins, p.clip_limit)

    def interp_axis(n, edges):
        centers = (edges[:-1] + edges[1:] - 1) / 2.0
        pos = np.arange(n, dtype=np.float64)
        lo = np.clip(np.searchsorted(centers, pos, side="right") - 1, 0, len(centers) - 1)
        hi = np.minimum(lo + 1, len(centers) - 1)
        span = np.where(hi > lo, centers[hi] - centers[lo], 1.0)
        t = np.clip((pos - centers[lo]) / span, 0.0, 1.0)
        return lo, hi, np.where(hi > lo, t, 0.0)

    y0, y1, wy = interp_axis(h, ye)
    x0, x1, wx = interp_axis(w, xe)
    Y0, X0 = y0[:, None], x0[None, :]
    Y1, X1 = y1[:, None], x1[None, :]
    WY, WX = wy[:, None], wx[None, :]
    out = (
        (1 - WY) * (1 - WX) * maps[Y0, X0, idx]
        + (1 - WY) * WX * maps[Y0, X1, idx]
        + WY * (1 - WX) * maps[Y1, X0, idx]
        + WY * WX * maps[Y1, X1, idx]
    )
    return np.clip(out, 0.0, 1.0)


def hfe_array(img: np.ndarray, p: HfeParams = HfeParams()) -> np.ndarray:
    tf = TransferFunction.high_pass_emphasis(p.d0, p.k1, p.k2)
    filtered = apply_frequency_filter(img, tf)
    # flat results stay flat; stretching round-off noise would invent texture
    if np.ptp(filtered) <= 1e-9 * max(1.0, float(np.abs(filtered).max())):
        return np.zeros_like(filtered)
    return normalize_minmax(equalize_histogram(normalize_minmax(filtered)))


def cgf_kernel(p: CgfParams = CgfParams()) -> np.ndarray:
    r = p.kernel_radius
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1].astype(np.float64)
    rad = np.hypot(xx, yy)
    g = np.exp(-(rad**2) / (2.0 * p.sigma**2)) * np.cos(2.0 * np.pi * p.f0 * rad)
    g -= g.mean()
    return g / np.linalg.norm(g)


def cgf_response(img: np.ndarray, p: CgfParams = CgfParams()) -> np.ndarray:
    """Raw (un-normalized) circular Gabor response."""
    k = cgf_kernel(p)
    r = p.kernel_radius
    img = np.asarray(img, dtype=np.float64)
    # replicate-pad so kernels larger than the image still work
    padded = np.pad(img, r, mode="edge")
    return convolve2d(padded, k)[r:-r, r:-r]


def cgf_array(img: np.ndarray, p: CgfParams = CgfParams()) -> np.ndarray:
    resp = cgf_response(img, p)
    if np.ptp(resp) <= 1e-9:
        return np.zeros_like(resp)
    return normalize_minmax(resp)


def clahe(roi: RoiImage, p: ClaheParams = ClaheParams()) -> RoiImage:
    return roi.with_image(clahe_array(roi.image, p))


def hfe(roi: RoiImage, p: HfeParams = HfeParams()) -> RoiImage:
    return roi.with_image(hfe_array(roi.image, p))


def cgf(roi: RoiImage, p: CgfParams = CgfParams()) -> RoiImage:
    return roi.with_image(cgf_array(roi.image, p))


ENHANCERS = {"clahe": clahe, "hfe": hfe, "cgf": cgf}


def enhance_chain(roi: RoiImage, steps, params: dict | None = None) -> RoiImage:
    """Apply named enhancers in order, e.g. ``("clahe", "hfe")``."""
    params = params or {}
    for name in steps:
        fn = ENHANCERS[name]
        roi = fn(roi, params[name]) if name in params else fn(roi)
    return roi
