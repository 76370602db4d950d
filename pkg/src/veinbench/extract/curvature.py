"""Binary vein patterns from cross-sectional curvature (MC) and from the
principal curvature of a normalized gradient field (PC)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage

from ..errors import InvalidRoi
from ..roi import RoiImage
from .features import BinaryVeinPattern

# unit steps (dx, dy): horizontal, vertical, diagonal, anti-diagonal
DIRECTIONS = ((1, 0), (0, 1), (1, 1), (1, -1))
# responses below this are floating-point residue of flat regions
RESPONSE_FLOOR = 1e-10


class EmptyPatternWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CurvatureParams:
    sigma: float = 3.0
    gamma: float = 0.05  # PC: relative gradient-normalization threshold

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")


@lru_cache(maxsize=16)
def _profile_lines(shape: tuple[int, int], direction: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Flat pixel indices of every scan line along ``direction``.

    Returns the concatenated indices with -1 separating consecutive lines,
    plus a bool array marking separators.
    """
    h, w = shape
    grid = np.arange(h * w).reshape(h, w)
    dx, dy = direction
    if (dx, dy) == (1, 0):
        lines = list(grid)
    elif (dx, dy) == (0, 1):
        lines = list(grid.T)
    elif (dx, dy) == (1, 1):
        lines = [np.diagonal(grid, k) for k in range(-h + 1, w)]
    else:
        flipped = grid[::-1]
        lines = [np.diagonal(flipped, k) for k in range(-h + 1, w)]
    parts = []
    for line in lines:
        parts.append(line)
        parts.append(np.array([-1]))
    flat = np.concatenate(parts)
    return flat, flat < 0


def _gaussian_derivatives(img: np.ndarray, sigma: float) -> dict[str, np.ndarray]:
    def g(order):
        return ndimage.gaussian_filter(img, sigma, order=order, mode="nearest")

    return {"x": g((0, 1)), "y": g((1, 0)), "xx": g((0, 2)), "yy": g((2, 0)), "xy": g((1, 1))}


def profile_curvature(img: np.ndarray, sigma: float, direction: tuple[int, int]) -> np.ndarray:
    """Curvature of the smoothed intensity profile along ``direction``."""
    d = _gaussian_derivatives(img, sigma)
    return _curvature_from(d, direction)


def _curvature_from(d: dict, direction) -> np.ndarray:
    ux, uy = np.asarray(direction, dtype=np.float64) / np.hypot(*direction)
    p1 = ux * d["x"] + uy * d["y"]
    p2 = ux * ux * d["xx"] + 2 * ux * uy * d["xy"] + uy * uy * d["yy"]
    return p2 / (1.0 + p1**2) ** 1.5


def _score_profiles(kappa: np.ndarray, direction) -> np.ndarray:
    """For each positive-curvature run of each scan line, credit its peak
    pixel with peak curvature times run length."""
    flat_idx, sep = _profile_lines(kappa.shape, direction)
    vals = np.where(sep, 0.0, kappa.ravel()[np.where(sep, 0, flat_idx)])
    pos = vals > RESPONSE_FLOOR
    out = np.zeros(kappa.size)
    if not pos.any():
        return out.reshape(kappa.shape)
    edge = np.diff(np.r_[False, pos, False].astype(np.int8))
    starts = np.flatnonzero(edge == 1)
    ends = np.flatnonzero(edge == -1)
    run_of = np.cumsum(edge[:-1] == 1) - 1
    where = np.flatnonzero(pos)
    rid = run_of[where]
    # peak per run: sort by (run, -value, position) and keep the first of each run
    order = np.lexsort((where, -vals[where], rid))
    first = np.r_[True, rid[order][1:] != rid[order][:-1]]
    peaks = where[order][first]
    widths = (ends - starts)[rid[order][first]]
    np.add.at(out, flat_idx[peaks], vals[peaks] * widths)
    return out.reshape(kappa.shape)


def _shift(a: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """out[y, x] = a[y + dy, x + dx], zero outside."""
    h, w = a.shape
    out = np.zeros_like(a)
    ys, yd = slice(max(dy, 0), h + min(dy, 0)), slice(max(-dy, 0), h + min(-dy, 0))
    xs, xd = slice(max(dx, 0), w + min(dx, 0)), slice(max(-dx, 0), w + min(-dx, 0))
    out[yd, xd] = a[ys, xs]
    return out


def vein_scores(img: np.ndarray, sigma: float) -> np.ndarray:
    """Accumulated maximum-curvature score plane (before connection)."""
    d = _gaussian_derivatives(np.asarray(img, dtype=np.float64), sigma)
    v = np.zeros(img.shape)
    for direction in DIRECTIONS:
        v += _score_profiles(_curvature_from(d, direction), direction)
    return v


def connect_centres(v: np.ndarray) -> np.ndarray:
    """Keep pixels supported by scores on both sides along some direction."""
    g = np.zeros_like(v)
    for dx, dy in DIRECTIONS:
        fwd = np.maximum(_shift(v, dx, dy), _shift(v, 2 * dx, 2 * dy))
        back = np.maximum(_shift(v, -dx, -dy), _shift(v, -2 * dx, -2 * dy))
        g = np.maximum(g, np.minimum(fwd, back))
    return g


def binarize_positive_median(response: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """True where the response reaches the median of its positive values."""
    resp = np.where(mask, response, 0.0)
    resp = np.where(resp > RESPONSE_FLOOR, resp, 0.0)
    positive = resp[resp > 0]
    if positive.size == 0:
        warnings.warn("no positive response, pattern is empty", EmptyPatternWarning, stacklevel=3)
        return np.zeros(resp.shape, dtype=bool)
    return (resp >= np.median(positive)) & (resp > 0) & mask


def _check_mask(roi: RoiImage) -> np.ndarray:
    mask = np.asarray(roi.mask, dtype=bool)
    if not mask.any():
        raise InvalidRoi(f"empty ROI mask for {roi.source_sample_id!r}")
    return mask


def extract_mc(roi: RoiImage, p: CurvatureParams = CurvatureParams()) -> BinaryVeinPattern:
    mask = _check_mask(roi)
    g = connect_centres(vein_scores(roi.image, p.sigma))
    return BinaryVeinPattern(binarize_positive_median(g, mask), roi.source_sample_id)


def principal_curvature(img: np.ndarray, sigma: float, gamma: float = 0.05) -> np.ndarray:
    """Larger eigenvalue (clamped at 0) of the symmetrized Jacobian of the
    smoothed, hard-normalized gradient field."""
    img = np.asarray(img, dtype=np.float64)
    smooth = ndimage.gaussian_filter(img, sigma, mode="nearest")
    gy, gx = np.gradient(smooth)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= RESPONSE_FLOOR:
        return np.zeros_like(img)
    strong = mag > gamma * peak
    scale = np.where(strong, 1.0 / np.where(strong, mag, 1.0), 1.0)
    fx = ndimage.gaussian_filter(gx * scale, sigma, mode="nearest")
    fy = ndimage.gaussian_filter(gy * scale, sigma, mode="nearest")
    fx_y, fx_x = np.gradient(fx)
    fy_y, fy_x = np.gradient(fy)
    a, c = fx_x, fy_y
    b = 0.5 * (fx_y + fy_x)
    lam = 0.5 * (a + c) + np.sqrt((0.5 * (a - c)) ** 2 + b**2)
    return np.maximum(lam, 0.0)


def extract_pc(roi: RoiImage, p: CurvatureParams = CurvatureParams()) -> BinaryVeinPattern:
    mask = _check_mask(roi)
    lam = principal_curvature(roi.image, p.sigma, p.gamma)
    return BinaryVeinPattern(binarize_positive_median(lam, mask), roi.source_sample_id)
