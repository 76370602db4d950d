"""Log-Gabor magnitude + uniform LBP block histograms."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import InvalidBlockGrid
from ..imgcore import filter_with_response
from ..roi import RoiImage
from .features import LBP_BINS, TextureFeature

SIGMA_RATIO = 0.65
MIN_WAVELENGTH = 4.0
SCALE_FACTOR = 2.0

# (dy, dx) neighbors, clockwise from the top-left corner; bit i = neighbor i
_NEIGHBORS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


@lru_cache(maxsize=1)
def uniform_lbp_table() -> np.ndarray:
    """Map each 8-bit code to its bin: 58 uniform codes in ascending order,
    then one shared bin (58) for everything else."""
    table = np.full(256, LBP_BINS - 1, dtype=np.int64)
    nxt = 0
    for code in range(256):
        bits = [(code >> i) & 1 for i in range(8)]
        transitions = sum(bits[i] != bits[(i + 1) % 8] for i in range(8))
        if transitions <= 2:
            table[code] = nxt
            nxt += 1
    assert nxt == LBP_BINS - 1
    return table


def lbp_codes(img: np.ndarray) -> np.ndarray:
    """8-neighbor LBP codes (neighbor >= center sets the bit), replicate border."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    padded = np.pad(img, 1, mode="edge")
    codes = np.zeros((h, w), dtype=np.int64)
    for bit, (dy, dx) in enumerate(_NEIGHBORS):
        neigh = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        codes |= (neigh >= img).astype(np.int64) << bit
    return codes


def log_gabor_response(scale: int):
    f0 = 1.0 / (MIN_WAVELENGTH * SCALE_FACTOR**scale)
    denom = 2.0 * np.log(SIGMA_RATIO) ** 2

    def response(radius):
        out = np.zeros_like(radius)
        nz = radius > 0
        out[nz] = np.exp(-np.log(radius[nz] / f0) ** 2 / denom)
        return out

    return response


def log_gabor_magnitudes(img: np.ndarray, scales: int) -> list[np.ndarray]:
    # rounding removes FFT residue so flat regions compare as exactly equal
    return [np.round(np.abs(filter_with_response(img, log_gabor_response(s))), 10) for s in range(scales)]


def _block_edges(n: int, blocks: int) -> np.ndarray:
    return np.linspace(0, n, blocks + 1).round().astype(int)


def extract_lbp(roi: RoiImage, scales: int = 3, block_grid: tuple[int, int] = (8, 4)) -> TextureFeature:
    gx, gy = block_grid
    if scales < 1:
        raise ValueError("scales must be >= 1")
    if gx < 1 or gy < 1:
        raise InvalidBlockGrid(f"block grid must be >= 1x1, got {gx}x{gy}")
    h, w = roi.image.shape
    ye, xe = _block_edges(h, gy), _block_edges(w, gx)
    if np.diff(ye).min() < 3 or np.diff(xe).min() < 3:
        raise InvalidBlockGrid(f"{gx}x{gy} blocks on a {w}x{h} ROI are smaller than 3x3 px")
    table = uniform_lbp_table()
    hists = []
    for mag in log_gabor_magnitudes(roi.image, scales):
        bins = table[lbp_codes(mag)]
        for i in range(gy):
            for j in range(gx):
                block = bins[ye[i] : ye[i + 1], xe[j] : xe[j + 1]]
                hist = np.bincount(block.ravel(), minlength=LBP_BINS).astype(np.float64)
                hists.append(hist / block.size)
    return TextureFeature((gx, gy), scales, np.array(hists), roi.source_sample_id)
