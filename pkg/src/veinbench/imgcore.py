"""Raster helpers and numerical kernels shared by the processing chain.

Images are plain 2-D ``float64`` numpy arrays (rows = y, columns = x) with
intensities in [0, 1].  Nothing here keeps state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage

from .errors import InvalidKernel

_BORDER_MODES = {"replicate": "nearest", "reflect": "reflect"}


def as_gray(data, *, copy: bool = False) -> np.ndarray:
    """Validate and coerce ``data`` into a 2-D float64 image."""
    img = np.array(data, dtype=np.float64, copy=copy)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def normalize_minmax(img: np.ndarray) -> np.ndarray:
    """Affinely stretch ``img`` onto [0, 1]; flat images map to zeros."""
    lo = float(img.min())
    hi = float(img.max())
    if hi - lo <= 1e-12:
        return np.zeros_like(img, dtype=np.float64)
    return (img - lo) / (hi - lo)


@dataclass(frozen=True)
class Kernel2D:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] % 2 == 0 or w.shape[1] % 2 == 0:
            raise InvalidKernel(f"kernel dims must be odd, got {w.shape}")
        object.__setattr__(self, "weights", w)

    @property
    def height(self) -> int:
        return self.weights.shape[0]

    @property
    def width(self) -> int:
        return self.weights.shape[1]


def convolve2d(img: np.ndarray, k: Kernel2D | np.ndarray, border: str = "replicate") -> np.ndarray:
    """True 2-D convolution (kernel flipped), same output size, no renormalization."""
    if not isinstance(k, Kernel2D):
        k = Kernel2D(k)
    img = as_gray(img)
    if k.height > img.shape[0] or k.width > img.shape[1]:
        raise InvalidKernel(f"kernel {k.weights.shape} larger than image {img.shape}")
    try:
        mode = _BORDER_MODES[border.lower()]
    except KeyError:
        raise ValueError(f"unknown border policy {border!r}") from None
    return ndimage.convolve(img, k.weights, mode=mode)


class TransferKind(str, Enum):
    GAUSSIAN_HIGH_PASS_EMPHASIS = "gaussian_high_pass_emphasis"
    ISOTROPIC_BAND_PASS = "isotropic_band_pass"


@dataclass(frozen=True)
class TransferFunction:
    """Radially symmetric frequency response.

    Frequencies are measured in cycles per pixel (|f| <= 0.5 per axis).
    """

    kind: TransferKind
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.params
        if self.kind is TransferKind.GAUSSIAN_HIGH_PASS_EMPHASIS:
            if p.get("d0", 0) <= 0:
                raise ValueError("d0 must be > 0")
            if p.get("k2", 0) < 0:
                raise ValueError("k2 must be >= 0")
        elif self.kind is TransferKind.ISOTROPIC_BAND_PASS:
            if p.get("sigma_f", 0) <= 0:
                raise ValueError("sigma_f must be > 0")

    @classmethod
    def high_pass_emphasis(cls, d0: float, k1: float, k2: float) -> "TransferFunction":
        return cls(TransferKind.GAUSSIAN_HIGH_PASS_EMPHASIS, {"d0": d0, "k1": k1, "k2": k2})

    @classmethod
    def band_pass(cls, f0: float, sigma_f: float) -> "TransferFunction":
        return cls(TransferKind.ISOTROPIC_BAND_PASS, {"f0": f0, "sigma_f": sigma_f})

    def __call__(self, radius: np.ndarray) -> np.ndarray:
        p = self.params
        if self.kind is TransferKind.GAUSSIAN_HIGH_PASS_EMPHASIS:
            d0 = p["d0"]
            return p.get("k1", 0.0) + p.get("k2", 0.0) * (1.0 - np.exp(-radius**2 / (2.0 * d0**2)))
        return np.exp(-((radius - p.get("f0", 0.0)) ** 2) / (2.0 * p["sigma_f"] ** 2))


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def frequency_radius(shape: tuple[int, int]) -> np.ndarray:
    """Radial frequency (cycles/px) of every bin of an unshifted 2-D DFT."""
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.fftfreq(shape[1])[None, :]
    return np.hypot(fy, fx)


def filter_with_response(img: np.ndarray, response) -> np.ndarray:
    """Multiply the spectrum of ``img`` by ``response(radius)``.

    The image is reflect-padded to power-of-two dims; the real part of the
    inverse transform is cropped back to the input size.
    """
    img = as_gray(img)
    h, w = img.shape
    ph, pw = _next_pow2(h), _next_pow2(w)
    top, left = (ph - h) // 2, (pw - w) // 2
    padded = np.pad(img, ((top, ph - h - top), (left, pw - w - left)), mode="symmetric")
    spec = np.fft.fft2(padded)
    out = np.fft.ifft2(spec * response(frequency_radius(padded.shape))).real
    return out[top : top + h, left : left + w]


def apply_frequency_filter(img: np.ndarray, tf: TransferFunction) -> np.ndarray:
    return filter_with_response(img, tf)


def bin_index(img: np.ndarray, bins: int) -> np.ndarray:
    """Bin number of every pixel; bin i covers [i/bins, (i+1)/bins), last bin closed."""
    idx = np.floor(np.asarray(img) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def image_histogram(img: np.ndarray, bins: int = 256) -> np.ndarray:
    if bins < 2:
        raise ValueError("bins must be >= 2")
    return np.bincount(bin_index(img, bins).ravel(), minlength=bins)


def equalize_histogram(img: np.ndarray, bins: int = 256) -> np.ndarray:
    """Global histogram equalization; each pixel maps to the inclusive CDF of its bin."""
    idx = bin_index(img, bins)
    cdf = np.cumsum(np.bincount(idx.ravel(), minlength=bins)) / idx.size
    return cdf[idx]


def rotate(img: np.ndarray, degrees: float, order: int = 1, cval: float = 0.0) -> np.ndarray:
    """Rotate about the image center.

    Positive angles turn the +x axis towards +y (clockwise on screen, since
    rows grow downwards).  Out-of-frame samples take ``cval``.
    """
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    # output (row, col) -> input (row, col): inverse rotation
    matrix = np.array([[c, -s], [s, c]])
    center = (np.array(img.shape, dtype=np.float64) - 1.0) / 2.0
    offset = center - matrix @ center
    return ndimage.affine_transform(
        np.asarray(img, dtype=np.float64), matrix, offset=offset, order=order, mode="constant", cval=cval
    )
