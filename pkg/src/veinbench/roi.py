"""Finger region detection, rotational alignment and ROI cropping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import DegenerateRoi, FingerNotFound
from .imgcore import as_gray, rotate

EDGE_HALF_HEIGHT = 4
MEDIAN_WIDTH = 11
MIN_CONFIDENCE = 0.10
MIN_PRESENT_FRACTION = 0.5
MIN_ROI_PX = 16
DEFAULT_ROI_SIZE = (192, 96)  # (width, height)


@dataclass
class FingerMask:
    mask: np.ndarray  # bool, same shape as the source image
    upper: np.ndarray  # per-column first finger row, NaN where absent
    lower: np.ndarray  # per-column last finger row, NaN where absent

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.upper)

    @property
    def midline(self) -> np.ndarray:
        return (self.upper + self.lower) / 2.0


@dataclass
class RoiImage:
    image: np.ndarray
    mask: np.ndarray
    source_sample_id: str = ""
    rotation_applied: float = 0.0
    box: tuple[int, int, int, int] | None = None  # x0, y0, x1, y1 (inclusive) in the aligned source

    def with_image(self, image: np.ndarray) -> "RoiImage":
        return RoiImage(image, self.mask, self.source_sample_id, self.rotation_applied, self.box)


class Alignment(NamedTuple):
    image: np.ndarray
    finger: FingerMask
    rotation: float  # degrees applied to the input


def _smooth_present(values: np.ndarray, present: np.ndarray) -> np.ndarray:
    out = np.full(values.shape, np.nan)
    if present.any():
        out[present] = ndimage.median_filter(values[present], size=MEDIAN_WIDTH, mode="nearest")
    return out


def detect_finger_region(img: np.ndarray) -> FingerMask:
    """Track the upper and lower finger outline column by column.

    The upper outline is the strongest dark-to-bright step of an 8-row
    vertical edge detector, the lower one the strongest bright-to-dark step
    below it.  Both tracks are median-smoothed along x.
    """
    img = as_gray(img)
    h, w = img.shape
    if h < 40 or w < 40:
        raise ValueError(f"image must be at least 40x40, got {w}x{h}")
    weights = np.r_[-np.ones(EDGE_HALF_HEIGHT), np.ones(EDGE_HALF_HEIGHT)]
    # resp[y] = sum(img[y:y+4]) - sum(img[y-4:y])
    resp = ndimage.correlate1d(img, weights, axis=0, mode="nearest")
    cols = np.arange(w)
    upper = np.argmax(resp, axis=0)
    below = np.where(np.arange(h)[:, None] > upper[None, :], resp, np.inf)
    edge_lower = np.argmin(below, axis=0)
    lower = edge_lower - 1
    conf = np.minimum(resp[upper, cols], -below[edge_lower, cols])
    conf = np.where(np.isfinite(conf), conf, 0.0)
    peak = conf.max()
    present = (conf > 1e-6) & (conf >= MIN_CONFIDENCE * peak) & (lower > upper)
    if present.mean() < MIN_PRESENT_FRACTION:
        raise FingerNotFound(f"finger found in {present.mean():.0%} of columns")
    up = _smooth_present(upper.astype(np.float64), present)
    lo = _smooth_present(lower.astype(np.float64), present)
    rows = np.arange(h)[:, None]
    mask = present[None, :] & (rows >= np.nan_to_num(up)[None, :]) & (rows <= np.nan_to_num(lo, nan=-1)[None, :])
    return FingerMask(mask=mask, upper=up, lower=lo)


def midline_angle(fm: FingerMask) -> float:
    """Angle (degrees) of the least-squares line through the midline."""
    x = np.flatnonzero(fm.present)
    slope = np.polyfit(x, fm.midline[x], 1)[0]
    return float(np.degrees(np.arctan(slope)))


def normalize_alignment(img: np.ndarray, fm: FingerMask) -> Alignment:
    """Rotate ``img`` so the finger midline becomes horizontal."""
    img = as_gray(img)
    rotation = -midline_angle(fm)
    rotated = rotate(img, rotation, order=1, cval=0.0)
    valid = rotate(np.ones_like(img), rotation, order=1, cval=0.0) > 1.0 - 1e-9
    # detect on a copy whose out-of-frame corners repeat the nearest valid
    # pixel, so the zero fill does not read as a finger outline
    filled = rotated
    if not valid.all():
        idx = ndimage.distance_transform_edt(~valid, return_distances=False, return_indices=True)
        filled = rotated[idx[0], idx[1]]
    refound = detect_finger_region(filled)
    refound.mask &= valid
    return Alignment(rotated, refound, rotation)


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Corner-aligned bilinear resampling to ``out_h`` x ``out_w``."""
    h, w = img.shape
    ys = np.linspace(0, h - 1, out_h)
    xs = np.linspace(0, w - 1, out_w)
    grid = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(np.asarray(img, dtype=np.float64), grid, order=1, mode="nearest")


def extract_roi(
    img: np.ndarray, fm: FingerMask, out_w: int = DEFAULT_ROI_SIZE[0], out_h: int = DEFAULT_ROI_SIZE[1],
    sample_id: str = "", rotation: float = 0.0,
) -> RoiImage:
    cols = np.flatnonzero(fm.present)
    x0, x1 = int(cols[0]), int(cols[-1])
    y0 = int(np.floor(np.nanmin(fm.upper)))
    y1 = int(np.ceil(np.nanmax(fm.lower)))
    if x1 - x0 + 1 < MIN_ROI_PX or y1 - y0 + 1 < MIN_ROI_PX:
        raise DegenerateRoi(f"finger box {x1 - x0 + 1}x{y1 - y0 + 1} px is below {MIN_ROI_PX}x{MIN_ROI_PX}")
    crop = np.asarray(img, dtype=np.float64)[y0 : y1 + 1, x0 : x1 + 1]
    mcrop = fm.mask[y0 : y1 + 1, x0 : x1 + 1].astype(np.float64)
    image = np.clip(resize_bilinear(crop, out_w, out_h), 0.0, 1.0)
    mask = resize_bilinear(mcrop, out_w, out_h) >= 0.5
    return RoiImage(image, mask, sample_id, rotation, (x0, y0, x1, y1))


def prepare_roi(img: np.ndarray, sample_id: str = "", size: tuple[int, int] = DEFAULT_ROI_SIZE) -> RoiImage:
    """detect -> align -> crop, the full ROI stage for one sample."""
    fm = detect_finger_region(img)
    aligned = normalize_alignment(img, fm)
    return extract_roi(aligned.image, aligned.finger, size[0], size[1], sample_id, aligned.rotation)
