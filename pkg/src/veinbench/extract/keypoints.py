"""Difference-of-Gaussians keypoints with gradient-histogram descriptors,
restricted to the finger interior."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..roi import RoiImage
from .features import DESCRIPTOR_DIM, KeypointFeature

ORI_BINS = 36
ORI_PEAK_RATIO = 0.8
DESC_WIDTH = 4
DESC_BINS = 8
DESC_CLIP = 0.2


class NoKeypointsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class KeypointParams:
    octaves: int = 3
    scales_per_octave: int = 3
    sigma0: float = 1.6
    contrast_threshold: float = 0.03
    edge_ratio: float = 10.0  # reject when trace^2 / det >= edge_ratio
    boundary_margin: float = 8.0
    assumed_blur: float = 0.5


def _pyramid(img: np.ndarray, p: KeypointParams):
    """Gaussian and DoG stacks per octave (scales_per_octave + 3 Gaussians)."""
    s = p.scales_per_octave
    k = 2.0 ** (1.0 / s)
    n = s + 3
    base = ndimage.gaussian_filter(img, math.sqrt(p.sigma0**2 - p.assumed_blur**2), mode="nearest")
    gauss, dogs = [], []
    for _ in range(p.octaves):
        if min(base.shape) < 8:
            break
        layers = [base]
        for i in range(1, n):
            prev, total = p.sigma0 * k ** (i - 1), p.sigma0 * k**i
            layers.append(ndimage.gaussian_filter(layers[-1], math.sqrt(total**2 - prev**2), mode="nearest"))
        stack = np.stack(layers)
        gauss.append(stack)
        dogs.append(stack[1:] - stack[:-1])
        base = stack[s][::2, ::2]
    return gauss, dogs


def _derivatives(dog: np.ndarray, l: int, y: int, x: int):
    c = dog[l, y, x]
    dx = 0.5 * (dog[l, y, x + 1] - dog[l, y, x - 1])
    dy = 0.5 * (dog[l, y + 1, x] - dog[l, y - 1, x])
    ds = 0.5 * (dog[l + 1, y, x] - dog[l - 1, y, x])
    dxx = dog[l, y, x + 1] - 2 * c + dog[l, y, x - 1]
    dyy = dog[l, y + 1, x] - 2 * c + dog[l, y - 1, x]
    dss = dog[l + 1, y, x] - 2 * c + dog[l - 1, y, x]
    dxy = 0.25 * (dog[l, y + 1, x + 1] - dog[l, y + 1, x - 1] - dog[l, y - 1, x + 1] + dog[l, y - 1, x - 1])
    dxs = 0.25 * (dog[l + 1, y, x + 1] - dog[l + 1, y, x - 1] - dog[l - 1, y, x + 1] + dog[l - 1, y, x - 1])
    dys = 0.25 * (dog[l + 1, y + 1, x] - dog[l + 1, y - 1, x] - dog[l - 1, y + 1, x] + dog[l - 1, y - 1, x])
    grad = np.array([dx, dy, ds])
    hess = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
    return grad, hess


def _refine(dog: np.ndarray, l: int, y: int, x: int, p: KeypointParams):
    """Quadratic sub-sample refinement; None when the extremum is unstable,
    low-contrast or edge-like."""
    nl, h, w = dog.shape
    for _ in range(5):
        grad, hess = _derivatives(dog, l, y, x)
        try:
            offset = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            return None
        if np.all(np.abs(offset) < 0.5):
            break
        x += int(round(offset[0]))
        y += int(round(offset[1]))
        l += int(round(offset[2]))
        if not (1 <= l < nl - 1 and 1 <= y < h - 1 and 1 <= x < w - 1):
            return None
    else:
        return None
    value = dog[l, y, x] + 0.5 * grad @ offset
    if abs(value) < p.contrast_threshold:
        return None
    dxx, dyy, dxy = hess[0, 0], hess[1, 1], hess[0, 1]
    det = dxx * dyy - dxy**2
    if det <= 0 or (dxx + dyy) ** 2 / det >= p.edge_ratio:
        return None
    return l, y, x, offset


def _gradients(layer: np.ndarray):
    gy, gx = np.gradient(layer)
    return np.hypot(gx, gy), np.arctan2(gy, gx)


def _orientations(mag, ang, y: float, x: float, sigma: float) -> list[float]:
    h, w = mag.shape
    radius = int(round(3 * 1.5 * sigma))
    yi, xi = int(round(y)), int(round(x))
    y0, y1 = max(yi - radius, 0), min(yi + radius + 1, h)
    x0, x1 = max(xi - radius, 0), min(xi + radius + 1, w)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    weight = np.exp(-((yy - y) ** 2 + (xx - x) ** 2) / (2 * (1.5 * sigma) ** 2))
    bins = np.floor((ang[y0:y1, x0:x1] % (2 * np.pi)) / (2 * np.pi) * ORI_BINS).astype(int) % ORI_BINS
    hist = np.bincount(bins.ravel(), (weight * mag[y0:y1, x0:x1]).ravel(), minlength=ORI_BINS)
    for _ in range(2):
        hist = (np.roll(hist, 1) + hist + np.roll(hist, -1)) / 3.0
    peak = hist.max()
    if peak <= 0:
        return []
    out = []
    for b in range(ORI_BINS):
        left, right = hist[b - 1], hist[(b + 1) % ORI_BINS]
        if hist[b] > left and hist[b] > right and hist[b] >= ORI_PEAK_RATIO * peak:
            delta = 0.5 * (left - right) / (left - 2 * hist[b] + right)
            out.append(((b + 0.5 + delta) / ORI_BINS * 2 * np.pi) % (2 * np.pi))
    return out


def _descriptor(mag, ang, y: float, x: float, sigma: float, ori: float) -> np.ndarray | None:
    h, w = mag.shape
    d, n = DESC_WIDTH, DESC_BINS
    hist_width = 3.0 * sigma
    radius = int(round(hist_width * math.sqrt(2) * (d + 1) * 0.5))
    yi, xi = int(round(y)), int(round(x))
    y0, y1 = max(yi - radius, 1), min(yi + radius + 1, h - 1)
    x0, x1 = max(xi - radius, 1), min(xi + radius + 1, w - 1)
    if y0 >= y1 or x0 >= x1:
        return None
    yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    cos_o, sin_o = math.cos(ori), math.sin(ori)
    rx = (cos_o * (xx - x) + sin_o * (yy - y)) / hist_width
    ry = (-sin_o * (xx - x) + cos_o * (yy - y)) / hist_width
    rbin = ry + d / 2 - 0.5
    cbin = rx + d / 2 - 0.5
    keep = (rbin > -1) & (rbin < d) & (cbin > -1) & (cbin < d)
    if not keep.any():
        return None
    rbin, cbin = rbin[keep], cbin[keep]
    weight = np.exp(-(rx[keep] ** 2 + ry[keep] ** 2) / (2 * (0.5 * d) ** 2)) * mag[y0:y1, x0:x1][keep]
    obin = ((ang[y0:y1, x0:x1][keep] - ori) % (2 * np.pi)) / (2 * np.pi) * n
    r0, c0, o0 = np.floor(rbin).astype(int), np.floor(cbin).astype(int), np.floor(obin).astype(int)
    fr, fc, fo = rbin - r0, cbin - c0, obin - o0
    hist = np.zeros((d + 2, d + 2, n))
    for dr, wr in ((0, 1 - fr), (1, fr)):
        for dc, wc in ((0, 1 - fc), (1, fc)):
            for do, wo in ((0, 1 - fo), (1, fo)):
                np.add.at(hist, (r0 + dr + 1, c0 + dc + 1, (o0 + do) % n), weight * wr * wc * wo)
    vec = hist[1 : d + 1, 1 : d + 1].ravel()
    norm = np.linalg.norm(vec)
    if norm <= 1e-12:
        return None
    vec = np.minimum(vec / norm, DESC_CLIP)
    return vec / np.linalg.norm(vec)


def boundary_distance(mask: np.ndarray) -> np.ndarray:
    """Distance of every pixel to the nearest non-finger pixel; the image
    frame counts as outside."""
    padded = np.pad(np.asarray(mask, dtype=bool), 1, constant_values=False)
    return ndimage.distance_transform_edt(padded)[1:-1, 1:-1]


def detect_keypoints(img: np.ndarray, p: KeypointParams = KeypointParams()):
    """Unfiltered keypoints (N x 4: x, y, scale, orientation) and descriptors."""
    img = np.asarray(img, dtype=np.float64)
    gauss, dogs = _pyramid(img, p)
    s = p.scales_per_octave
    kps, descs = [], []
    for o, (gstack, dog) in enumerate(zip(gauss, dogs)):
        maxf = ndimage.maximum_filter(dog, size=3, mode="nearest")
        minf = ndimage.minimum_filter(dog, size=3, mode="nearest")
        cand = ((dog == maxf) | (dog == minf)) & (np.abs(dog) > 0.5 * p.contrast_threshold / s)
        cand[0], cand[-1] = False, False
        cand[:, :1], cand[:, -1:], cand[:, :, :1], cand[:, :, -1:] = False, False, False, False
        grads = {}
        factor = 2.0**o
        for l, y, x in zip(*np.nonzero(cand)):
            refined = _refine(dog, int(l), int(y), int(x), p)
            if refined is None:
                continue
            l2, y2, x2, off = refined
            sigma_oct = p.sigma0 * 2.0 ** ((l2 + off[2]) / s)
            yo, xo = y2 + off[1], x2 + off[0]
            if l2 not in grads:
                grads[l2] = _gradients(gstack[l2])
            mag, ang = grads[l2]
            for ori in _orientations(mag, ang, yo, xo, sigma_oct):
                desc = _descriptor(mag, ang, yo, xo, sigma_oct, ori)
                if desc is None:
                    continue
                kps.append((xo * factor, yo * factor, sigma_oct * factor, ori))
                descs.append(desc)
    if not kps:
        return np.zeros((0, 4)), np.zeros((0, DESCRIPTOR_DIM))
    kps, descs = np.array(kps), np.array(descs)
    # dedupe and order deterministically by (y, x, scale, orientation)
    key = np.round(kps, 6)
    _, first = np.unique(key, axis=0, return_index=True)
    kps, descs = kps[first], descs[first]
    order = np.lexsort((kps[:, 3], kps[:, 2], kps[:, 0], kps[:, 1]))
    return kps[order], descs[order]


def filter_keypoints(kps: np.ndarray, descs: np.ndarray, mask: np.ndarray, margin: float):
    """Drop keypoints off the finger or within ``margin`` px of its outline."""
    if len(kps) == 0:
        return kps, descs
    dist = boundary_distance(mask)
    h, w = mask.shape
    xi = np.clip(np.rint(kps[:, 0]).astype(int), 0, w - 1)
    yi = np.clip(np.rint(kps[:, 1]).astype(int), 0, h - 1)
    keep = mask[yi, xi] & (dist[yi, xi] > margin)
    return kps[keep], descs[keep]


def extract_keypoints(roi: RoiImage, p: KeypointParams = KeypointParams()) -> KeypointFeature:
    kps, descs = detect_keypoints(roi.image, p)
    kps, descs = filter_keypoints(kps, descs, np.asarray(roi.mask, dtype=bool), p.boundary_margin)
    if len(kps) == 0:
        warnings.warn(f"no keypoints for {roi.source_sample_id!r}", NoKeypointsWarning, stacklevel=2)
    return KeypointFeature(kps, descs, roi.source_sample_id)
