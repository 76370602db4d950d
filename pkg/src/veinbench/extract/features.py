"""Feature templates and their on-disk container.

Container layout (all integers little-endian)::

    8 bytes   magic b"VBFEAT01"
    1 byte    type: 1 binary pattern, 2 texture, 3 keypoints
    header    type 1: <II width height
              type 2: <IIII gx gy scales bins
              type 3: <II count dim
    payload   type 1: rows of np.packbits (MSB first), ceil(width/8) bytes each
              type 2: float32 histograms, (scale, block-row, block-col, bin) order
              type 3: float32 keypoints (count x 4: x, y, scale, orientation)
                      followed by float32 descriptors (count x dim)
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FeatureFormatError
from ..io_utils import atomic_write_bytes

MAGIC = b"VBFEAT01"
TYPE_PATTERN, TYPE_TEXTURE, TYPE_KEYPOINTS = 1, 2, 3
LBP_BINS = 59
DESCRIPTOR_DIM = 128


@dataclass
class BinaryVeinPattern:
    bits: np.ndarray  # bool (height, width), True = vein
    source_sample_id: str = ""

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass
class TextureFeature:
    grid: tuple[int, int]  # (gx, gy)
    scales: int
    histograms: np.ndarray  # (scales * gy * gx, 59), rows L1-normalized
    source_sample_id: str = ""

    @property
    def vector(self) -> np.ndarray:
        return self.histograms.ravel()


@dataclass
class KeypointFeature:
    keypoints: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))  # x, y, scale, orientation
    descriptors: np.ndarray = field(default_factory=lambda: np.zeros((0, DESCRIPTOR_DIM)))
    source_sample_id: str = ""

    def __len__(self) -> int:
        return len(self.descriptors)


def encode_feature(feat) -> bytes:
    if isinstance(feat, BinaryVeinPattern):
        bits = np.asarray(feat.bits, dtype=bool)
        head = struct.pack("<II", bits.shape[1], bits.shape[0])
        return MAGIC + bytes([TYPE_PATTERN]) + head + np.packbits(bits, axis=1).tobytes()
    if isinstance(feat, TextureFeature):
        gx, gy = feat.grid
        head = struct.pack("<IIII", gx, gy, feat.scales, feat.histograms.shape[1])
        return MAGIC + bytes([TYPE_TEXTURE]) + head + feat.histograms.astype("<f4").tobytes()
    if isinstance(feat, KeypointFeature):
        n = len(feat.descriptors)
        head = struct.pack("<II", n, DESCRIPTOR_DIM)
        kp = np.asarray(feat.keypoints, dtype="<f4").reshape(n, 4)
        desc = np.asarray(feat.descriptors, dtype="<f4").reshape(n, DESCRIPTOR_DIM)
        return MAGIC + bytes([TYPE_KEYPOINTS]) + head + kp.tobytes() + desc.tobytes()
    raise TypeError(f"cannot serialize {type(feat).__name__}")


def _take(buf: bytes, pos: int, n: int) -> tuple[bytes, int]:
    if pos + n > len(buf):
        raise FeatureFormatError("truncated feature file")
    return buf[pos : pos + n], pos + n


def decode_feature(buf: bytes, sample_id: str = ""):
    """Inverse of :func:`encode_feature`.

    Float payloads are re-normalized in float64 after decoding so loaded
    histograms sum to 1 and descriptors have unit norm to double precision.
    """
    if buf[:8] != MAGIC:
        raise FeatureFormatError("bad magic, not a feature file")
    kind = buf[8]
    pos = 9
    if kind == TYPE_PATTERN:
        head, pos = _take(buf, pos, 8)
        w, h = struct.unpack("<II", head)
        row_bytes = (w + 7) // 8
        raw, pos = _take(buf, pos, row_bytes * h)
        packed = np.frombuffer(raw, dtype=np.uint8).reshape(h, row_bytes)
        bits = np.unpackbits(packed, axis=1, count=w).astype(bool)
        return BinaryVeinPattern(bits, sample_id)
    if kind == TYPE_TEXTURE:
        head, pos = _take(buf, pos, 16)
        gx, gy, scales, bins = struct.unpack("<IIII", head)
        n = gx * gy * scales
        raw, pos = _take(buf, pos, 4 * n * bins)
        hist = np.frombuffer(raw, dtype="<f4").reshape(n, bins).astype(np.float64)
        sums = hist.sum(axis=1, keepdims=True)
        hist = np.divide(hist, sums, out=np.zeros_like(hist), where=sums > 0)
        return TextureFeature((gx, gy), scales, hist, sample_id)
    if kind == TYPE_KEYPOINTS:
        head, pos = _take(buf, pos, 8)
        n, dim = struct.unpack("<II", head)
        raw, pos = _take(buf, pos, 16 * n)
        kp = np.frombuffer(raw, dtype="<f4").reshape(n, 4).astype(np.float64)
        raw, pos = _take(buf, pos, 4 * n * dim)
        desc = np.frombuffer(raw, dtype="<f4").reshape(n, dim).astype(np.float64)
        if n:
            desc /= np.linalg.norm(desc, axis=1, keepdims=True)
        return KeypointFeature(kp, desc, sample_id)
    raise FeatureFormatError(f"unknown feature type byte {kind}")


def feature_filename(sample_id: str, method: str) -> str:
    return f"{sample_id}.{method}.vbf"


def save_feature(feat, path: str | os.PathLike) -> None:
    atomic_write_bytes(path, encode_feature(feat))


def load_feature(path: str | os.PathLike, sample_id: str = ""):
    return decode_feature(Path(path).read_bytes(), sample_id)
