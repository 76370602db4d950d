"""Similarity scores between templates.

Each comparator has a plain function form (``miura_match`` etc.) and a
matcher class whose ``prepare_*`` hooks let the score-matrix driver cache
per-template work such as reference spectra.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, LayoutMismatch
from .extract.features import BinaryVeinPattern, KeypointFeature, TextureFeature
from .imgcore import rotate


@dataclass(frozen=True)
class MatchWindow:
    max_shift_x: int = 20
    max_shift_y: int = 10
    rotations: tuple[float, ...] = (-4.0, -2.0, 0.0, 2.0, 4.0)

    def __post_init__(self):
        if self.max_shift_x < 0 or self.max_shift_y < 0:
            raise ValueError("shifts must be >= 0")
        if 0.0 not in self.rotations:
            raise ValueError("rotations must include 0")
        object.__setattr__(self, "rotations", tuple(float(r) for r in self.rotations))


@dataclass(frozen=True)
class ComparisonScore:
    value: float
    probe_id: str = ""
    reference_id: str = ""
    algorithm: str = ""


def rotate_bits(bits: np.ndarray, degrees: float) -> np.ndarray:
    if degrees == 0:
        return np.asarray(bits, dtype=bool)
    return rotate(np.asarray(bits, dtype=np.float64), degrees, order=0) > 0.5


class MiuraMatcher:
    """Shift/rotation-searched overlap of binary vein patterns.

    The probe is cropped by the shift margins into a template T; every
    rotated reference is correlated with T over all in-window shifts.  The
    score is the best overlap divided by |T| + |R_window| of that alignment,
    so identical patterns score exactly 0.5.
    """

    name = "miura"

    def __init__(self, window: MatchWindow = MatchWindow()):
        self.window = window

    def _crop(self, shape):
        my, mx = self.window.max_shift_y, self.window.max_shift_x
        h, w = shape
        if h <= 2 * my or w <= 2 * mx:
            raise DimensionMismatch(f"pattern {w}x{h} too small for shift window +-{mx}x+-{my}")
        return my, mx, h - 2 * my, w - 2 * mx

    def prepare_probe(self, feat: BinaryVeinPattern):
        bits = np.asarray(feat.bits, dtype=bool)
        my, mx, th, tw = self._crop(bits.shape)
        tmpl = np.zeros(bits.shape)
        tmpl[:th, :tw] = bits[my : my + th, mx : mx + tw]
        return bits.shape, int(tmpl.sum()), np.conj(np.fft.rfft2(tmpl))

    def prepare_reference(self, feat: BinaryVeinPattern):
        bits = np.asarray(feat.bits, dtype=bool)
        my, mx, th, tw = self._crop(bits.shape)
        spectra, counts = [], []
        for deg in self.window.rotations:
            rb = rotate_bits(bits, deg).astype(np.float64)
            spectra.append(np.fft.rfft2(rb))
            ii = np.pad(rb.cumsum(0).cumsum(1), ((1, 0), (1, 0)))
            # true pixels in every th x tw window, indexed by its top-left corner
            counts.append(
                (ii[th:, tw:] - ii[:-th, tw:] - ii[th:, :-tw] + ii[:-th, :-tw])[: 2 * my + 1, : 2 * mx + 1]
            )
        return bits.shape, np.stack(spectra), np.rint(np.stack(counts)).astype(np.int64)

    def score_prepared(self, probe, ref) -> float:
        pshape, t_count, t_spec = probe
        rshape, r_spec, r_counts = ref
        if pshape != rshape:
            raise DimensionMismatch(f"pattern shapes differ: {pshape} vs {rshape}")
        if t_count == 0:
            return 0.0
        my, mx = self.window.max_shift_y, self.window.max_shift_x
        corr = np.fft.irfft2(r_spec * t_spec[None], s=rshape, axes=(-2, -1))
        overlap = np.rint(corr[:, : 2 * my + 1, : 2 * mx + 1]).astype(np.int64)
        best = overlap.max()
        if best == 0:
            return 0.0
        # among tied best overlaps take the smallest window count (best score)
        win = r_counts[overlap == best].min()
        return float(best) / float(t_count + win)

    def __call__(self, probe: BinaryVeinPattern, ref: BinaryVeinPattern) -> float:
        return self.score_prepared(self.prepare_probe(probe), self.prepare_reference(ref))


def miura_match(probe: BinaryVeinPattern, ref: BinaryVeinPattern, w: MatchWindow = MatchWindow()) -> ComparisonScore:
    value = MiuraMatcher(w)(probe, ref)
    return ComparisonScore(value, probe.source_sample_id, ref.source_sample_id, "miura")


class HistogramMatcher:
    """Mean per-block histogram intersection."""

    name = "histogram"

    def prepare_probe(self, feat: TextureFeature):
        return feat

    prepare_reference = prepare_probe

    def score_prepared(self, a: TextureFeature, b: TextureFeature) -> float:
        if tuple(a.grid) != tuple(b.grid) or a.scales != b.scales or a.histograms.shape != b.histograms.shape:
            raise LayoutMismatch(
                f"texture layouts differ: grid {a.grid}/{b.grid}, scales {a.scales}/{b.scales}"
            )
        return float(np.minimum(a.histograms, b.histograms).sum(axis=1).mean())

    def __call__(self, a, b) -> float:
        return self.score_prepared(a, b)


def histogram_similarity(a: TextureFeature, b: TextureFeature) -> ComparisonScore:
    return ComparisonScore(HistogramMatcher()(a, b), a.source_sample_id, b.source_sample_id, "histogram")


@dataclass
class KeypointMatcher:
    """Ratio-test descriptor matching with greedy one-to-one assignment;
    score = accepted matches / smaller keypoint count."""

    ratio: float = 0.8
    name: str = field(default="keypoint", init=False)

    def __post_init__(self):
        if not 0 < self.ratio <= 1:
            raise ValueError("ratio must lie in (0, 1]")

    def prepare_probe(self, feat: KeypointFeature):
        return np.asarray(feat.descriptors, dtype=np.float64)

    prepare_reference = prepare_probe

    def score_prepared(self, a: np.ndarray, b: np.ndarray) -> float:
        na, nb = len(a), len(b)
        if na == 0 or nb == 0:
            return 0.0
        sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
        dist = np.sqrt(np.maximum(sq, 0.0))
        if nb == 1:
            nearest = np.zeros(na, dtype=int)
            d1 = dist[:, 0]
            d2 = np.full(na, np.inf)
        else:
            part = np.argsort(dist, axis=1, kind="stable")[:, :2]
            nearest = part[:, 0]
            d1 = dist[np.arange(na), nearest]
            d2 = dist[np.arange(na), part[:, 1]]
        ok = d1 < self.ratio * d2
        cand = np.flatnonzero(ok)
        cand = cand[np.lexsort((cand, d1[cand]))]
        used = set()
        accepted = 0
        for i in cand:
            j = int(nearest[i])
            if j not in used:
                used.add(j)
                accepted += 1
        return accepted / min(na, nb)

    def __call__(self, a: KeypointFeature, b: KeypointFeature) -> float:
        return self.score_prepared(self.prepare_probe(a), self.prepare_reference(b))


def keypoint_match(a: KeypointFeature, b: KeypointFeature, ratio: float = 0.8) -> ComparisonScore:
    return ComparisonScore(KeypointMatcher(ratio)(a, b), a.source_sample_id, b.source_sample_id, "keypoint")
