"""Score-set construction, descriptive statistics, EER and the grouped
Z-score bias audit."""

from __future__ import annotations

import math
import multiprocessing
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateVariance, EmptyDistribution, LabelMismatch, MissingFeature
from .ingest import UNKNOWN, DataWarning, Manifest, SampleMetadata, ScoreRecord

GENUINE, IMPOSTOR = "genuine", "impostor"
LABEL_CODES = {GENUINE: "G", IMPOSTOR: "I"}
SIGNIFICANCE_Z = 1.96
DEFAULT_AGE_BUCKETS = ((0, 30), (30, 45), (45, 60), (60, 80))
ATTRIBUTES = ("sex", "age", "finger", "hand")


# --------------------------------------------------------------------------
# comparison plan and score sets


@dataclass(frozen=True)
class PlannedPair:
    probe_id: str
    reference_id: str
    genuine: bool

    @property
    def label(self) -> str:
        return GENUINE if self.genuine else IMPOSTOR


def is_genuine(a: SampleMetadata, b: SampleMetadata) -> bool:
    return a.instance == b.instance and a.sample_index != b.sample_index


def plan_comparisons(manifest: Manifest) -> list[PlannedPair]:
    """All unordered sample pairs, probe = lexicographically smaller id."""
    ids = sorted(manifest.ids)
    meta = [manifest[i] for i in ids]
    return [
        PlannedPair(ids[i], ids[j], is_genuine(meta[i], meta[j]))
        for i in range(len(ids))
        for j in range(i + 1, len(ids))
    ]


@dataclass
class ScoreSet:
    dataset: str
    algorithm: str
    manifest: Manifest
    probe_ids: list[str]
    reference_ids: list[str]
    scores: np.ndarray
    genuine: np.ndarray  # bool per record

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def genuine_scores(self) -> np.ndarray:
        return self.scores[self.genuine]

    @property
    def impostor_scores(self) -> np.ndarray:
        return self.scores[~self.genuine]

    def records(self) -> list[ScoreRecord]:
        return [
            ScoreRecord(p, r, float(s), self.algorithm)
            for p, r, s in zip(self.probe_ids, self.reference_ids, self.scores)
        ]


def scoreset_from_records(
    records: Sequence[ScoreRecord],
    manifest: Manifest,
    algorithm: str | None = None,
    labels: Sequence[str] | None = None,
) -> ScoreSet:
    """Join scores with metadata; labels are derived from the manifest and,
    if given, checked against ``labels`` (``G``/``I`` or genuine/impostor)."""
    if not records:
        raise EmptyDistribution("no score records")
    genuine = np.array([is_genuine(manifest[r.probe_id], manifest[r.reference_id]) for r in records], dtype=bool)
    if labels is not None:
        for i, (lab, g) in enumerate(zip(labels, genuine)):
            given = lab.strip().upper()[:1] == "G"
            if given != g:
                r = records[i]
                raise LabelMismatch(
                    f"label {lab!r} for ({r.probe_id}, {r.reference_id}) contradicts the manifest"
                )
    algs = sorted({r.algorithm for r in records})
    if algorithm is None:
        if len(algs) != 1:
            raise ValueError(f"records mix algorithms {algs}; pass algorithm=")
        algorithm = algs[0]
    return ScoreSet(
        dataset=manifest.dataset_name,
        algorithm=algorithm,
        manifest=manifest,
        probe_ids=[r.probe_id for r in records],
        reference_ids=[r.reference_id for r in records],
        scores=np.array([r.score for r in records], dtype=np.float64),
        genuine=genuine,
    )


# score computation may fan out to forked workers; they read these globals
_WORK: dict = {}


def _score_chunk(bounds: tuple[int, int]) -> list[float]:
    pairs, features, matcher = _WORK["pairs"], _WORK["features"], _WORK["matcher"]
    probes: dict = {}
    refs: dict = _WORK.setdefault("ref_cache", {})
    out = []
    for pair in pairs[bounds[0] : bounds[1]]:
        p = probes.get(pair.probe_id)
        if p is None:
            probes.clear()
            p = probes[pair.probe_id] = matcher.prepare_probe(features[pair.probe_id])
        r = refs.get(pair.reference_id)
        if r is None:
            r = refs[pair.reference_id] = matcher.prepare_reference(features[pair.reference_id])
        out.append(matcher.score_prepared(p, r))
    return out


def compute_scores(
    plan: Sequence[PlannedPair],
    features: Mapping[str, object],
    matcher,
    manifest: Manifest,
    algorithm: str,
    jobs: int = 1,
) -> ScoreSet:
    """Score every planned pair.

    ``matcher`` provides ``prepare_probe``, ``prepare_reference`` and
    ``score_prepared`` (see :mod:`veinbench.compare`).  Results are
    assembled in plan order, so ``jobs`` never changes the output.
    """
    needed = sorted({p.probe_id for p in plan} | {p.reference_id for p in plan})
    for sid in needed:
        if sid not in features:
            raise MissingFeature(sid)
    n = len(plan)
    jobs = max(1, min(int(jobs), n or 1))
    _WORK.clear()
    _WORK.update(pairs=list(plan), features=features, matcher=matcher)
    try:
        if jobs == 1 or "fork" not in multiprocessing.get_all_start_methods():
            scores = _score_chunk((0, n))
        else:
            step = max(1, math.ceil(n / (jobs * 4)))
            chunks = [(i, min(i + step, n)) for i in range(0, n, step)]
            with multiprocessing.get_context("fork").Pool(jobs) as pool:
                scores = [s for part in pool.map(_score_chunk, chunks) for s in part]
    finally:
        _WORK.clear()
    return ScoreSet(
        dataset=manifest.dataset_name,
        algorithm=algorithm,
        manifest=manifest,
        probe_ids=[p.probe_id for p in plan],
        reference_ids=[p.reference_id for p in plan],
        scores=np.array(scores, dtype=np.float64),
        genuine=np.array([p.genuine for p in plan], dtype=bool),
    )


# --------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class DistributionStats:
    mu: float
    sigma: float
    n: int


def distribution_stats(scores: Iterable[float]) -> DistributionStats:
    """Mean and population standard deviation."""
    s = np.asarray(list(scores) if not isinstance(scores, np.ndarray) else scores, dtype=np.float64)
    if s.size == 0:
        raise EmptyDistribution("cannot describe an empty score distribution")
    mu = float(s.mean())
    sigma = float(np.sqrt(np.mean((s - mu) ** 2)))
    return DistributionStats(mu, sigma, int(s.size))


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float


def error_rates(genuine, impostor) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """FMR(t) = P(impostor >= t), FNMR(t) = P(genuine < t) at every observed
    score, plus one threshold above the maximum (FMR 0, FNMR 1)."""
    g = np.sort(np.asarray(genuine, dtype=np.float64))
    i = np.sort(np.asarray(impostor, dtype=np.float64))
    if g.size == 0 or i.size == 0:
        raise EmptyDistribution("EER needs genuine and impostor scores")
    t = np.unique(np.concatenate([g, i]))
    top = t[-1] + max(1.0, abs(t[-1])) * 1e-9 + 1e-12
    t = np.append(t, top)
    # counts first: equal rates must compare equal as floats
    fmr = (i.size - np.searchsorted(i, t, side="left")) / i.size
    fnmr = np.searchsorted(g, t, side="left") / g.size
    return t, fmr, fnmr


def compute_eer(genuine, impostor) -> EerResult:
    """Equal error rate at the FMR/FNMR crossing.

    Between adjacent thresholds both curves are interpolated linearly; if
    they coincide over a run of thresholds the midpoint of that run is used.
    """
    t, fmr, fnmr = error_rates(genuine, impostor)
    diff = fnmr - fmr  # increasing from <= 0 to > 0
    equal = np.flatnonzero(diff == 0)
    if equal.size:
        mid = 0.5 * (t[equal[0]] + t[equal[-1]])
        return EerResult(float(fmr[equal[0]]), float(mid))
    k = int(np.argmax(diff > 0))
    if k == 0:
        return EerResult(float(0.5 * (fmr[0] + fnmr[0])), float(t[0]))
    d0, d1 = diff[k - 1], diff[k]
    alpha = -d0 / (d1 - d0)
    eer = fmr[k - 1] + alpha * (fmr[k] - fmr[k - 1])
    thr = t[k - 1] + alpha * (t[k] - t[k - 1])
    return EerResult(float(eer), float(thr))


# --------------------------------------------------------------------------
# grouping


@dataclass(frozen=True)
class GroupingAttribute:
    kind: str  # sex | age | finger | hand
    age_buckets: tuple[tuple[int, int], ...] = DEFAULT_AGE_BUCKETS

    def __post_init__(self):
        if self.kind not in ATTRIBUTES:
            raise ValueError(f"unknown attribute {self.kind!r}; expected one of {ATTRIBUTES}")
        buckets = tuple((int(lo), int(hi)) for lo, hi in self.age_buckets)
        for lo, hi in buckets:
            if hi <= lo:
                raise ValueError(f"empty age bucket ({lo}, {hi}]")
        for (_, hi), (lo, _) in zip(buckets, buckets[1:]):
            if lo < hi:
                raise ValueError("age buckets must be ordered and disjoint")
        object.__setattr__(self, "age_buckets", buckets)

    def group_names(self) -> list[str]:
        if self.kind == "sex":
            return ["male", "female"]
        if self.kind == "finger":
            return ["index", "middle", "ring"]
        if self.kind == "hand":
            return ["left", "right"]
        return [f"({lo}, {hi}]" for lo, hi in self.age_buckets]

    def group_of(self, meta: SampleMetadata) -> str | None:
        if self.kind == "age":
            if meta.age is None:
                return None
            for lo, hi in self.age_buckets:
                if lo < meta.age <= hi:
                    return f"({lo}, {hi}]"
            return None
        value = getattr(meta, self.kind)
        return None if value == UNKNOWN else value


def partition_by_attribute(ss: ScoreSet, attr: GroupingAttribute) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Genuine and impostor scores per group; a record belongs to a group
    only if both of its samples do."""
    group = {sid: attr.group_of(ss.manifest[sid]) for sid in set(ss.probe_ids) | set(ss.reference_ids)}
    ga = np.array([group[p] or "" for p in ss.probe_ids], dtype=object)
    gb = np.array([group[r] or "" for r in ss.reference_ids], dtype=object)
    unknown = int(np.sum((ga == "") | (gb == "")))
    if unknown:
        warnings.warn(
            f"{ss.dataset}/{ss.algorithm}: {unknown} record(s) with unknown {attr.kind} dropped",
            DataWarning,
            stacklevel=2,
        )
    same = (ga == gb) & (ga != "")
    out = {}
    for name in attr.group_names():
        sel = same & (ga == name)
        if sel.any():
            out[name] = (ss.scores[sel & ss.genuine], ss.scores[sel & ~ss.genuine])
    return out


# --------------------------------------------------------------------------
# z-scores


def zscore(a: DistributionStats, b: DistributionStats, variant: str = "sum") -> float:
    """Standardized absolute mean difference of two score distributions.

    ``sum`` divides by sqrt(sigma_a^2 + sigma_b^2); ``paper`` uses the
    difference sigma_a^2 - sigma_b^2 and is only defined when sigma_a > sigma_b.
    """
    num = abs(a.mu - b.mu)
    if variant == "sum":
        den = a.sigma**2 + b.sigma**2
        if den == 0:
            if num == 0:
                raise DegenerateVariance("both distributions have zero variance")
            raise DegenerateVariance("zero pooled variance with different means")
    elif variant == "paper":
        den = a.sigma**2 - b.sigma**2
        if den <= 0:
            raise DegenerateVariance(f"sigma_1^2 - sigma_2^2 = {den:.3g} is not positive")
    else:
        raise ValueError(f"unknown z variant {variant!r}")
    return num / math.sqrt(den)


@dataclass(frozen=True)
class ZScorePair:
    group_a: str
    group_b: str
    label: str  # genuine | impostor
    z: float


@dataclass(frozen=True)
class ZSummary:
    median_g: float | None
    median_i: float | None
    max_g: float | None
    max_i: float | None

    @property
    def significant(self) -> bool:
        return any(v is not None and v > SIGNIFICANCE_Z for v in (self.max_g, self.max_i))


def summarize_zscores(pairs: Iterable[ZScorePair]) -> ZSummary:
    """Median and maximum z per label (median of an even count averages the
    two middle values)."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyDistribution("no z-score pairs to summarize")
    zg = [p.z for p in pairs if p.label == GENUINE]
    zi = [p.z for p in pairs if p.label == IMPOSTOR]

    def med(v):
        return float(np.median(v)) if v else None

    def mx(v):
        return float(max(v)) if v else None

    return ZSummary(med(zg), med(zi), mx(zg), mx(zi))


# --------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class GroupStats:
    name: str
    label: str
    mu: float
    sigma: float
    n: int


@dataclass(frozen=True)
class GroupEer:
    group: str
    eer: float
    threshold: float


@dataclass
class AttributeSection:
    dataset: str
    algorithm: str
    attribute: str
    groups: list[GroupStats]
    zscores: list[ZScorePair]
    summary: ZSummary | None
    eer: list[GroupEer]
    skipped_pairs: int = 0

    def to_json(self) -> dict:
        s = self.summary
        return {
            "dataset": self.dataset,
            "algorithm": self.algorithm,
            "attribute": self.attribute,
            "groups": [
                {"name": g.name, "label": LABEL_CODES[g.label], "mu": g.mu, "sigma": g.sigma, "n": g.n}
                for g in self.groups
            ],
            "zscores": [{"a": z.group_a, "b": z.group_b, "label": LABEL_CODES[z.label], "z": z.z} for z in self.zscores],
            "summary": {
                "median_g": s.median_g if s else None,
                "median_i": s.median_i if s else None,
                "max_g": s.max_g if s else None,
                "max_i": s.max_i if s else None,
            },
            "eer": [{"group": e.group, "eer": e.eer, "threshold": e.threshold} for e in self.eer],
        }


@dataclass
class OverallStats:
    dataset: str
    algorithm: str
    genuine: DistributionStats
    impostor: DistributionStats
    eer: EerResult


@dataclass
class BiasReport:
    z_variant: str
    overall: list[OverallStats]
    sections: list[AttributeSection]
    attribute_summary: dict[str, ZSummary] = field(default_factory=dict)

    def significant(self, attribute: str) -> bool:
        return self.attribute_summary[attribute].significant

    def to_json(self) -> dict:
        return {
            "z_variant": self.z_variant,
            "significance_z": SIGNIFICANCE_Z,
            "overall": [
                {
                    "dataset": o.dataset,
                    "algorithm": o.algorithm,
                    "genuine": {"mu": o.genuine.mu, "sigma": o.genuine.sigma, "n": o.genuine.n},
                    "impostor": {"mu": o.impostor.mu, "sigma": o.impostor.sigma, "n": o.impostor.n},
                    "eer": o.eer.eer,
                    "threshold": o.eer.threshold,
                }
                for o in self.overall
            ],
            "sections": [s.to_json() for s in self.sections],
            "summary": {
                attr: {
                    "median_g": s.median_g,
                    "median_i": s.median_i,
                    "max_g": s.max_g,
                    "max_i": s.max_i,
                    "significant": s.significant,
                }
                for attr, s in self.attribute_summary.items()
            },
        }


def group_section(ss: ScoreSet, attr: GroupingAttribute, variant: str = "sum") -> AttributeSection:
    parts = partition_by_attribute(ss, attr)
    groups: list[GroupStats] = []
    stats: dict[tuple[str, str], DistributionStats] = {}
    eers = []
    for name, (gen, imp) in parts.items():
        for label, scores in ((GENUINE, gen), (IMPOSTOR, imp)):
            if scores.size:
                st = distribution_stats(scores)
                stats[(name, label)] = st
                groups.append(GroupStats(name, label, st.mu, st.sigma, st.n))
        if gen.size and imp.size:
            e = compute_eer(gen, imp)
            eers.append(GroupEer(name, e.eer, e.threshold))
    zs, skipped = [], 0
    names = list(parts)
    for label in (GENUINE, IMPOSTOR):
        for a, b in combinations(names, 2):
            if (a, label) not in stats or (b, label) not in stats:
                continue
            sa, sb = stats[(a, label)], stats[(b, label)]
            try:
                z = zscore(sa, sb, variant)
            except DegenerateVariance:
                if variant == "paper":
                    # the printed form needs the larger variance first
                    try:
                        z = zscore(sb, sa, variant)
                    except DegenerateVariance:
                        skipped += 1
                        continue
                else:
                    skipped += 1
                    continue
            zs.append(ZScorePair(a, b, label, z))
    summary = summarize_zscores(zs) if zs else None
    return AttributeSection(ss.dataset, ss.algorithm, attr.kind, groups, zs, summary, eers, skipped)


def build_bias_report(
    scoresets: Sequence[ScoreSet],
    attrs: Sequence[GroupingAttribute],
    variant: str = "sum",
) -> BiasReport:
    """Grouped statistics, z-scores, per-group EER and per-attribute
    aggregates pooled over every dataset and algorithm."""
    if not scoresets:
        raise ValueError("need at least one score set")
    ordered = sorted(scoresets, key=lambda s: (s.dataset, s.algorithm))
    overall = [
        OverallStats(
            s.dataset,
            s.algorithm,
            distribution_stats(s.genuine_scores),
            distribution_stats(s.impostor_scores),
            compute_eer(s.genuine_scores, s.impostor_scores),
        )
        for s in ordered
    ]
    sections = [group_section(s, a, variant) for a in attrs for s in ordered]
    summary = {}
    for a in attrs:
        pooled = [z for sec in sections if sec.attribute == a.kind for z in sec.zscores]
        if pooled:
            summary[a.kind] = summarize_zscores(pooled)
    return BiasReport(variant, overall, sections, summary)


def fmr_fnmr_points(genuine, impostor) -> list[tuple[float, float, float]]:
    t, fmr, fnmr = error_rates(genuine, impostor)
    return list(zip(t.tolist(), fmr.tolist(), fnmr.tolist()))

