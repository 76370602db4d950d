import math
import warnings
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from veinbench.errors import DegenerateVariance, EmptyDistribution, LabelMismatch, MissingFeature
from veinbench.evalstat import (
    GENUINE,
    IMPOSTOR,
    DistributionStats,
    GroupingAttribute,
    ZScorePair,
    build_bias_report,
    compute_eer,
    compute_scores,
    distribution_stats,
    error_rates,
    fmr_fnmr_points,
    is_genuine,
    partition_by_attribute,
    plan_comparisons,
    scoreset_from_records,
    summarize_zscores,
    zscore,
)
from veinbench.ingest import Manifest, ScoreRecord

from conftest import make_entry


def brute_force_eer(gen, imp):
    """Half-sum of the error rates at the observed threshold where they are closest."""
    best = None
    for t in sorted(set(gen) | set(imp)) + [max(max(gen), max(imp)) + 1]:
        fmr = sum(s >= t for s in imp) / len(imp)
        fnmr = sum(s < t for s in gen) / len(gen)
        key = abs(fmr - fnmr)
        if best is None or key < best[0]:
            best = (key, (fmr + fnmr) / 2)
    return best[1]


# --- planning ---------------------------------------------------------------


def test_plan_single_instance():
    m = Manifest("m", [make_entry("a", "s1", k=1), make_entry("b", "s1", k=2)])
    plan = plan_comparisons(m)
    assert [(p.probe_id, p.reference_id, p.label) for p in plan] == [("a", "b", GENUINE)]


def test_plan_two_subjects(tiny_manifest):
    plan = plan_comparisons(tiny_manifest)
    assert len(plan) == 6
    assert sum(p.genuine for p in plan) == 2
    assert all(p.probe_id < p.reference_id for p in plan)
    assert plan == sorted(plan, key=lambda p: (p.probe_id, p.reference_id))


def test_plan_labels_match_metadata(small_phantom):
    manifest, _ = small_phantom
    plan = plan_comparisons(manifest)
    n = len(manifest)
    assert len(plan) == n * (n - 1) // 2
    for p in plan:
        a, b = manifest[p.probe_id], manifest[p.reference_id]
        same = (a.subject_id, a.hand, a.finger) == (b.subject_id, b.hand, b.finger) and a.sample_index != b.sample_index
        assert p.genuine == same == is_genuine(a, b)


class ConstMatcher:
    def prepare_probe(self, f):
        return f

    prepare_reference = prepare_probe

    def score_prepared(self, a, b):
        return float(a + b)


def test_compute_scores_and_missing_feature(tiny_manifest):
    plan = plan_comparisons(tiny_manifest)
    feats = {sid: i / 10 for i, sid in enumerate(tiny_manifest.ids)}
    ss = compute_scores(plan, feats, ConstMatcher(), tiny_manifest, "T")
    assert len(ss) == 6
    assert ss.scores[0] == pytest.approx(0.1)
    par = compute_scores(plan, feats, ConstMatcher(), tiny_manifest, "T", jobs=3)
    assert np.array_equal(ss.scores, par.scores)
    del feats["b1"]
    with pytest.raises(MissingFeature) as exc:
        compute_scores(plan, feats, ConstMatcher(), tiny_manifest, "T")
    assert exc.value.sample_id == "b1"


def test_scoreset_label_check(tiny_manifest):
    recs = [ScoreRecord("a1", "a2", 0.9, "X"), ScoreRecord("a1", "b1", 0.1, "X")]
    ss = scoreset_from_records(recs, tiny_manifest, labels=["G", "I"])
    assert ss.genuine.tolist() == [True, False]
    with pytest.raises(LabelMismatch):
        scoreset_from_records(recs, tiny_manifest, labels=["I", "I"])


# --- statistics -------------------------------------------------------------


def test_distribution_examples():
    assert distribution_stats([0.5]) == DistributionStats(0.5, 0.0, 1)
    st_ = distribution_stats([0.0, 1.0])
    assert (st_.mu, st_.sigma, st_.n) == (0.5, 0.5, 2)
    with pytest.raises(EmptyDistribution):
        distribution_stats([])


def test_eer_examples():
    assert compute_eer([0.9, 0.8], [0.1, 0.2]).eer == 0.0
    same = [0.3, 0.5, 0.7]
    assert compute_eer(same, same).eer == 0.5
    r = compute_eer([0.9, 0.8, 0.4], [0.5, 0.3, 0.2])
    assert r.eer == pytest.approx(1 / 3)
    assert brute_force_eer([0.9, 0.8, 0.4], [0.5, 0.3, 0.2]) == pytest.approx(1 / 3)
    with pytest.raises(EmptyDistribution):
        compute_eer([], [0.1])


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(5, 80), st.integers(5, 80))
def test_eer_matches_sweep(seed, ng, ni):
    rng = np.random.default_rng(seed)
    gen = rng.normal(0.6, 0.15, ng)
    imp = rng.normal(0.4, 0.15, ni)
    got = compute_eer(gen, imp).eer
    assert abs(got - brute_force_eer(gen.tolist(), imp.tolist())) <= 1 / (2 * min(ng, ni)) + 1e-12


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 60), st.integers(2, 60), st.integers(1, 3))
def test_eer_with_ties_stays_inside_envelope(seed, ng, ni, decimals):
    rng = np.random.default_rng(seed)
    gen = np.round(rng.normal(0.6, 0.2, ng), decimals)
    imp = np.round(rng.normal(0.4, 0.2, ni), decimals)
    _, fmr, fnmr = error_rates(gen, imp)
    lo = np.max(np.minimum(fmr, fnmr))
    hi = np.min(np.maximum(fmr, fnmr))
    got = compute_eer(gen, imp).eer
    assert lo - 1e-12 <= got <= hi + 1e-12


def test_error_rate_conventions():
    pts = fmr_fnmr_points([0.5, 0.7], [0.5, 0.1])
    t = {p[0]: p[1:] for p in pts}
    # impostor >= t is a false match, genuine < t a false non-match
    assert t[0.5] == (0.5, 0.0)
    assert t[0.7] == (0.0, 0.5)
    assert pts[-1][1:] == (0.0, 1.0)


# --- grouping ---------------------------------------------------------------


def bucket_manifest():
    return Manifest(
        "ages",
        [
            make_entry("a1", "s1", "male", 25, k=1),
            make_entry("a2", "s1", "male", 25, k=2),
            make_entry("b1", "s2", "female", 29, k=1),
            make_entry("c1", "s3", "male", 31, k=1),
            make_entry("d1", "s4", "unknown", None, k=1),
        ],
    )


def scoreset_all_pairs(m, value=0.5):
    recs = [ScoreRecord(p.probe_id, p.reference_id, value, "X") for p in plan_comparisons(m)]
    return scoreset_from_records(recs, m)


def test_age_bucket_edges():
    m = bucket_manifest()
    ss = scoreset_all_pairs(m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        parts = partition_by_attribute(ss, GroupingAttribute("age"))
    gen, imp = parts["(0, 30]"]
    assert gen.size == 1  # a1-a2
    assert imp.size == 2  # a1-b1, a2-b1 (ages 25 and 29)
    assert "(30, 45]" not in parts  # 31 has no partner in its bucket
    assert GroupingAttribute("age").group_of(m["c1"]) == "(30, 45]"


def test_sex_cross_pairs_excluded(tiny_manifest):
    ss = scoreset_all_pairs(tiny_manifest)
    parts = partition_by_attribute(ss, GroupingAttribute("sex"))
    total = sum(g.size + i.size for g, i in parts.values())
    assert total == 2  # the two genuine pairs; male-female impostors dropped
    assert set(parts) == {"male", "female"}


def test_single_sex_manifest():
    m = Manifest("m", [make_entry(f"x{i}", f"s{i // 2}", "male", 40, k=i % 2 + 1) for i in range(6)])
    ss = scoreset_all_pairs(m)
    parts = partition_by_attribute(ss, GroupingAttribute("sex"))
    assert sum(g.size + i.size for g, i in parts.values()) == len(ss)


def test_partition_is_disjoint_sub_multiset(small_phantom):
    manifest, _ = small_phantom
    rng = np.random.default_rng(0)
    recs = [ScoreRecord(p.probe_id, p.reference_id, float(rng.random()), "X") for p in plan_comparisons(manifest)]
    ss = scoreset_from_records(recs, manifest)
    for kind in ("sex", "age", "finger", "hand"):
        parts = partition_by_attribute(ss, GroupingAttribute(kind))
        sizes = sum(g.size + i.size for g, i in parts.values())
        assert sizes <= len(ss)
        pooled = np.sort(np.concatenate([np.concatenate([g, i]) for g, i in parts.values()]))
        assert np.all(np.isin(pooled, ss.scores))


def test_unknown_values_are_dropped_with_warning():
    m = bucket_manifest()
    with pytest.warns(UserWarning):
        partition_by_attribute(scoreset_all_pairs(m), GroupingAttribute("age"))


def test_bucket_validation():
    with pytest.raises(ValueError):
        GroupingAttribute("age", ((0, 40), (30, 50)))
    with pytest.raises(ValueError):
        GroupingAttribute("height")


# --- z-scores ---------------------------------------------------------------


def test_zscore_examples():
    a = DistributionStats(0.72368, 0.12250, 10)
    b = DistributionStats(0.73008, 0.11503, 10)
    expect = 0.0064 / math.sqrt(0.12250**2 + 0.11503**2)
    assert zscore(a, b) == pytest.approx(expect, abs=1e-9)
    assert zscore(a, b) == pytest.approx(0.0381, abs=5e-5)
    assert zscore(DistributionStats(0.7, 0.1, 5), DistributionStats(0.4, 0.1, 5)) == pytest.approx(0.3 / math.sqrt(0.02), abs=1e-9)
    same = DistributionStats(0.5, 0.2, 3)
    assert zscore(same, DistributionStats(0.5, 0.1, 3)) == 0.0
    assert zscore(same, DistributionStats(0.5, 0.1, 3), "paper") == 0.0


def test_zscore_degenerate():
    with pytest.raises(DegenerateVariance):
        zscore(DistributionStats(0.5, 0.1, 3), DistributionStats(0.6, 0.2, 3), "paper")
    with pytest.raises(DegenerateVariance):
        zscore(DistributionStats(0.5, 0.1, 3), DistributionStats(0.6, 0.1, 3), "paper")
    with pytest.raises(DegenerateVariance):
        zscore(DistributionStats(0.5, 0.0, 3), DistributionStats(0.6, 0.0, 3))
    with pytest.raises(ValueError):
        zscore(DistributionStats(0.5, 0.1, 3), DistributionStats(0.6, 0.1, 3), "other")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_zscore_symmetric_and_scale_free(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random(20), rng.random(30) * 0.5
    a, b = distribution_stats(x), distribution_stats(y)
    assert zscore(a, b) == zscore(b, a)
    for c in (0.5, 2.0, 10.0):
        assert zscore(distribution_stats(c * x), distribution_stats(c * y)) == pytest.approx(zscore(a, b), rel=1e-12)


def test_summary_examples():
    one = summarize_zscores([ZScorePair("a", "b", GENUINE, 0.3)])
    assert (one.median_g, one.max_g, one.median_i) == (0.3, 0.3, None)
    three = summarize_zscores([ZScorePair("a", "b", GENUINE, z) for z in (0.1, 0.4, 0.2)])
    assert (three.median_g, three.max_g) == (0.2, 0.4)
    four = summarize_zscores([ZScorePair("a", "b", IMPOSTOR, z) for z in (0.1, 0.4, 0.2, 0.3)])
    assert four.median_i == pytest.approx(0.25)
    assert not four.significant
    assert summarize_zscores([ZScorePair("a", "b", IMPOSTOR, 2.0)]).significant


# group statistics by sex as published for the four datasets (mu_g, mu_i, sigma_g, sigma_i)
SEX_TABLE = {
    ("MMCBNU", "LCNN"): ((0.72368, 0.25896, 0.12250, 0.07901), (0.73008, 0.33211, 0.11503, 0.08697)),
    ("MMCBNU", "LBP"): ((0.84866, 0.78734, 0.02047, 0.00826), (0.84547, 0.79151, 0.01791, 0.00685)),
    ("MMCBNU", "MC"): ((0.27539, 0.12060, 0.04875, 0.01733), (0.25575, 0.12102, 0.04635, 0.01710)),
    ("MMCBNU", "PC"): ((0.41292, 0.30600, 0.02758, 0.01652), (0.39922, 0.30596, 0.02764, 0.01685)),
    ("MMCBNU", "SIFT"): ((0.39940, 0.01577, 0.16554, 0.02541), (0.34890, 0.01269, 0.15805, 0.01926)),
    ("PLUS", "LCNN"): ((0.69420, 0.25298, 0.13924, 0.08804), (0.71743, 0.27548, 0.13494, 0.09270)),
    ("PLUS", "LBP"): ((0.79966, 0.36896, 0.16497, 0.05888), (0.80798, 0.37765, 0.15622, 0.05819)),
    ("PLUS", "MC"): ((0.24732, 0.12233, 0.04122, 0.00846), (0.25398, 0.12849, 0.03640, 0.00836)),
    ("PLUS", "PC"): ((0.41017, 0.30100, 0.03129, 0.01399), (0.41617, 0.30414, 0.02844, 0.01290)),
    ("PLUS", "SIFT"): ((0.35073, 0.01192, 0.15233, 0.01227), (0.35173, 0.01076, 0.13833, 0.01181)),
    ("UTFVP", "LCNN"): ((0.71090, 0.34391, 0.11343, 0.10297), (0.65934, 0.34688, 0.10964, 0.11891)),
    ("UTFVP", "LBP"): ((0.84929, 0.81163, 0.01259, 0.00415), (0.83938, 0.81127, 0.01301, 0.00477)),
    ("UTFVP", "MC"): ((0.24182, 0.11602, 0.03774, 0.00674), (0.22877, 0.12381, 0.03911, 0.00769)),
    ("UTFVP", "PC"): ((0.40795, 0.28808, 0.02460, 0.01054), (0.38403, 0.28944, 0.02983, 0.01064)),
    ("UTFVP", "SIFT"): ((0.34616, 0.00927, 0.14795, 0.01062), (0.22082, 0.01078, 0.13145, 0.01148)),
    ("VERA", "LBP"): ((0.81534, 0.78890, 0.01149, 0.00416), (0.80881, 0.78950, 0.00869, 0.00398)),
    ("VERA", "MC"): ((0.24689, 0.11319, 0.04681, 0.00946), (0.22948, 0.11463, 0.04140, 0.00929)),
    ("VERA", "PC"): ((0.39161, 0.29269, 0.02930, 0.01118), (0.38007, 0.30051, 0.03050, 0.01085)),
    ("VERA", "SIFT"): ((0.26795, 0.00549, 0.15266, 0.00823), (0.16964, 0.00621, 0.10518, 0.00855)),
}


def test_published_sex_maxima_follow_from_group_tables():
    """The sum-variance z of the published sex groups reproduces the
    published maxima to the rounding of the group tables."""
    pairs = []
    for male, female in SEX_TABLE.values():
        for label, mu, sd in ((GENUINE, 0, 2), (IMPOSTOR, 1, 3)):
            a = DistributionStats(male[mu], male[sd], 1)
            b = DistributionStats(female[mu], female[sd], 1)
            pairs.append(ZScorePair("male", "female", label, zscore(a, b)))
    s = summarize_zscores(pairs)
    assert s.max_g == pytest.approx(0.63334, abs=1e-3)
    assert s.max_i == pytest.approx(0.76144, abs=1e-3)
    assert not s.significant


# --- report -----------------------------------------------------------------


def test_report_identical_groups_not_significant():
    entries = []
    for subj in range(8):
        for k in (1, 2):
            entries.append(make_entry(f"s{subj}_{k}", f"s{subj}", ("male", "female")[subj % 2], 30, k=k))
    m = Manifest("same", entries)
    recs = [ScoreRecord(p.probe_id, p.reference_id, 0.8 if p.genuine else 0.2 + 0.01 * (i % 3), "X")
            for i, p in enumerate(plan_comparisons(m))]
    ss = scoreset_from_records(recs, m)
    rep = build_bias_report([ss], [GroupingAttribute("sex")])
    sec = rep.sections[0]
    assert all(z.z < 1.96 for z in sec.zscores)
    assert not rep.significant("sex")
    doc = rep.to_json()
    assert set(doc["sections"][0]) == {"dataset", "algorithm", "attribute", "groups", "zscores", "summary", "eer"}
    assert {g["label"] for g in doc["sections"][0]["groups"]} == {"G", "I"}


def test_report_summary_recomputable(small_phantom):
    manifest, _ = small_phantom
    rng = np.random.default_rng(1)
    sets = []
    for alg in ("A", "B"):
        recs = [ScoreRecord(p.probe_id, p.reference_id, float(rng.normal(0.7 if p.genuine else 0.3, 0.05)), alg)
                for p in plan_comparisons(manifest)]
        sets.append(scoreset_from_records(recs, manifest))
    attrs = [GroupingAttribute(k) for k in ("sex", "age", "finger", "hand")]
    rep = build_bias_report(sets, attrs, "sum")
    assert [o.algorithm for o in rep.overall] == ["A", "B"]
    for a in attrs:
        pooled = [z for s in rep.sections if s.attribute == a.kind for z in s.zscores]
        assert rep.attribute_summary[a.kind] == summarize_zscores(pooled)
        for s in rep.sections:
            if s.attribute == a.kind:
                names = [g.name for g in s.groups if g.label == GENUINE]
                assert len([z for z in s.zscores if z.label == GENUINE]) == len(list(combinations(names, 2)))
    paper = build_bias_report(sets, attrs, "paper")
    assert paper.z_variant == "paper"
    assert all(z.z >= 0 for s in paper.sections for z in s.zscores)
