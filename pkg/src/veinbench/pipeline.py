"""End-to-end glue: image -> ROI -> enhancement -> template, and matcher
selection per method."""

from __future__ import annotations

import csv
import io
import multiprocessing
import os
from pathlib import Path

from .compare import HistogramMatcher, KeypointMatcher, MiuraMatcher
from .config import METHODS, PipelineConfig
from .enhance import enhance_chain
from .extract import extract_keypoints, extract_lbp, extract_mc, extract_pc, feature_filename, load_feature, save_feature
from .evalstat import ScoreSet, scoreset_from_records
from .ingest import Manifest, ScoreRecord, import_external_scores, load_sample
from .io_utils import atomic_write_text
from .roi import prepare_roi


def enhancer_params(cfg: PipelineConfig) -> dict:
    e = cfg.enhance
    return {"clahe": e.clahe, "hfe": e.hfe, "cgf": e.cgf}


def extract_feature(img, sample_id: str, method: str, cfg: PipelineConfig = PipelineConfig()):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    roi = prepare_roi(img, sample_id, (cfg.roi.width, cfg.roi.height))
    roi = enhance_chain(roi, getattr(cfg.enhance.chains, method), enhancer_params(cfg))
    ex = cfg.extract
    if method == "mc":
        return extract_mc(roi, ex.mc)
    if method == "pc":
        return extract_pc(roi, ex.pc)
    if method == "lbp":
        return extract_lbp(roi, ex.lbp.scales, tuple(ex.lbp.grid))
    return extract_keypoints(roi, ex.sift)


def make_matcher(method: str, cfg: PipelineConfig = PipelineConfig()):
    if method in ("mc", "pc"):
        return MiuraMatcher(cfg.match.window)
    if method == "lbp":
        return HistogramMatcher()
    if method == "sift":
        return KeypointMatcher(cfg.match.ratio)
    raise ValueError(f"unknown method {method!r}")


_EXTRACT_JOB: dict = {}


def _extract_one(sample_id: str):
    job = _EXTRACT_JOB
    entry = job["manifest"][sample_id]
    feat = extract_feature(load_sample(entry, job["root"]), sample_id, job["method"], job["cfg"])
    if job["out"] is not None:
        save_feature(feat, Path(job["out"]) / feature_filename(sample_id, job["method"]))
        return sample_id, None
    return sample_id, feat


def extract_dataset(
    manifest: Manifest,
    root: str | os.PathLike,
    method: str,
    cfg: PipelineConfig = PipelineConfig(),
    out_dir: str | os.PathLike | None = None,
    jobs: int = 1,
) -> dict:
    """Extract one template per manifest entry.

    With ``out_dir`` every template is written to
    ``<out_dir>/<sample_id>.<method>.vbf`` and the returned dict is empty.
    """
    ids = manifest.ids
    _EXTRACT_JOB.clear()
    _EXTRACT_JOB.update(manifest=manifest, root=root, method=method, cfg=cfg, out=out_dir)
    try:
        if jobs <= 1 or "fork" not in multiprocessing.get_all_start_methods():
            results = [_extract_one(sid) for sid in ids]
        else:
            with multiprocessing.get_context("fork").Pool(min(jobs, len(ids))) as pool:
                results = pool.map(_extract_one, ids, chunksize=max(1, len(ids) // (jobs * 4)))
    finally:
        _EXTRACT_JOB.clear()
    return {sid: feat for sid, feat in results if feat is not None}


def load_features(manifest: Manifest, feature_dir: str | os.PathLike, method: str) -> dict:
    """Load every available template; absent files are simply missing from
    the result (the scorer reports them)."""
    out = {}
    for sid in manifest.ids:
        path = Path(feature_dir) / feature_filename(sid, method)
        if path.is_file():
            out[sid] = load_feature(path, sid)
    return out


# --------------------------------------------------------------------------
# score files

SCORE_COLUMNS = ("probe_id", "reference_id", "label", "score", "algorithm")


def scores_to_csv(scoresets) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_COLUMNS)
    for ss in scoresets:
        for p, r, s, g in zip(ss.probe_ids, ss.reference_ids, ss.scores, ss.genuine):
            w.writerow((p, r, "G" if g else "I", repr(float(s)), ss.algorithm))
    return buf.getvalue()


def write_scores(scoresets, path: str | os.PathLike) -> None:
    atomic_write_text(path, scores_to_csv(scoresets))


def read_scores(path: str | os.PathLike, manifest: Manifest, algorithm: str | None = None) -> list[ScoreSet]:
    """One ScoreSet per algorithm found in a score CSV.

    A ``label`` column, when present, is checked against the manifest.
    ``algorithm`` overrides whatever tag the file carries.
    """
    records = import_external_scores(path, manifest)
    if algorithm is not None:
        records = [ScoreRecord(r.probe_id, r.reference_id, r.score, algorithm) for r in records]
    labels = None
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        if rows.fieldnames and "label" in rows.fieldnames:
            labels = {}
            for row in rows:
                a, b = row["probe_id"], row["reference_id"]
                key = (min(a, b), max(a, b), algorithm or row.get("algorithm") or "external")
                labels.setdefault(key, row["label"] or "")
    by_alg: dict[str, list] = {}
    for rec in records:
        by_alg.setdefault(rec.algorithm, []).append(rec)
    out = []
    for alg in sorted(by_alg):
        recs = by_alg[alg]
        labs = None
        if labels is not None:
            labs = [labels[(min(r.probe_id, r.reference_id), max(r.probe_id, r.reference_id), alg)] for r in recs]
        out.append(scoreset_from_records(recs, manifest, alg, labs))
    return out
