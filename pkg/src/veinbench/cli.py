"""``veinbench`` command line.

Subcommands run one stage each so features and scores can be cached
between runs::

    veinbench synth --out data/
    veinbench extract --manifest data/manifest.csv --method mc --out feats/
    veinbench compare --manifest data/manifest.csv --method mc --features feats/ --out scores/mc.csv
    veinbench report --manifest data/manifest.csv --scores scores/mc.csv --out report/

Exit status: 0 on success, 2 on usage errors, 1 on data errors.  Errors are
printed to stderr as one line: ``veinbench: error: <Kind>: <message>``.
"""

from __future__ import annotations

import argparse
import datetime
import sys
import warnings
from pathlib import Path

from . import reference_values as ref
from .config import METHODS, PipelineConfig, dump_config, load_config
from .errors import ConfigError, MissingFiles, VeinbenchError
from .evalstat import ATTRIBUTES, build_bias_report, plan_comparisons, compute_scores
from .ingest import PhantomConfig, generate_phantom_dataset, load_manifest
from .io_utils import atomic_write_text
from .pipeline import extract_dataset, load_features, make_matcher, read_scores, write_scores
from .report import reference_diff, render_diff, write_report


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML pipeline configuration")
    p.add_argument("--dump-config", action="store_true", help="print the effective configuration and exit")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")


def _grouping(p: argparse.ArgumentParser) -> None:
    p.add_argument("--group-by", default=",".join(ATTRIBUTES), help="comma list of sex,age,finger,hand")
    p.add_argument("--z-variant", choices=("sum", "paper"), help="z-score denominator (default from config)")
    p.add_argument("--stamp", nargs="?", const="now", help="embed a generation timestamp in reports")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="veinbench", description="Fingervein recognition and score bias audit.")
    parser.add_argument("--dump-config", action="store_true", help="print the default configuration and exit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a phantom dataset")
    _common(p)
    p.add_argument("--out", required=False, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="phantom", help="dataset name written to the manifest")
    d = PhantomConfig()
    p.add_argument("--subjects", type=int, default=d.subjects)
    p.add_argument("--fingers", type=int, default=d.fingers_per_subject)
    p.add_argument("--samples", type=int, default=d.samples_per_finger)
    p.add_argument("--veins", type=int, default=d.vein_count)
    p.add_argument("--noise", type=float, default=d.noise_sigma)
    p.add_argument("--max-displacement", type=float, default=d.max_displacement_px)
    p.add_argument("--width", type=int, default=d.width)
    p.add_argument("--height", type=int, default=d.height)

    p = sub.add_parser("extract", help="extract one feature file per sample")
    _common(p)
    p.add_argument("--manifest", required=False)
    p.add_argument("--root", help="image root (default: manifest directory)")
    p.add_argument("--method", choices=METHODS, required=False)
    p.add_argument("--out", help="feature directory")

    p = sub.add_parser("compare", help="score all sample pairs")
    _common(p)
    p.add_argument("--manifest", required=False)
    p.add_argument("--root", help="image root, used when --features is absent")
    p.add_argument("--method", choices=METHODS, required=False)
    p.add_argument("--features", help="feature directory from 'extract' (default: extract in memory)")
    p.add_argument("--algorithm", help="algorithm tag in the score file (default: method in upper case)")
    p.add_argument("--out", help="score CSV path, or a directory to receive <METHOD>.csv")

    for name, text in (("evaluate", "bias report (Markdown, JSON, CSV)"), ("report", "bias report with figures")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _grouping(p)
        p.add_argument("--manifest", required=False)
        p.add_argument("--scores", action="append", help="score CSV (repeatable or comma separated)")
        p.add_argument("--out", help="report directory")

    p = sub.add_parser("reproduce", help="recompute the published tables from supplementary score files")
    _common(p)
    _grouping(p)
    p.add_argument("supplementary", nargs="?", help="directory holding <DATASET>/manifest.csv and <DATASET>/<ALG>.csv")
    p.add_argument("--datasets", default=",".join(ref.DATASETS), help="comma list of datasets to include")
    p.add_argument("--figures", action="store_true", help="also render figures")
    p.add_argument("--out", help="report directory")
    return parser


def _require(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_"), None) in (None, "")]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s): " + ", ".join("--" + m for m in missing))


def _out_dir(args, cfg: PipelineConfig) -> str:
    out = args.out or cfg.output_dir
    if not out:
        raise UsageError(f"{args.command}: --out is required (or set output_dir in the config)")
    return out


def _attrs(args, cfg: PipelineConfig):
    kinds = [k.strip() for k in args.group_by.split(",") if k.strip()]
    bad = [k for k in kinds if k not in ATTRIBUTES]
    if bad or not kinds:
        raise UsageError(f"--group-by: unknown attribute(s) {', '.join(bad) or '(none)'}; choose from {','.join(ATTRIBUTES)}")
    return [cfg.evaluate.attribute(k) for k in dict.fromkeys(kinds)]


def _stamp(args) -> str | None:
    if not args.stamp:
        return None
    if args.stamp == "now":
        return datetime.datetime.now(datetime.timezone.utc).replace(microsecond=0).isoformat()
    return args.stamp


def cmd_synth(args, cfg):
    out = _out_dir(args, cfg)
    pc = PhantomConfig(
        subjects=args.subjects,
        fingers_per_subject=args.fingers,
        samples_per_finger=args.samples,
        vein_count=args.veins,
        noise_sigma=args.noise,
        max_displacement_px=args.max_displacement,
        width=args.width,
        height=args.height,
    )
    m = generate_phantom_dataset(pc, args.seed, out, args.name)
    print(f"wrote {len(m.entries)} samples to {out}")


def cmd_extract(args, cfg):
    _require(args, "manifest", "method")
    out = _out_dir(args, cfg)
    manifest = load_manifest(args.manifest)
    root = args.root or str(Path(args.manifest).parent)
    extract_dataset(manifest, root, args.method, cfg, out_dir=out, jobs=args.jobs)
    print(f"wrote {len(manifest.entries)} {args.method} features to {out}")


def cmd_compare(args, cfg):
    _require(args, "manifest", "method")
    out = _out_dir(args, cfg)
    manifest = load_manifest(args.manifest)
    if args.features:
        feats = load_features(manifest, args.features, args.method)
    else:
        root = args.root or str(Path(args.manifest).parent)
        feats = extract_dataset(manifest, root, args.method, cfg, jobs=args.jobs)
    alg = args.algorithm or args.method.upper()
    plan = plan_comparisons(manifest)
    ss = compute_scores(plan, feats, make_matcher(args.method, cfg), manifest, alg, jobs=args.jobs)
    path = Path(out)
    if path.is_dir() or out.endswith(("/", "\\")):
        path = path / f"{alg}.csv"
    write_scores([ss], path)
    print(f"wrote {len(ss)} scores to {path}")


def _variant(args, cfg) -> str:
    return args.z_variant or cfg.evaluate.z_variant


def cmd_evaluate(args, cfg, figures: bool = False):
    _require(args, "manifest", "scores")
    out = _out_dir(args, cfg)
    attrs = _attrs(args, cfg)
    manifest = load_manifest(args.manifest)
    paths = [p.strip() for arg in args.scores for p in arg.split(",") if p.strip()]
    scoresets = []
    for p in paths:
        scoresets += read_scores(p, manifest)
    keys = [(s.dataset, s.algorithm) for s in scoresets]
    if len(set(keys)) != len(keys):
        raise ConfigError("several score files carry the same dataset/algorithm")
    report = build_bias_report(scoresets, attrs, _variant(args, cfg))
    write_report(report, scoresets, attrs, out, _stamp(args), figures=figures)
    print(f"wrote report for {len(scoresets)} score set(s) to {out}")


def cmd_report(args, cfg):
    cmd_evaluate(args, cfg, figures=True)


def expected_files(root: Path, datasets) -> list[Path]:
    files = []
    for ds in datasets:
        files.append(root / ds / "manifest.csv")
        files += [root / ds / f"{alg}.csv" for d, alg in ref.expected_score_files() if d == ds]
    return files


def cmd_reproduce(args, cfg):
    _require(args, "supplementary")
    out = _out_dir(args, cfg)
    root = Path(args.supplementary)
    datasets = [d.strip() for d in args.datasets.split(",") if d.strip()]
    unknown = [d for d in datasets if d not in ref.DATASETS]
    if unknown:
        raise UsageError(f"--datasets: unknown dataset(s) {', '.join(unknown)}")
    files = expected_files(root, datasets)
    missing = [p for p in files if not p.is_file()]
    if missing:
        raise MissingFiles(missing)
    attrs = _attrs(args, cfg)
    scoresets = []
    for ds in datasets:
        manifest = load_manifest(root / ds / "manifest.csv", dataset_name=ds)
        for d, alg in ref.expected_score_files():
            if d == ds:
                scoresets += read_scores(root / ds / f"{alg}.csv", manifest, algorithm=alg)
    report = build_bias_report(scoresets, attrs, _variant(args, cfg))
    stamp = _stamp(args)
    write_report(report, scoresets, attrs, out, stamp, figures=args.figures)
    rows = reference_diff(report)
    atomic_write_text(Path(out) / "reference_diff.md", render_diff(rows))
    bad = sum(not r["within"] for r in rows)
    print(f"wrote report to {out}; {len(rows) - bad}/{len(rows)} published values within tolerance")


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "compare": cmd_compare,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "reproduce": cmd_reproduce,
}


def _one_line_warning(message, category, filename, lineno, line=None):
    return f"veinbench: warning: {category.__name__}: {message}\n"


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        if args.dump_config:
            sys.stdout.write(dump_config(PipelineConfig()))
            return 0
        parser.print_usage(sys.stderr)
        print("veinbench: error: a subcommand is required", file=sys.stderr)
        return 2
    warnings.formatwarning = _one_line_warning
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        cfg = load_config(args.config)
        if args.dump_config:
            sys.stdout.write(dump_config(cfg))
            return 0
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"veinbench: error: {exc}", file=sys.stderr)
        return 2
    except (VeinbenchError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"veinbench: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
