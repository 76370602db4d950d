"""Dataset manifests, image loading, external score import and phantom data.

A single CSV manifest describes every sample of a dataset; images live
relative to a root directory.  See ``MANIFEST_COLUMNS`` for the schema.
"""

from __future__ import annotations

import csv
import io
import math
import os
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.interpolate import CubicSpline

from .errors import (
    DuplicateSampleId,
    MissingColumn,
    NonFiniteScore,
    UnknownSampleId,
    UnparseableRow,
    UnsupportedFormat,
)
from .io_utils import atomic_write_bytes, atomic_write_text

MANIFEST_COLUMNS = ("sample_id", "subject_id", "sex", "age", "hand", "finger", "sample_index", "image_path")

_SEX = {"M": "male", "F": "female", "NA": "unknown"}
_HAND = {"L": "left", "R": "right", "NA": "unknown"}
_FINGER = {"index": "index", "middle": "middle", "ring": "ring", "NA": "unknown"}
UNKNOWN = "unknown"


class DataWarning(UserWarning):
    """Recoverable data problem (duplicates dropped, records skipped...)."""


@dataclass(frozen=True)
class SampleMetadata:
    sample_id: str
    subject_id: str
    sex: str = UNKNOWN  # male | female | unknown
    age: int | None = None
    hand: str = UNKNOWN  # left | right | unknown
    finger: str = UNKNOWN  # index | middle | ring | unknown
    sample_index: int = 1
    image_path: str = ""

    @property
    def instance(self) -> tuple[str, str, str]:
        """Biometric instance key: one finger of one subject."""
        return (self.subject_id, self.hand, self.finger)


@dataclass
class Manifest:
    dataset_name: str
    entries: list[SampleMetadata]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("manifest has no entries")
        seen = set()
        for e in self.entries:
            if e.sample_id in seen:
                raise DuplicateSampleId(e.sample_id)
            seen.add(e.sample_id)
        self._by_id = {e.sample_id: e for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, sample_id: str) -> SampleMetadata:
        return self._by_id[sample_id]

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._by_id

    @property
    def ids(self) -> list[str]:
        return [e.sample_id for e in self.entries]

    def instances(self) -> dict[tuple[str, str, str], list[SampleMetadata]]:
        out: dict[tuple[str, str, str], list[SampleMetadata]] = {}
        for e in self.entries:
            out.setdefault(e.instance, []).append(e)
        return out


@dataclass(frozen=True)
class ScoreRecord:
    probe_id: str
    reference_id: str
    score: float
    algorithm: str = "external"


def _parse_enum(value: str, table: dict, column: str, row: int) -> str:
    key = value.strip()
    if key not in table:
        raise UnparseableRow(row, f"bad {column} value {value!r} (expected one of {sorted(table)})")
    return table[key]


def _data_lines(text: str) -> Iterable[tuple[int, str]]:
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.lstrip().startswith("#") or not line.strip():
            continue
        yield lineno, line


def _read_csv(path: str | os.PathLike, required: Iterable[str]) -> tuple[list[str], list[tuple[int, dict]]]:
    text = Path(path).read_text(encoding="utf-8")
    lines = list(_data_lines(text))
    if not lines:
        raise MissingColumn(f"{path}: empty file, no header")
    header = next(csv.reader([lines[0][1]]))
    header = [h.strip() for h in header]
    missing = [c for c in required if c not in header]
    if missing:
        raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
    rows = []
    for lineno, line in lines[1:]:
        values = next(csv.reader([line]))
        if len(values) != len(header):
            raise UnparseableRow(lineno, f"expected {len(header)} fields, got {len(values)}")
        rows.append((lineno, dict(zip(header, (v.strip() for v in values)))))
    return header, rows


def load_manifest(path: str | os.PathLike, dataset_name: str | None = None) -> Manifest:
    """Parse and validate a manifest CSV.

    ``#`` lines are comments.  ``NA`` marks unknown sex/age/hand/finger.
    """
    _, rows = _read_csv(path, MANIFEST_COLUMNS)
    entries = []
    seen: set[str] = set()
    seen_instance_samples: set = set()
    for lineno, r in rows:
        sid = r["sample_id"]
        if not sid:
            raise UnparseableRow(lineno, "empty sample_id")
        if sid in seen:
            raise DuplicateSampleId(sid)
        seen.add(sid)
        age_text = r["age"]
        if age_text == "NA":
            age = None
        else:
            try:
                age = int(age_text)
            except ValueError:
                raise UnparseableRow(lineno, f"bad age {age_text!r}") from None
            if age < 0:
                raise UnparseableRow(lineno, f"negative age {age}")
        try:
            sample_index = int(r["sample_index"])
        except ValueError:
            raise UnparseableRow(lineno, f"bad sample_index {r['sample_index']!r}") from None
        if sample_index < 1:
            raise UnparseableRow(lineno, "sample_index must be >= 1")
        entry = SampleMetadata(
            sample_id=sid,
            subject_id=r["subject_id"],
            sex=_parse_enum(r["sex"], _SEX, "sex", lineno),
            age=age,
            hand=_parse_enum(r["hand"], _HAND, "hand", lineno),
            finger=_parse_enum(r["finger"], _FINGER, "finger", lineno),
            sample_index=sample_index,
            image_path=r["image_path"],
        )
        key = (entry.instance, sample_index)
        if key in seen_instance_samples:
            raise UnparseableRow(lineno, f"sample_index {sample_index} repeated for instance {entry.instance}")
        seen_instance_samples.add(key)
        entries.append(entry)
    if not entries:
        raise UnparseableRow(0, "manifest has no data rows")
    name = dataset_name or _declared_name(path) or Path(path).stem
    return Manifest(name, entries)


def _declared_name(path) -> str | None:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                return None
            key, _, value = line[1:].partition(":")
            if key.strip() == "dataset" and value.strip():
                return value.strip()
    return None


def _inverse(table: dict) -> dict:
    return {v: k for k, v in table.items()}


def manifest_to_csv(manifest: Manifest) -> str:
    sex, hand, finger = _inverse(_SEX), _inverse(_HAND), _inverse(_FINGER)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(f"# dataset: {manifest.dataset_name}\n")
    w.writerow(MANIFEST_COLUMNS)
    for e in manifest.entries:
        w.writerow(
            [
                e.sample_id,
                e.subject_id,
                sex[e.sex],
                "NA" if e.age is None else e.age,
                hand[e.hand],
                finger[e.finger],
                e.sample_index,
                e.image_path,
            ]
        )
    return buf.getvalue()


def write_manifest(manifest: Manifest, path: str | os.PathLike) -> None:
    atomic_write_text(path, manifest_to_csv(manifest))


# --------------------------------------------------------------------------
# images


def _read_pgm(raw: bytes, path) -> np.ndarray:
    # P5 header: magic, width, height, maxval separated by whitespace; comments allowed
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise UnsupportedFormat(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace before the raster
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise UnsupportedFormat(f"{path}: malformed PGM header") from None
    if maxval > 255:
        raise UnsupportedFormat(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    data = raw[pos : pos + width * height]
    if len(data) != width * height:
        raise UnsupportedFormat(f"{path}: truncated PGM raster")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width)


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Read an 8-bit grayscale PNG or binary PGM; returns float64 in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image not found: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"P5":
        arr = _read_pgm(raw, path)
    elif raw[:8] == b"\x89PNG\r\n\x1a\n":
        with Image.open(io.BytesIO(raw)) as im:
            if im.mode != "L":
                raise UnsupportedFormat(f"{path}: PNG mode {im.mode!r}, expected 8-bit grayscale")
            arr = np.asarray(im, dtype=np.uint8)
    else:
        raise UnsupportedFormat(f"{path}: not a PNG or binary PGM file")
    return arr.astype(np.float64) / 255.0


def load_sample(entry: SampleMetadata, root: str | os.PathLike) -> np.ndarray:
    return read_image(Path(root) / entry.image_path)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def write_png(img: np.ndarray, path: str | os.PathLike) -> None:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img), mode="L").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def write_pgm(img: np.ndarray, path: str | os.PathLike) -> None:
    arr = to_uint8(img)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + arr.tobytes())


# --------------------------------------------------------------------------
# external scores


def import_external_scores(path: str | os.PathLike, manifest: Manifest) -> list[ScoreRecord]:
    """Read externally computed comparison scores.

    Unordered duplicates keep the first occurrence and emit a
    :class:`DataWarning`.
    """
    header, rows = _read_csv(path, ("probe_id", "reference_id", "score"))
    has_alg = "algorithm" in header
    records: list[ScoreRecord] = []
    seen: set[tuple[str, str, str]] = set()
    dropped = 0
    for lineno, r in rows:
        a, b = r["probe_id"], r["reference_id"]
        for sid in (a, b):
            if sid not in manifest:
                raise UnknownSampleId(sid, lineno)
        if a == b:
            raise UnparseableRow(lineno, f"self-comparison of {a!r}")
        try:
            score = float(r["score"])
        except ValueError:
            raise UnparseableRow(lineno, f"bad score {r['score']!r}") from None
        if not math.isfinite(score):
            raise NonFiniteScore(f"row {lineno}: non-finite score {r['score']!r}")
        alg = (r["algorithm"] or "external") if has_alg else "external"
        key = (min(a, b), max(a, b), alg)
        if key in seen:
            dropped += 1
            continue
        seen.add(key)
        records.append(ScoreRecord(a, b, score, alg))
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} duplicate comparison(s)", DataWarning, stacklevel=2)
    return records


# --------------------------------------------------------------------------
# phantom datasets

_AGE_BY_BUCKET = (24, 38, 52, 66)
_INSTANCE_LAYOUT = (
    ("left", "index"),
    ("right", "middle"),
    ("left", "ring"),
    ("right", "index"),
    ("left", "middle"),
    ("right", "ring"),
)


@dataclass(frozen=True)
class PhantomConfig:
    subjects: int = 20
    fingers_per_subject: int = 2
    samples_per_finger: int = 4
    vein_count: int = 5
    noise_sigma: float = 0.02
    max_displacement_px: float = 8.0
    width: int = 240
    height: int = 120

    def __post_init__(self):
        for name in ("subjects", "fingers_per_subject", "samples_per_finger", "vein_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.fingers_per_subject > len(_INSTANCE_LAYOUT):
            raise ValueError(f"at most {len(_INSTANCE_LAYOUT)} fingers per subject")
        if self.noise_sigma < 0 or self.max_displacement_px < 0:
            raise ValueError("noise_sigma and max_displacement_px must be >= 0")


@dataclass
class PhantomInstance:
    """Noise-free finger canvas plus the vein centerlines drawn into it."""

    canvas: np.ndarray
    margin: int
    centerlines: list[np.ndarray]  # each (n, 2) array of (x, y) canvas coordinates


def render_finger(
    rng: np.random.Generator, width: int, height: int, vein_count: int, margin: int = 0
) -> PhantomInstance:
    """Draw one finger: a bright band with dark Gaussian-profile veins."""
    cw, ch = width + 2 * margin, height + 2 * margin
    yy, xx = np.mgrid[0:ch, 0:cw].astype(np.float64)
    center = ch / 2.0 + rng.uniform(-3, 3)
    half = height * rng.uniform(0.26, 0.30)
    dist = np.abs(yy - center)
    band = 1.0 / (1.0 + np.exp((dist - half) / 1.2))
    finger = 0.08 + band * (0.55 + 0.15 * np.cos(np.clip(dist / half, 0, 1) * np.pi / 2))
    attenuation = np.ones_like(finger)
    centerlines = []
    for _ in range(vein_count):
        span = rng.uniform(0.5, 1.0) * cw
        x0 = rng.uniform(0, cw - span)
        knots_x = np.linspace(x0, x0 + span, 5)
        knots_y = center + rng.uniform(-0.7, 0.7, size=5) * half
        spline = CubicSpline(knots_x, knots_y)
        xs = xx[0]
        inside = (xs >= x0) & (xs <= x0 + span)
        fy = spline(xs)
        slope = spline(xs, 1)
        width_px = rng.uniform(1.5, 2.5)
        depth = rng.uniform(0.25, 0.4)
        d = (yy - fy[None, :]) / np.sqrt(1.0 + slope[None, :] ** 2)
        profile = np.exp(-(d**2) / (2.0 * width_px**2))
        # taper the ends so veins fade instead of stopping abruptly
        taper = np.clip(np.minimum(xs - x0, x0 + span - xs) / 10.0, 0, 1) * inside
        attenuation *= 1.0 - depth * profile * taper[None, :]
        pts = np.column_stack([xs[inside], fy[inside]])
        centerlines.append(pts[(pts[:, 1] > center - half + 2) & (pts[:, 1] < center + half - 2)])
    canvas = 0.08 + (finger - 0.08) * attenuation
    return PhantomInstance(canvas=canvas, margin=margin, centerlines=centerlines)


def place_sample(
    inst: PhantomInstance, width: int, height: int, dx: float, dy: float, degrees: float
) -> np.ndarray:
    """Cut a ``height`` x ``width`` frame out of the canvas, rotated and shifted."""
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    m = inst.margin
    matrix = np.array([[c, -s], [s, c]])
    out_center = np.array([(height - 1) / 2.0, (width - 1) / 2.0])
    in_center = out_center + m - np.array([dy, dx])
    offset = in_center - matrix @ out_center
    return ndimage.affine_transform(
        inst.canvas, matrix, offset=offset, output_shape=(height, width), order=1, mode="nearest"
    )


def _phantom_entries(cfg: PhantomConfig):
    for subj in range(cfg.subjects):
        sex = ("male", "female")[subj % 2]
        age = _AGE_BY_BUCKET[(subj // 2) % len(_AGE_BY_BUCKET)]
        for f in range(cfg.fingers_per_subject):
            hand, finger = _INSTANCE_LAYOUT[(subj + f) % len(_INSTANCE_LAYOUT)]
            for k in range(1, cfg.samples_per_finger + 1):
                sid = f"s{subj:03d}_{hand[0].upper()}{finger}_{k:02d}"
                yield subj, f, k, SampleMetadata(
                    sample_id=sid,
                    subject_id=f"s{subj:03d}",
                    sex=sex,
                    age=age,
                    hand=hand,
                    finger=finger,
                    sample_index=k,
                    image_path=f"images/{sid}.png",
                )


def generate_phantom_dataset(
    config: PhantomConfig, seed: int, out_dir: str | os.PathLike | None = None, name: str = "phantom"
) -> Manifest:
    """Synthesize a labelled fingervein-like dataset.

    Each instance gets its own vein network; samples of an instance differ by
    a translation (at most ``max_displacement_px``), a rotation of at most 2
    degrees and additive Gaussian noise.  Every random stream is derived from
    ``seed`` and the sample's position, so output is bit-reproducible.  When
    ``out_dir`` is given, PNGs and ``manifest.csv`` are written there.
    """
    entries = []
    margin = int(math.ceil(config.max_displacement_px)) + 16
    instances: dict[tuple[int, int], PhantomInstance] = {}
    for subj, f, k, entry in _phantom_entries(config):
        inst = instances.get((subj, f))
        if inst is None:
            rng = np.random.default_rng([seed, subj, f])
            inst = render_finger(rng, config.width, config.height, config.vein_count, margin)
            instances.clear()
            instances[(subj, f)] = inst
        rng = np.random.default_rng([seed, subj, f, k])
        r = config.max_displacement_px * math.sqrt(rng.uniform())
        phi = rng.uniform(0, 2 * math.pi)
        degrees = rng.uniform(-2.0, 2.0)
        img = place_sample(inst, config.width, config.height, r * math.cos(phi), r * math.sin(phi), degrees)
        img = np.clip(img + rng.normal(0.0, config.noise_sigma, img.shape), 0.0, 1.0)
        if out_dir is not None:
            write_png(img, Path(out_dir) / entry.image_path)
        entries.append(entry)
    manifest = Manifest(name, entries)
    if out_dir is not None:
        write_manifest(manifest, Path(out_dir) / "manifest.csv")
    return manifest
