import hashlib
import warnings

import numpy as np
import pytest
from PIL import Image

from veinbench.errors import (
    DuplicateSampleId,
    MissingColumn,
    NonFiniteScore,
    UnknownSampleId,
    UnparseableRow,
    UnsupportedFormat,
)
from veinbench.ingest import (
    DataWarning,
    Manifest,
    PhantomConfig,
    generate_phantom_dataset,
    import_external_scores,
    load_manifest,
    load_sample,
    read_image,
    write_manifest,
)

from conftest import make_entry

HEADER = "sample_id,subject_id,sex,age,hand,finger,sample_index,image_path\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_two_row_manifest(tmp_path):
    p = write(tmp_path, "m.csv", HEADER + "a,s1,M,30,L,index,1,a.png\nb,s1,F,NA,R,ring,2,b.png\n")
    m = load_manifest(p)
    assert len(m) == 2
    assert m["a"].sex == "male" and m["a"].age == 30 and m["a"].hand == "left"
    assert m["b"].age is None and m["b"].finger == "ring"
    assert m.dataset_name == "m"


def test_comment_lines_and_dataset_name(tmp_path):
    p = write(tmp_path, "m.csv", "# dataset: DEMO\n" + HEADER + "# a note\na,s1,NA,NA,NA,NA,1,a.png\n")
    m = load_manifest(p)
    assert m.dataset_name == "DEMO"
    assert m["a"].sex == "unknown" and m["a"].instance == ("s1", "unknown", "unknown")


def test_duplicate_id_is_named(tmp_path):
    p = write(tmp_path, "m.csv", HEADER + "a,s1,M,30,L,index,1,a.png\na,s1,M,30,L,index,2,b.png\n")
    with pytest.raises(DuplicateSampleId) as exc:
        load_manifest(p)
    assert exc.value.sample_id == "a"


def test_missing_column(tmp_path):
    p = write(tmp_path, "m.csv", "sample_id,subject_id\na,s1\n")
    with pytest.raises(MissingColumn):
        load_manifest(p)


@pytest.mark.parametrize("row", ["a,s1,X,30,L,index,1,a.png", "a,s1,M,-3,L,index,1,a.png", "a,s1,M,30,L,thumb,1,a.png", "a,s1,M,30,L,index,0,a.png"])
def test_unparseable_row_reports_row_number(tmp_path, row):
    p = write(tmp_path, "m.csv", HEADER + "b,s1,M,30,L,index,1,b.png\n" + row + "\n")
    with pytest.raises(UnparseableRow) as exc:
        load_manifest(p)
    assert exc.value.row == 3


def test_manifest_round_trip(tmp_path):
    m = Manifest("rt", [make_entry("a", "s1"), make_entry("b", "s2", "female", None, "right", "middle", 2)])
    write_manifest(m, tmp_path / "m.csv")
    back = load_manifest(tmp_path / "m.csv")
    assert back.dataset_name == "rt"
    assert back.entries == m.entries


def test_pgm_division_by_255(tmp_path):
    p = tmp_path / "x.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    img = read_image(p)
    assert np.allclose(img, [[0, 1], [128 / 255, 64 / 255]])
    assert img[1, 0] == pytest.approx(0.50196, abs=1e-5)


def test_png_and_unsupported_depth(tmp_path):
    arr = np.array([[0, 255], [128, 64]], dtype=np.uint8)
    Image.fromarray(arr).save(tmp_path / "ok.png")
    assert np.allclose(read_image(tmp_path / "ok.png"), arr / 255.0)
    Image.fromarray(arr.astype(np.uint16) * 256).save(tmp_path / "deep.png")
    with pytest.raises(UnsupportedFormat):
        read_image(tmp_path / "deep.png")
    Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(tmp_path / "rgb.png")
    with pytest.raises(UnsupportedFormat):
        read_image(tmp_path / "rgb.png")


def test_missing_image(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_sample(make_entry("a", "s1"), tmp_path)


def score_file(tmp_path, rows, header="probe_id,reference_id,score"):
    return write(tmp_path, "s.csv", header + "\n" + "\n".join(rows) + "\n")


def test_import_scores(tmp_path, tiny_manifest):
    recs = import_external_scores(score_file(tmp_path, ["a1,a2,0.9", "a1,b1,0.1", "b1,b2,0.8"]), tiny_manifest)
    assert len(recs) == 3
    assert {r.algorithm for r in recs} == {"external"}
    assert recs[0].score == 0.9


def test_import_scores_algorithm_column(tmp_path, tiny_manifest):
    recs = import_external_scores(
        score_file(tmp_path, ["a1,a2,0.9,MC", "a1,a2,0.4,PC"], "probe_id,reference_id,score,algorithm"), tiny_manifest
    )
    assert [r.algorithm for r in recs] == ["MC", "PC"]


def test_unknown_id(tmp_path, tiny_manifest):
    with pytest.raises(UnknownSampleId):
        import_external_scores(score_file(tmp_path, ["a1,zz,0.5"]), tiny_manifest)


def test_non_finite_score(tmp_path, tiny_manifest):
    with pytest.raises(NonFiniteScore):
        import_external_scores(score_file(tmp_path, ["a1,a2,nan"]), tiny_manifest)


def test_self_pair_rejected(tmp_path, tiny_manifest):
    with pytest.raises(UnparseableRow):
        import_external_scores(score_file(tmp_path, ["a1,a1,0.5"]), tiny_manifest)


def test_unordered_duplicates_collapse(tmp_path, tiny_manifest):
    with pytest.warns(DataWarning):
        recs = import_external_scores(score_file(tmp_path, ["a1,b1,0.5", "b1,a1,0.7"]), tiny_manifest)
    assert len(recs) == 1 and recs[0].score == 0.5


def digest(folder):
    h = hashlib.sha256()
    for p in sorted(folder.rglob("*")):
        if p.is_file():
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_phantom_bit_reproducible(tmp_path):
    cfg = PhantomConfig(subjects=2, fingers_per_subject=1, samples_per_finger=2, vein_count=5, noise_sigma=0.01, max_displacement_px=4)
    generate_phantom_dataset(cfg, 7, tmp_path / "a")
    generate_phantom_dataset(cfg, 7, tmp_path / "b")
    generate_phantom_dataset(cfg, 8, tmp_path / "c")
    assert digest(tmp_path / "a") == digest(tmp_path / "b")
    img_a = read_image(tmp_path / "a" / "images" / "s000_Lindex_01.png")
    img_c = read_image(tmp_path / "c" / "images" / "s000_Lindex_01.png")
    assert not np.array_equal(img_a, img_c)


def test_phantom_counts_and_groups():
    m = generate_phantom_dataset(PhantomConfig(), seed=1)
    assert len(m) == 160
    assert len(m.instances()) == 40
    assert {e.sex for e in m.entries} == {"male", "female"}
    assert {e.hand for e in m.entries} == {"left", "right"}
    assert {e.finger for e in m.entries} == {"index", "middle", "ring"}
    assert len({e.age for e in m.entries}) == 4
    two = generate_phantom_dataset(PhantomConfig(subjects=3, samples_per_finger=2), seed=1)
    assert all(len(v) == 2 for v in two.instances().values())


def test_phantom_images_look_like_fingers(small_phantom):
    manifest, root = small_phantom
    img = load_sample(manifest.entries[0], root)
    assert img.shape == (120, 240)
    assert img[60, 120] > img[2, 120] + 0.3  # bright finger over dark background


def test_phantom_config_validation():
    with pytest.raises(ValueError):
        PhantomConfig(subjects=0)
    with pytest.raises(ValueError):
        PhantomConfig(fingers_per_subject=7)
