import numpy as np
import pytest

from veinbench.ingest import Manifest, PhantomConfig, SampleMetadata, generate_phantom_dataset
from veinbench.roi import RoiImage


def make_entry(sid, subject, sex="male", age=30, hand="left", finger="index", k=1):
    return SampleMetadata(sid, subject, sex, age, hand, finger, k, f"{sid}.png")


def valley_image(h=64, w=96, row=32.0, width=3.0, depth=0.4, base=0.7):
    """Horizontal Gaussian valley of the given standard deviation."""
    y = np.arange(h, dtype=np.float64)[:, None]
    return np.repeat(base - depth * np.exp(-((y - row) ** 2) / (2 * width**2)), w, axis=1)


def full_roi(img, sid="x"):
    return RoiImage(img, np.ones(img.shape, dtype=bool), sid, 0.0, (0, 0, img.shape[1], img.shape[0]))


@pytest.fixture(scope="session")
def small_phantom(tmp_path_factory):
    """6 subjects x 2 fingers x 3 samples written to disk."""
    out = tmp_path_factory.mktemp("phantom")
    cfg = PhantomConfig(subjects=6, fingers_per_subject=2, samples_per_finger=3)
    manifest = generate_phantom_dataset(cfg, seed=11, out_dir=out)
    return manifest, out


@pytest.fixture
def tiny_manifest():
    return Manifest(
        "tiny",
        [
            make_entry("a1", "s1", "male", 25, k=1),
            make_entry("a2", "s1", "male", 25, k=2),
            make_entry("b1", "s2", "female", 50, k=1),
            make_entry("b2", "s2", "female", 50, k=2),
        ],
    )


# acceptance criteria outcomes, printed once at the end of the run
ACCEPTANCE_RESULTS: dict[int, tuple[str, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        status, title, detail = ACCEPTANCE_RESULTS[n]
        line = f"criterion {n}: {status} - {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
