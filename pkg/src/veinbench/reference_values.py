"""Published reference figures for the four public fingervein datasets,
used by ``veinbench reproduce`` to diff a recomputed report.

EER values are percentages; stats are (mu_g, mu_i, sigma_g, sigma_i).
"""

from __future__ import annotations

DATASETS = ("MMCBNU", "PLUS", "UTFVP", "VERA")
ALGORITHMS = ("LCNN", "LBP", "MC", "PC", "SIFT")

EER_PERCENT = {
    ("MMCBNU", "LCNN"): 2.2, ("MMCBNU", "LBP"): 1.3, ("MMCBNU", "MC"): 1.8, ("MMCBNU", "PC"): 1.7, ("MMCBNU", "SIFT"): 2.0,
    ("PLUS", "LCNN"): 4.5, ("PLUS", "LBP"): 3.6, ("PLUS", "MC"): 0.5, ("PLUS", "PC"): 0.2, ("PLUS", "SIFT"): 0.8,
    ("UTFVP", "LCNN"): 7.0, ("UTFVP", "LBP"): 1.5, ("UTFVP", "MC"): 0.2, ("UTFVP", "PC"): 0.4, ("UTFVP", "SIFT"): 1.5,
    ("VERA", "LBP"): 3.2, ("VERA", "MC"): 1.8, ("VERA", "PC"): 2.3, ("VERA", "SIFT"): 2.6,
}

OVERALL_STATS = {
    ("MMCBNU", "LCNN"): (0.72477, 0.26189, 0.12129, 0.07989),
    ("MMCBNU", "LBP"): (0.84812, 0.78781, 0.02009, 0.00805),
    ("MMCBNU", "MC"): (0.27205, 0.12055, 0.04891, 0.01730),
    ("MMCBNU", "PC"): (0.41059, 0.30588, 0.02806, 0.01654),
    ("MMCBNU", "SIFT"): (0.39081, 0.01510, 0.16538, 0.02434),
    ("PLUS", "LCNN"): (0.70367, 0.25433, 0.13798, 0.08999),
    ("PLUS", "LBP"): (0.80302, 0.37204, 0.16154, 0.05899),
    ("PLUS", "MC"): (0.25004, 0.12464, 0.03946, 0.00874),
    ("PLUS", "PC"): (0.41261, 0.30209, 0.03030, 0.01361),
    ("PLUS", "SIFT"): (0.35114, 0.01119, 0.14678, 0.01196),
    ("UTFVP", "LCNN"): (0.69713, 0.32198, 0.11472, 0.10833),
    ("UTFVP", "LBP"): (0.84664, 0.81038, 0.01344, 0.00471),
    ("UTFVP", "MC"): (0.23834, 0.11789, 0.03854, 0.00733),
    ("UTFVP", "PC"): (0.40156, 0.28823, 0.02816, 0.01058),
    ("UTFVP", "SIFT"): (0.31269, 0.00937, 0.15406, 0.01071),
    ("VERA", "LBP"): (0.81296, 0.78861, 0.01101, 0.00417),
    ("VERA", "MC"): (0.24056, 0.11351, 0.04569, 0.00947),
    ("VERA", "PC"): (0.38741, 0.29499, 0.03025, 0.01156),
    ("VERA", "SIFT"): (0.23220, 0.00562, 0.14523, 0.00822),
}

# attribute -> (median_g, median_i, max_g, max_i)
ZSCORE_SUMMARY = {
    "sex": (0.23043, 0.10282, 0.63334, 0.76144),
    "age": (0.09125, 0.08500, 0.29284, 0.31685),
    "finger": (0.07717, 0.09166, 0.26186, 0.44955),
    "hand": (0.06384, 0.09973, 0.22999, 0.29002),
}

STAT_TOLERANCE = 5e-5
EER_TOLERANCE_PP = 0.1


def expected_score_files() -> list[tuple[str, str]]:
    """(dataset, algorithm) pairs that have published figures."""
    return sorted(OVERALL_STATS)
