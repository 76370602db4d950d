"""Exception hierarchy.

Every error raised on bad data derives from :class:`VeinbenchError`; the CLI
maps those to exit code 1.
"""


class VeinbenchError(Exception):
    """Base class for data errors."""


class InvalidKernel(VeinbenchError, ValueError):
    pass


# ingest
class ManifestError(VeinbenchError):
    pass


class MissingColumn(ManifestError):
    pass


class DuplicateSampleId(ManifestError):
    def __init__(self, sample_id: str):
        super().__init__(f"duplicate sample_id {sample_id!r}")
        self.sample_id = sample_id


class UnparseableRow(ManifestError):
    def __init__(self, row: int, reason: str):
        super().__init__(f"row {row}: {reason}")
        self.row = row


class UnsupportedFormat(VeinbenchError):
    pass


class UnknownSampleId(VeinbenchError):
    def __init__(self, sample_id: str, row: int | None = None):
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"unknown sample_id {sample_id!r}{where}")
        self.sample_id = sample_id


class NonFiniteScore(VeinbenchError):
    pass


# roi
class FingerNotFound(VeinbenchError):
    pass


class DegenerateRoi(VeinbenchError):
    pass


# extract
class InvalidRoi(VeinbenchError):
    pass


class InvalidBlockGrid(VeinbenchError):
    pass


class FeatureFormatError(VeinbenchError):
    pass


# compare
class DimensionMismatch(VeinbenchError):
    pass


class LayoutMismatch(VeinbenchError):
    pass


# evalstat
class EmptyDistribution(VeinbenchError):
    pass


class DegenerateVariance(VeinbenchError):
    pass


class MissingFeature(VeinbenchError):
    def __init__(self, sample_id: str):
        super().__init__(f"no feature for sample {sample_id!r}")
        self.sample_id = sample_id


class LabelMismatch(VeinbenchError):
    pass


class ConfigError(VeinbenchError):
    pass


class MissingFiles(VeinbenchError):
    def __init__(self, paths):
        self.paths = list(paths)
        super().__init__("missing files: " + ", ".join(str(p) for p in self.paths))
