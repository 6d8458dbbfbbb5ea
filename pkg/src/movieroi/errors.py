"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: input/schema problems exit
with 2, training degeneracies with 3, evaluation degeneracies with 4.
"""


class MovieRoiError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(MovieRoiError):
    """Malformed input: bad CSV header, unparseable cell, bad config."""


class TrainingError(MovieRoiError):
    """Training cannot proceed, e.g. single-class labels."""


class EvaluationError(MovieRoiError):
    """Evaluation cannot proceed, e.g. single-class test set."""


class NotFittedError(MovieRoiError):
    """A transform was requested before the component was fitted."""


class BundleError(MovieRoiError):
    """Base class for model-bundle serialization problems."""


class CorruptBundleError(BundleError):
    """Bundle file is truncated or fails a checksum."""


class UnsupportedVersionError(BundleError):
    """Bundle was written with a format version this build cannot read."""
