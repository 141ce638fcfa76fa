"""Exception types shared across the package."""


class TextentError(Exception):
    """Base class for all errors raised by this package."""


class DataError(TextentError):
    """Input data violates a documented invariant (not a file-format issue)."""


class MalformedFile(TextentError):
    """A file could not be parsed in its declared format."""

    def __init__(self, path, detail, line=None):
        self.path = str(path)
        self.detail = detail
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {detail}")


class EmptyCorpus(TextentError):
    """No documents (or tokens) survived filtering."""


class EmptyVocabulary(TextentError):
    """A sampling table or vocabulary was built from zero tokens."""


class EmptyDataset(TextentError):
    """Training was requested on a dataset with no documents."""


class EmptyTrainSet(TextentError):
    """A classifier was asked to train on zero examples."""


class UnknownTarget(TextentError):
    """A document's target entity is not in the target-entity vocabulary."""


class MissingVector(TextentError):
    """An entity required for training or evaluation has no vector."""


class ShapeMismatch(TextentError):
    """Array shapes are inconsistent with the model configuration."""


class LengthMismatch(TextentError):
    """Two parallel sequences have different lengths."""


class ZeroQuery(TextentError):
    """A similarity query was issued with a zero-norm vector."""
