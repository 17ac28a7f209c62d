"""Exception types shared across the package."""


class DdosdetError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(DdosdetError):
    """A file header, column set, or record layout does not match expectations."""


class EmptyDatasetError(DdosdetError):
    """An operation needs at least one sample and got none."""


class DegenerateSplitError(DdosdetError):
    """A requested train/validation split would leave one side empty."""


class HoldoutViolationError(DdosdetError):
    """A training set contains samples of an attack type declared held out."""


class KeyMismatchError(DdosdetError):
    """A packet was applied to a flow state with a different canonical key."""


class TimestampRegressionError(DdosdetError):
    """A packet timestamp moved backwards within one flow or stream."""


class InvalidConfigError(DdosdetError):
    """A configuration value is outside its documented range."""


class ShapeMismatchError(DdosdetError):
    """Array dimensions do not agree with the model or with each other."""


class StaleCacheError(DdosdetError):
    """A backward pass was given a cache not produced by a matching training forward."""


class LengthMismatchError(DdosdetError):
    """Paired sequences (predictions vs truth) differ in length or are empty."""


class CorruptFileError(DdosdetError):
    """A model, scaler, or manifest file is truncated or malformed."""


class VersionMismatchError(CorruptFileError):
    """A persisted file carries an unsupported format version tag."""


class MissingClassError(DdosdetError):
    """A classifier fit requires samples from every class and one is absent."""
