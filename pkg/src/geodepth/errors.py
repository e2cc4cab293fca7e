"""Exception types shared across the package."""


class GeodepthError(Exception):
    """Base class for all package errors."""


class ValidationError(GeodepthError):
    """Invalid user input: bad config values, malformed files, bad ranges."""


class GeotagIntegrityError(GeodepthError):
    """An alpha plane does not carry a well-formed location encoding."""


class DatasetError(GeodepthError):
    """Dataset on disk is missing, corrupt, or inconsistent with its manifest."""


class TrainingDiverged(GeodepthError):
    """Training aborted on a non-finite loss; carries the offending report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
