"""Exception taxonomy shared by all modules.

Two families matter to the CLI: ``InputError`` maps to exit code 2,
``RuntimeFailure`` to exit code 3. Every error carries a stable ``code``
string (the class name) for machine-readable reporting.
"""


class SplatError(Exception):
    """Base class for all toolkit errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class InputError(SplatError):
    """Bad or missing input data (CLI exit code 2)."""


class RuntimeFailure(SplatError):
    """Failure while computing on valid inputs (CLI exit code 3)."""


# --- ingest / parsing ---

class MalformedFile(InputError):
    pass


class UnsupportedCameraModel(InputError):
    pass


class DuplicateCameraId(InputError):
    pass


class NonUnitQuaternion(InputError):
    pass


class MissingCamerasFile(InputError):
    pass


class MissingImagesFile(InputError):
    pass


class MissingPointsFile(InputError):
    pass


class ZeroDimension(InputError):
    pass


class TooFewViews(InputError):
    pass


# --- scene / metrics ---

class TooFewPoints(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class TooSmall(InputError):
    pass


class EmptyTestSet(InputError):
    pass


class SingularCovariance(RuntimeFailure):
    pass


# --- training ---

class NonFiniteGradient(RuntimeFailure):
    pass


class EmptyCloud(RuntimeFailure):
    pass
