class MsmuError(Exception):
    """Base class for all errors raised by the package."""


class ValidationError(MsmuError, ValueError):
    """A value violates a type invariant (bad pose, bad intrinsics, ...)."""


class SceneLoadError(MsmuError):
    """A scene directory is missing a file or is internally inconsistent."""


class ContractError(MsmuError, ValueError):
    """A caller broke an operation's precondition."""


class NotVisibleError(MsmuError, LookupError):
    """The requested instance has no pixels in the view."""


class CalibrationError(ContractError):
    """Calibration was called with too few constraints or a bad guess."""


class ClientError(MsmuError):
    """A remote model endpoint failed or returned something unusable."""


class ClientOffline(ClientError):
    """The client is in offline mode and refused to touch the network."""
