"""Metric spatial VQA corpus forge.

Turns metrically annotated indoor scans into templated spatial QA pairs with
exact numeric ground truth, and ships the supporting kernels: depth
positional encoding, segment-length intrinsics calibration, and the
threshold-based scoring harness.
"""

__version__ = "0.1.0"
TOOL_NAME = "msmu-forge"

from .errors import (  # noqa: E402
    CalibrationError,
    ClientError,
    ClientOffline,
    ContractError,
    MsmuError,
    NotVisibleError,
    SceneLoadError,
    ValidationError,
)

__all__ = [
    "__version__",
    "TOOL_NAME",
    "MsmuError",
    "SceneLoadError",
    "ValidationError",
    "ContractError",
    "NotVisibleError",
    "CalibrationError",
    "ClientError",
    "ClientOffline",
]
