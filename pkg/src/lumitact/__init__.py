"""Forward-design simulation toolkit for fluorescently illuminated,
camera-based tactile sensor fingers."""

__version__ = "0.1.0"

from .errors import (
    DegenerateInput,
    GridMismatch,
    ImageNaN,
    IndenterSwallowsMesh,
    NonManifoldInput,
    NonPositiveStretch,
    OrientationConflict,
    PatchDoesNotFit,
    SceneInvalid,
    SimulationError,
    UnknownPreset,
)

__all__ = [
    "__version__",
    "SimulationError",
    "GridMismatch",
    "DegenerateInput",
    "UnknownPreset",
    "PatchDoesNotFit",
    "NonManifoldInput",
    "OrientationConflict",
    "NonPositiveStretch",
    "IndenterSwallowsMesh",
    "SceneInvalid",
    "ImageNaN",
]
