"""Exception hierarchy shared across the toolkit."""


class SimulationError(Exception):
    """Base class for all toolkit-specific failures."""


class GridMismatch(SimulationError):
    """Two spectra do not share the same wavelength grid."""


class DegenerateInput(SimulationError):
    """Input data carries no usable signal (e.g. an all-zero spectrum)."""


class UnknownPreset(SimulationError):
    """Requested a preset name that does not exist."""


class PatchDoesNotFit(SimulationError):
    """Requested pad patch exceeds the available curved surface."""


class NonManifoldInput(SimulationError):
    """A hex-mesh face is shared by more than two elements."""


class OrientationConflict(SimulationError):
    """Surface orientation constraints cannot be satisfied simultaneously."""


class NonPositiveStretch(SimulationError):
    """Principal stretches must be strictly positive."""


class IndenterSwallowsMesh(SimulationError):
    """More than half of the surface penetrates the indenter."""


class SceneInvalid(SimulationError):
    """Scene violates one of its structural invariants."""


class ImageNaN(SimulationError):
    """Renderer produced a non-finite pixel value."""
