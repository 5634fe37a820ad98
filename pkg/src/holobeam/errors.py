"""Exception types raised across the package."""


class HolobeamError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(HolobeamError, ValueError):
    pass


class SingularGeometryError(HolobeamError):
    """Observation point too close to a source point."""


class DegenerateChannelError(HolobeamError):
    """Channel (or field set) is numerically zero."""


class InfeasibleRequirementError(HolobeamError):
    """Requested harvested power cannot be reached."""


class ResolutionError(HolobeamError):
    """Quadrature grid too coarse for the requested basis or antenna layout."""


class ConfigError(HolobeamError, ValueError):
    pass
