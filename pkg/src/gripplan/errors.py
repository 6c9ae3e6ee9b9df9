"""Exception types shared across the package."""


class GripplanError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(GripplanError):
    """Mesh file is malformed or references out-of-range data."""


class DegenerateMesh(GripplanError):
    """Mesh has no valid triangles left after validation."""


class EmptyRaster(GripplanError):
    """Raster spacing produced zero seed points on the surface."""


class PatchTooSparse(GripplanError):
    """Cup footprint captured fewer samples than needed for a verdict."""


class DegenerateProjection(GripplanError):
    """Gravity projection collapsed the support polygon to a line or point."""


class NoConstellation(GripplanError):
    """Enumeration exhausted without one valid cup constellation."""


class NoCommonConstellation(GripplanError):
    """No constellation gripped every workpiece within tolerances.

    Carries the failure ``CommonResult`` (diagnostics, longest matched
    prefix) as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class MixedArity(GripplanError):
    """Workspace planning received constellations of differing cup counts."""


class UnknownFormat(GripplanError):
    """Requested export format is not supported."""


class ParamError(GripplanError, ValueError):
    """Analysis parameter set failed validation."""
