"""Exception hierarchy.

Every failure raised by the library derives from :class:`MocapError` and
carries a stable ``code`` string so command-line callers can grep for it.
"""

from __future__ import annotations


class MocapError(Exception):
    code = "E_MOCAP"


class InvalidInput(MocapError, ValueError):
    code = "E_INVALID_INPUT"


# geometry
class PointBehindCamera(MocapError):
    code = "E_POINT_BEHIND_CAMERA"


# calibration
class DegenerateConfiguration(MocapError):
    code = "E_DEGENERATE_CONFIGURATION"


class InsufficientViews(MocapError):
    code = "E_INSUFFICIENT_VIEWS"


class IllConditioned(MocapError):
    code = "E_ILL_CONDITIONED"


class DisconnectedRig(MocapError):
    code = "E_DISCONNECTED_RIG"

    def __init__(self, unreachable):
        self.unreachable = sorted(unreachable)
        super().__init__(f"cameras not connected to the reference camera: {', '.join(map(str, self.unreachable))}")


class NonConvergence(MocapError):
    """LM hit its iteration budget.

    The best calibration found so far is kept on ``result`` together with the
    diagnostics a caller needs to decide whether to use it anyway.
    """

    code = "E_NON_CONVERGENCE"

    def __init__(self, message, *, result=None, gradient_norm=None, damping=None, log=None):
        super().__init__(message)
        self.result = result
        self.gradient_norm = gradient_norm
        self.damping = damping
        self.log = log


class NumericalFailure(MocapError):
    code = "E_NUMERICAL_FAILURE"


# fusion
class DegenerateGeometry(MocapError):
    code = "E_DEGENERATE_GEOMETRY"


class FrameMismatch(MocapError):
    code = "E_FRAME_MISMATCH"


class UnknownCamera(MocapError, KeyError):
    code = "E_UNKNOWN_CAMERA"

    def __str__(self):
        return str(self.args[0]) if self.args else ""


# rendering
class InvalidBounds(MocapError, ValueError):
    code = "E_INVALID_BOUNDS"


# motion analysis
class ZeroLengthBone(MocapError):
    code = "E_ZERO_LENGTH_BONE"


class TopologyMismatch(MocapError):
    code = "E_TOPOLOGY_MISMATCH"


class ModelMismatch(MocapError):
    code = "E_MODEL_MISMATCH"


class DegenerateAlignment(MocapError):
    code = "E_DEGENERATE_ALIGNMENT"


# synthesis
class InvalidSpec(MocapError, ValueError):
    code = "E_INVALID_SPEC"


# file formats
class ParseError(MocapError, ValueError):
    code = "E_PARSE"

    def __init__(self, message, line=None, column=None, path=None):
        self.line = line
        self.column = column
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = (":".join(where) + ": ") if where else ""
        super().__init__(prefix + message)


class VersionMismatch(ParseError):
    code = "E_VERSION_MISMATCH"


class NotADataset(MocapError):
    code = "E_NOT_A_DATASET"


class NotADatasetWarning(UserWarning):
    pass
