"""Exception hierarchy shared by every module of the package."""


class FrameFieldError(Exception):
    """Base class for all errors raised by framefield."""


class InputError(FrameFieldError, ValueError):
    """Bad user input: shapes, files, flags."""


class NumericalError(FrameFieldError, ArithmeticError):
    """A numerical routine failed to produce a usable answer."""


class NotARotation(InputError):
    pass


class NotUnit(InputError):
    pass


class NotOnVariety(InputError):
    pass


class NotOdeco(InputError):
    pass


class NotTangent(InputError):
    pass


class AxesNotOrthonormal(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = path


class EmptyMesh(InputError):
    pass


class DegenerateTet(NumericalError):
    def __init__(self, message, tet_index=None):
        super().__init__(message)
        self.tet_index = tet_index


class DegenerateSampling(NumericalError):
    pass


class DegenerateQuery(NumericalError):
    pass


class SingularPoint(NumericalError):
    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class NoConvergence(NumericalError):
    pass


class SolverFailure(NumericalError):
    pass


class LinearSolveFailure(NumericalError):
    pass


class LineFailure(NumericalError):
    pass


class ZeroNormal(NumericalError):
    pass


class NonManifoldBoundary(UserWarning):
    """Boundary edge shared by other than two boundary triangles."""
