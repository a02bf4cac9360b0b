"""Exception types shared across the pipeline."""


class DarbouxError(Exception):
    """Base class for all package errors."""


class ConfigError(DarbouxError):
    pass


class ExprSyntaxError(ConfigError):
    def __init__(self, message, position):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class UnknownIdentifierError(ConfigError):
    def __init__(self, name, position):
        super().__init__(f"unknown identifier '{name}' at offset {position}")
        self.name = name
        self.position = position


class GridMismatchError(DarbouxError):
    pass


class DegenerateMetricError(DarbouxError):
    def __init__(self, index, location, detail=""):
        msg = f"metric not positive definite at node {index}, y = {location}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.index = index
        self.location = location


class SingularJetSystemError(DarbouxError):
    def __init__(self, degree, residual):
        super().__init__(
            f"degree-{degree} coefficient system is singular "
            f"(line appears characteristic, residual {residual:.3e})"
        )
        self.degree = degree
        self.residual = residual


class UnsupportedTopologyError(DarbouxError):
    pass


class TransversalityError(UnsupportedTopologyError):
    def __init__(self, angle, minimum):
        super().__init__(
            f"curvature zero curves cross at angle {angle:.4f} rad, "
            f"below configured minimum {minimum:.4f}"
        )
        self.angle = angle


class InsufficientVanishingError(DarbouxError):
    pass


class LeviViolationError(DarbouxError):
    pass


class CFLViolationError(DarbouxError):
    pass


class InstabilityError(DarbouxError):
    def __init__(self, layer, growth):
        super().__init__(f"marching unstable at layer {layer} (growth {growth:.3e})")
        self.layer = layer
        self.growth = growth


class SolverBreakdownError(DarbouxError):
    def __init__(self, residual):
        super().__init__(f"linear solver breakdown, residual {residual:.3e}")
        self.residual = residual


class InternalConsistencyError(DarbouxError):
    pass


class PatchFailureError(DarbouxError):
    def __init__(self, curve_id, detail):
        super().__init__(f"patch failure across interface {curve_id}: {detail}")
        self.curve_id = curve_id


class NonFlatError(DarbouxError):
    def __init__(self, defect, tol):
        super().__init__(
            f"development is path dependent: loop defect {defect:.3e} exceeds {tol:.3e}"
        )
        self.defect = defect
