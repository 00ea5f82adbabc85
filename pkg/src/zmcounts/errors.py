"""Exception types shared across the package."""


class ZmcountsError(ValueError):
    """Base class for model and estimation errors."""


class InvalidSpecError(ZmcountsError):
    """Raised when a model or intensity specification violates its invariants."""


class InfeasibleOmegaError(ZmcountsError):
    """Raised when the zero-modification parameter violates its lambda-dependent bound.

    Attributes
    ----------
    omega : float
        The offending value.
    lower : float
        The violated lower bound -P0/(1-P0) at the offending intensity.
    lam : float
        The intensity at which the bound was evaluated.
    index : int or None
        Position in the series where the violation occurred, if applicable.
    """

    def __init__(self, omega, lower, lam, index=None):
        self.omega = float(omega)
        self.lower = float(lower)
        self.lam = float(lam)
        self.index = index
        where = f" at t={index}" if index is not None else ""
        super().__init__(
            f"omega={omega:.6g} outside feasible range [{lower:.6g}, 1]{where} "
            f"(lambda={lam:.6g})"
        )


class InfeasibleInitError(ZmcountsError):
    """Raised when a moment initializer produces parameters outside the feasible region."""


class EstimationError(ZmcountsError):
    """Raised on unrecoverable numerical failure inside the estimation loop."""
