"""Exception hierarchy shared by all mgstab modules."""


class MgstabError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MgstabError, ValueError):
    """Invalid or inconsistent network description."""


class DegenerateLoadError(ConfigError):
    """Load rating with zero apparent power."""


class DegenerateNetworkError(MgstabError):
    """Bus relation 1 + Z_L * sum(Y_i) is singular."""


class SolverError(MgstabError):
    """Newton iteration failed to reach the residual tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegenerateEquilibriumError(MgstabError):
    """Equilibrium with zero line current or zero bus voltage.

    The line coefficients divide by the equilibrium current, so such points
    cannot be linearized in polar current coordinates.
    """


class DegenerateLinearizationError(MgstabError):
    """Singular 2x2 pivot in the load elimination."""


class NumericalDifferentiationError(MgstabError):
    """Finite-difference step produced non-finite values."""


class EigenSolverError(MgstabError):
    """Eigen-decomposition failed or missed its residual contract."""


class ModalDecompositionError(MgstabError):
    """Eigenvector matrix too ill-conditioned for modal superposition."""


class SingularityError(MgstabError):
    """Line current dropped to the polar-coordinate singularity."""

    def __init__(self, message, time=None, dg=None):
        super().__init__(message)
        self.time = time
        self.dg = dg


class BracketingError(MgstabError):
    """Boundary search endpoints do not bracket a stability transition."""
