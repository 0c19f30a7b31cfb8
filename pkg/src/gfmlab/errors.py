"""Exception types shared across the package."""


class GfmlabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(GfmlabError):
    """Malformed or inconsistent topology/scenario/gains input."""


class TopologyError(ConfigError):
    """Graph-level inconsistency: disconnected network, dangling line, bad bus ref."""


class DimensionError(GfmlabError):
    """An array argument has the wrong shape for the structured algebra."""


class BalanceViolation(GfmlabError):
    """An interconnection no longer conserves power (skew-symmetry broken)."""


class VoltageCollapse(GfmlabError):
    """A bus with constant-power load dropped below the collapse threshold.

    Attributes
    ----------
    bus : label of the collapsing bus (when known)
    t : simulation time of the event (when known)
    """

    def __init__(self, msg, bus=None, t=None):
        super().__init__(msg)
        self.bus = bus
        self.t = t


class DivergenceDetected(GfmlabError):
    """The simulated state left the physically meaningful region (||x|| > 1e3 pu)."""

    def __init__(self, msg, t=None):
        super().__init__(msg)
        self.t = t


class StiffnessFailure(GfmlabError):
    """Step-size control underflowed the hard floor; the system is too stiff."""

    def __init__(self, msg, t=None, dt=None):
        super().__init__(msg)
        self.t = t
        self.dt = dt


class ConditionFailure(GfmlabError):
    """A matrix pre-condition (e.g. negative definiteness) failed.

    Carries the offending eigenvalue for diagnostics.
    """

    def __init__(self, msg, eigenvalue=None):
        super().__init__(msg)
        self.eigenvalue = eigenvalue


class SolverFailure(GfmlabError):
    """The SDP solver returned an unusable status."""

    def __init__(self, msg, status=None, residuals=None):
        super().__init__(msg)
        self.status = status
        self.residuals = residuals


class NotSettled(GfmlabError):
    """Steady-state metrics requested on a window that has not settled."""


class OrbitReferenceError(GfmlabError):
    """Orbit reference file is missing, stale, or shaped wrong for the system."""
