"""Exception hierarchy shared by the solver modules and the CLI."""


class CrowdCtlError(Exception):
    """Base class for all errors raised by crowdctl."""


class IntegrationDiverged(CrowdCtlError):
    """A trajectory became non-finite or left the working box."""


class SizeMismatch(CrowdCtlError, ValueError):
    """Two configurations (or time lists) have different numbers of agents."""


class TooLargeN(CrowdCtlError, ValueError):
    """Exhaustive enumeration was requested for too many agents."""


class WaypointNotFound(CrowdCtlError):
    """No entry/exit instant landing in the open control region was found."""


class InfeasibleAssignment(CrowdCtlError):
    """Every permutation uses at least one infinite cost entry."""


class RadiiDegenerate(CrowdCtlError):
    """Tube radii collapsed below the usable threshold."""


class PerturbationFailed(CrowdCtlError):
    """Could not build an approximate target within the requested epsilon."""


class HorizonTooShort(CrowdCtlError, ValueError):
    """The requested horizon does not exceed the infimum time."""


class ScenarioError(CrowdCtlError, ValueError):
    """A scenario file failed to parse or validate."""


class InfeasibleScenario(CrowdCtlError):
    """The geometric feasibility condition fails for at least one agent."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
