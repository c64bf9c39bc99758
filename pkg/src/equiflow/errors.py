"""Exception types shared across the package."""


class EquiflowError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(EquiflowError):
    """An input document does not conform to its file format."""


class PartitionError(EquiflowError):
    """A region's demand classes overlap (duplicate class entries for one O-D pair)."""


class DisconnectedDemand(EquiflowError):
    """No origin-to-destination route exists in the allowed arc set."""


class InfeasibleStructure(EquiflowError):
    """The problem cannot be assembled (e.g. a demand with an empty reachable arc set)."""


class ConfigError(EquiflowError):
    """A configuration parameter is out of range or inconsistent."""


class TooLarge(EquiflowError):
    """Instance exceeds the enumeration bounds of the brute-force oracle."""


class ConservationViolation(EquiflowError):
    """Flows handed to the decomposer violate conservation beyond tolerance."""


class SpecError(EquiflowError):
    """A generator specification is invalid."""


class BackendError(EquiflowError):
    """The external solver backend failed or returned garbage."""


class ScenarioFailure(EquiflowError):
    """A scenario run did not reach an optimal solution.

    Carries the solver status and the best-effort constraint-family diagnosis so
    callers can report a structured failure instead of partial metrics.
    """

    def __init__(self, message: str, status: str, diagnosis: str | None = None):
        super().__init__(message)
        self.status = status
        self.diagnosis = diagnosis
