"""Exception hierarchy shared by the parametrization, plant and CLI layers."""


class FourierControlError(Exception):
    """Base class for all package errors."""


class DomainError(FourierControlError, ValueError):
    """A parameter lies outside its admissible interval."""


class DegenerateShapeError(FourierControlError, ValueError):
    """The signal is (numerically) constant, so its shape is undefined."""


class ConfigError(FourierControlError, ValueError):
    """Malformed or inconsistent experiment configuration."""


class SimulationError(FourierControlError, RuntimeError):
    """Base class for failures raised while integrating the plant."""


class ContactLossError(SimulationError):
    """The normal load between capsule and ground dropped to zero or below."""


class ModelSingularityError(SimulationError):
    """The slip-phase inertia system became singular."""


class StepSizeUnderflowError(SimulationError):
    """The adaptive step size fell below ``h_min`` on a rejected step."""


class EventError(SimulationError):
    """Event localization failed or the event budget was exhausted."""
