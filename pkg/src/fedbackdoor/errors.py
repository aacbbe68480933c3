"""Exception types shared across the simulator.

Everything derives from ValueError so callers that only care about
"bad input" can catch broadly, while tests can pin the precise failure.
"""


class SimulationError(ValueError):
    """Base class for all simulator errors."""


class SpecError(SimulationError):
    """Network architecture is internally inconsistent (layer wiring)."""


class DimensionError(SimulationError):
    """Runtime shape or parameter-length mismatch."""


class InputError(SimulationError):
    """Operation input violates a precondition (empty set, bad label, ...)."""


class DataFormatError(SimulationError):
    """Dataset file is not valid IDX (bad magic, truncation, count mismatch)."""


class GeometryError(SimulationError):
    """Trigger rectangle does not fit inside the image."""


class ScheduleError(SimulationError):
    """Attack schedule is inconsistent with the federation config."""


class ConfigError(SimulationError):
    """Experiment config failed validation. `problems` lists every violation."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
