"""Exception and warning types raised across the package."""


class LevyWaveError(Exception):
    """Base class for all package errors."""


class InvalidMeasure(LevyWaveError, ValueError):
    pass


class DivergentMoment(InvalidMeasure):
    """The requested absolute moment of the jump measure is infinite."""


class StillInfiniteActivity(InvalidMeasure):
    """Truncation did not make the total jump activity finite."""


class EmptyMeasure(InvalidMeasure):
    """The measure has no mass left (m_2 = 0)."""


class NonCenteredMeasure(LevyWaveError, ValueError):
    """The exact jump solver needs a measure with zero mean jump drift."""


class WindowTooSmall(LevyWaveError, ValueError):
    """A backward light cone leaves the sampled space-time window."""


class InsufficientSamples(LevyWaveError, ValueError):
    pass


class ConfigInvalid(LevyWaveError, ValueError):
    """Experiment configuration failed validation.

    ``errors`` maps dotted field paths to messages.
    """

    def __init__(self, errors):
        self.errors = dict(errors)
        lines = [f"{k}: {v}" for k, v in self.errors.items()]
        super().__init__("invalid config:\n  " + "\n  ".join(lines))


class NonContractionWarning(RuntimeWarning):
    pass


class NonConvergedWarning(RuntimeWarning):
    pass


class TrivialNonlinearityWarning(UserWarning):
    """sigma(1) == 0, so u == 1 is the unique solution."""
