"""Monte-Carlo toolkit for the 1-D stochastic wave equation driven by pure-jump Lévy noise."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigInvalid,
    DivergentMoment,
    EmptyMeasure,
    InsufficientSamples,
    InvalidMeasure,
    LevyWaveError,
    NonCenteredMeasure,
    NonContractionWarning,
    NonConvergedWarning,
    StillInfiniteActivity,
    TrivialNonlinearityWarning,
    WindowTooSmall,
)
from .kernel import green, phi, phi_mass, phi_sq_mass  # noqa: E402
from .levy_measure import LevyMeasureSpec, moment, sample_jump, truncate  # noqa: E402
from .skeleton import JumpSkeleton, SpaceTimeWindow, sample_skeleton  # noqa: E402
from .solver import Nonlinearity, eval_at, picard_solve, solve_on_skeleton  # noqa: E402

__all__ = [
    "ConfigInvalid", "DivergentMoment", "EmptyMeasure", "InsufficientSamples",
    "InvalidMeasure", "LevyWaveError", "NonCenteredMeasure", "NonContractionWarning",
    "NonConvergedWarning", "StillInfiniteActivity", "TrivialNonlinearityWarning",
    "WindowTooSmall", "green", "phi", "phi_mass", "phi_sq_mass", "LevyMeasureSpec",
    "moment", "sample_jump", "truncate", "JumpSkeleton", "SpaceTimeWindow",
    "sample_skeleton", "Nonlinearity", "eval_at", "picard_solve", "solve_on_skeleton",
]
