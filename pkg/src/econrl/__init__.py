"""Batched real-business-cycle economy simulation with a multi-agent RL stack."""

__version__ = "0.1.0"

from .config import (  # noqa: E402,F401
    ConfigError,
    CurriculumConfig,
    EconomyConfig,
    RunConfig,
    TrainingConfig,
)
from .economy import (  # noqa: E402,F401
    ConsumerAction,
    FirmAction,
    GovernmentAction,
    StepOutcome,
    WorldState,
    initial_state,
    step,
)
