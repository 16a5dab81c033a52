"""Optimal design of sequential real-time communication systems.

A plant is observed through a sensor, encoded into a noisy channel and
controlled by a receiver that only sees channel outputs. Encoders, memory
updates and controllers are optimized jointly by dynamic programming over
the designer's information states.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BudgetExceeded,
    InvariantViolation,
    MissingControllerEntry,
    ModelParseError,
    ModelValidationError,
    TeamDPError,
    ZeroProbabilityOutput,
)
from .model import ModelSpec, build_model, load_spec, save_spec, validate  # noqa: E402
from .solver_finite import Design, evaluate_design, solve_finite  # noqa: E402
from .solver_infinite import (  # noqa: E402
    DiscountConfig,
    StationaryDesign,
    eval_average_stationary,
    eval_discounted_stationary,
    search_stationary_discounted,
    solve_discounted,
)
from .sim import SimConfig, simulate  # noqa: E402

__all__ = [
    "BudgetExceeded", "InvariantViolation", "MissingControllerEntry", "ModelParseError",
    "ModelValidationError", "TeamDPError", "ZeroProbabilityOutput", "ModelSpec", "build_model",
    "load_spec", "save_spec", "validate", "Design", "evaluate_design", "solve_finite",
    "DiscountConfig", "StationaryDesign", "eval_average_stationary", "eval_discounted_stationary",
    "search_stationary_discounted", "solve_discounted", "SimConfig", "simulate",
]
