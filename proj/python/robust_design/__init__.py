"""Minimax robust experimental designs under MCAR missingness."""

from ._core import (
    ConfigError,
    InfeasibleProblem,
    InvalidArgument,
    SingularInformation,
    __version__,
    apportion,
    evaluate,
    expected_mmpe_max,
    run_cli,
    simulate,
    solve,
    taylor_loss,
    worst_case,
)

__all__ = [
    "ConfigError",
    "InfeasibleProblem",
    "InvalidArgument",
    "SingularInformation",
    "__version__",
    "apportion",
    "evaluate",
    "expected_mmpe_max",
    "run_cli",
    "simulate",
    "solve",
    "taylor_loss",
    "worst_case",
]
