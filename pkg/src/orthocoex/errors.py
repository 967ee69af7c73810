"""Exception hierarchy for orthocoex.

The command-line runner maps each class to a process exit code:

    ConfigError               2   unparseable or invalid scenario / sweep
    DomainError, SolverError  3   analysis cannot be carried out
    SimulationInvariantError  4   a finished run breaks conservation or orthogonality
"""


class CoexError(Exception):
    """Base class for all orthocoex errors."""

    exit_code = 1


class ConfigError(CoexError):
    """A scenario, sweep or command-line value is malformed or inconsistent."""

    exit_code = 2


class DomainError(CoexError, ValueError):
    """An analytical operation was called outside its numeric domain."""

    exit_code = 3


class SolverError(CoexError):
    """An iterative solver did not converge."""

    exit_code = 3

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class SimulationInvariantError(CoexError):
    exit_code = 4


class InsufficientSamplesError(CoexError, ValueError):
    """Too few samples for a meaningful statistical test."""
