from enum import Enum


class Backend(Enum):
    """Derivative backends for the periodic grid operators."""
    SPECTRAL = "spectral"
    FD2 = "fd2"

    def __str__(self) -> str:
        return self.value


class OptimizerMethod(Enum):
    """Ascent methods for the dual functional."""
    LBFGS = "lbfgs"
    NEWTON = "newton"

    def __str__(self) -> str:
        return self.value


class SolveStatus(Enum):
    """ENUMS for the termination status in SolveReport"""
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    STAGNATION = "stagnation"

    def __str__(self) -> str:
        return self.value
