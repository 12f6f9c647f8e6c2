"""Pydantic schemas for diagnostics written to CSV and logs."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field

from ..enums import SolveStatus


class ConservationReport(BaseModel):
    """Conserved-quantity diagnostics of one primal state."""

    time: float = 0.0
    energy: float
    helicity_per_row: Optional[list[float]] = Field(None, min_length=3, max_length=3)
    helicity_total: Optional[float] = None
    cross_helicity_per_row: list[float] = Field(..., min_length=3, max_length=3)
    div_v_norm: float = Field(..., ge=0.0)
    div_alpha_norm: float = Field(..., ge=0.0)

    @staticmethod
    def csv_header() -> list[str]:
        return [
            "time", "energy",
            "helicity_1", "helicity_2", "helicity_3", "helicity_total",
            "cross_helicity_1", "cross_helicity_2", "cross_helicity_3",
            "div_v_norm", "div_alpha_norm",
        ]

    def csv_row(self) -> list[Any]:
        helicity = self.helicity_per_row or [None, None, None]
        return [
            self.time, self.energy,
            *helicity, self.helicity_total,
            *self.cross_helicity_per_row,
            self.div_v_norm, self.div_alpha_norm,
        ]


class ResidualNorms(BaseModel):
    """Max-norms of the ideal FDM equations over a sampled trajectory."""

    momentum: float = Field(..., ge=0.0)
    transport: float = Field(..., ge=0.0)
    div_v: float = Field(..., ge=0.0)
    div_alpha: float = Field(..., ge=0.0)

    def worst(self) -> float:
        return max(self.momentum, self.transport, self.div_v, self.div_alpha)


class MappedDiagnostics(BaseModel):
    """Constraint and residual norms of the primal series mapped from a dual state."""

    div_v: float = Field(..., ge=0.0)
    div_alpha: float = Field(..., ge=0.0)
    weak_form: ResidualNorms
    primal: Optional[ResidualNorms] = None


class IterationRecord(BaseModel):
    """One accepted optimizer iteration."""

    iteration: int
    objective: float
    grad_norm: float
    min_pivot: float
    step_length: float

    @staticmethod
    def csv_header() -> list[str]:
        return ["iter", "S", "grad_norm", "min_pivot", "step_length"]

    def csv_row(self) -> list[Any]:
        return [self.iteration, self.objective, self.grad_norm, self.min_pivot, self.step_length]


class SolveReport(BaseModel):
    """Outcome of a dual maximization."""

    status: SolveStatus
    iterations: int = 0
    history: list[IterationRecord] = Field(default_factory=list)
    evaluations: int = 0
    mapped_residuals: Optional[ResidualNorms] = None
    wall_time: float = 0.0
    message: str = ""

    @property
    def objective_history(self) -> list[float]:
        return [record.objective for record in self.history]

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


class CheckResult(BaseModel):
    """Outcome of one named invariant check."""

    suite: str
    name: str
    passed: bool
    detail: str = ""
