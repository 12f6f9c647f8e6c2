from .config import RunConfig
from .reports import ConservationReport, ResidualNorms, IterationRecord, SolveReport, CheckResult
