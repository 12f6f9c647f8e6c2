from .scheme import Backend, OptimizerMethod, SolveStatus
from .scenarios import ScenarioName, CheckSuite
