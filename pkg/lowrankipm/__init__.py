from .ipm import InteriorPointSolver as InteriorPointSolver
from .ipm import RunReport as RunReport
from .ipm import SolverConfig as SolverConfig
from .ipm import solve as solve
from .problem import QpProblem as QpProblem
from .qps_io import load_problem as load_problem
from .qps_io import parse_qps as parse_qps
