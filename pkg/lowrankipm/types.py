from typing import Literal, TypedDict

KktFormulation = Literal[
    'unreduced',    # block 4-by-4 unsymmetric system
    'reduced',      # slack step eliminated, symmetric saddle system
    'condensed',    # inequality multipliers eliminated as well
]

HeuristicMode = Literal[
    'none',
    'h1',   # patch the two step-limiting indices of the previous iteration
    'h2',   # patch up to r step-limiting indices with the worst ratio error
]

Method = Literal[
    'newton',
    'mn',   # modified Newton with rank-r shadow updates
]

RunStatus = Literal[
    'converged',
    'max_iterations',
    'singular',
]

ProblemClassLabel = Literal['S', 'M', 'L']

RowSense = Literal['L', 'E', 'G']

BoundKind = Literal['UP', 'LO', 'FX', 'FR', 'MI', 'PL', 'BV', 'LI', 'UI']

QuadraticSection = Literal['QUADOBJ', 'QMATRIX']

OutputFormat = Literal['csv', 'tsv', 'pretty']

RefactorSetting = int | Literal['auto', 'never']

KKT_FORMULATIONS: tuple[KktFormulation, ...] = ('unreduced', 'reduced', 'condensed')
HEURISTIC_MODES: tuple[HeuristicMode, ...] = ('none', 'h1', 'h2')
METHODS: tuple[Method, ...] = ('newton', 'mn')
OUTPUT_FORMATS: tuple[OutputFormat, ...] = ('csv', 'tsv', 'pretty')


class TraceRecord(TypedDict):
    """
    One main iteration of a run, evaluated at the iterate the step starts from.
    """
    k: int
    mu: float
    merit_mu: float         # ||F_mu(z)||
    merit_0: float          # ||F_0(z)||
    alpha_p: float
    alpha_d: float
    error_norm: float       # ||F'(z) - B||_F
    spectral_bound: float   # largest magnitude the rank-r update left out, 0 after a refactorization
    eta: float              # inexact-Newton residual ratio
    refactorized: bool
    forced_refactor: bool
    directional_derivative: float
    descent: bool


TRACE_COLUMNS: tuple[str, ...] = (
    'k',
    'mu',
    'merit_mu',
    'merit_0',
    'alpha_p',
    'alpha_d',
    'error_norm',
    'spectral_bound',
    'eta',
    'refactorized',
)
