"""fracvar: fractional variational problems with variable endpoints.

Numerically solves Bolza-type free-terminal-time problems,
curve-constrained endpoint problems and truncated infinite-horizon
problems driven by the left Caputo derivative, and evaluates the
fractional Euler-Lagrange and transversality conditions as checkable
residuals at any candidate solution.
"""

from .fracops import (
    FractionalOrder,
    SampledFunction,
    UniformGrid,
    gamma,
    left_caputo,
    left_rl_integral,
    right_rl_derivative,
    right_rl_integral,
)
from .exprlang import (
    Expr,
    ParseError,
    differentiate,
    evaluate,
    parse,
    to_source,
)
from .problems import (
    CurveConstrained,
    FreeBoth,
    HorizontalLine,
    InfiniteHorizon,
    TerminalCurve,
    TruncatedHorizontal,
    TruncatedVertical,
    VariationalProblem,
    VerticalLine,
    build_problem,
    make_problem,
    parse_problem_file,
)
from .discretize import (
    ObjectiveValue,
    SampledTrajectory,
    evaluate_functional,
    gradient,
    make_trajectory,
    resample,
)
from .residuals import (
    TailReport,
    TransversalityReport,
    el_residual,
    tail_diagnostic,
    transversality,
)
from .solver import SolverOptions, SolverReport, solve, solve_fixed_T

__version__ = "0.1.0"

__all__ = [
    "FractionalOrder",
    "SampledFunction",
    "UniformGrid",
    "gamma",
    "left_caputo",
    "left_rl_integral",
    "right_rl_derivative",
    "right_rl_integral",
    "Expr",
    "ParseError",
    "differentiate",
    "evaluate",
    "parse",
    "to_source",
    "CurveConstrained",
    "FreeBoth",
    "HorizontalLine",
    "InfiniteHorizon",
    "TerminalCurve",
    "TruncatedHorizontal",
    "TruncatedVertical",
    "VariationalProblem",
    "VerticalLine",
    "build_problem",
    "make_problem",
    "parse_problem_file",
    "ObjectiveValue",
    "SampledTrajectory",
    "evaluate_functional",
    "gradient",
    "make_trajectory",
    "resample",
    "TailReport",
    "TransversalityReport",
    "el_residual",
    "tail_diagnostic",
    "transversality",
    "SolverOptions",
    "SolverReport",
    "solve",
    "solve_fixed_T",
    "__version__",
]
