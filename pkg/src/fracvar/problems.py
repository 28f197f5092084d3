"""Variational problem definitions: functional, terminal structure, horizon.

A problem couples a Lagrangian L(t, x, dx) (dx holding the left Caputo
derivative of x), an optional terminal cost phi(T, xT), the fractional
order, the time window [a, b] (b acting as a hard search ceiling for a
free terminal time), the initial value x(a) = x_a, a terminal condition
variant, and the optimization sense.

Problems are built through :func:`make_problem` (library use) or
:func:`build_problem` (key = value problem files); both validate every
invariant and precompute the symbolic partial derivatives of L used by the
residual checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

from .exprlang import (
    Expr,
    differentiate,
    parse,
    variables_of,
)
from .fracops import FractionalOrder

__all__ = [
    "FreeBoth",
    "VerticalLine",
    "HorizontalLine",
    "TerminalCurve",
    "TruncatedVertical",
    "TruncatedHorizontal",
    "CurveConstrained",
    "InfiniteHorizon",
    "TerminalCondition",
    "VariationalProblem",
    "ProblemValidationError",
    "ProblemFileError",
    "make_problem",
    "parse_problem_file",
    "build_problem",
    "KNOWN_KEYS",
    "SOLVER_KEYS",
]


class ProblemValidationError(ValueError):
    """An invariant violation, tagged with the offending field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ProblemFileError(ValueError):
    pass


# ---------------------------------------------------------------------------
# terminal condition variants

@dataclass(frozen=True)
class FreeBoth:
    """Both T and x(T) free."""


@dataclass(frozen=True)
class VerticalLine:
    """T fixed, x(T) free (case A)."""

    T_fixed: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "T_fixed", float(self.T_fixed))


@dataclass(frozen=True)
class HorizontalLine:
    """x(T) fixed, T free (case B)."""

    xT_fixed: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "xT_fixed", float(self.xT_fixed))


@dataclass(frozen=True)
class TerminalCurve:
    """Endpoint tied to a prescribed curve x(T) = psi(T) (case C)."""

    psi: Expr


@dataclass(frozen=True)
class TruncatedVertical:
    """T fixed with the inequality x(T) >= x_min (case D)."""

    T_fixed: float
    x_min: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "T_fixed", float(self.T_fixed))
        object.__setattr__(self, "x_min", float(self.x_min))


@dataclass(frozen=True)
class TruncatedHorizontal:
    """x(T) fixed with the inequality T <= T_max (case E)."""

    xT_fixed: float
    T_max: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "xT_fixed", float(self.xT_fixed))
        object.__setattr__(self, "T_max", float(self.T_max))


@dataclass(frozen=True)
class CurveConstrained:
    """x(T) = phi(T) with the Lagrangian also depending on phiT = phi(T)."""

    phi_curve: Expr


@dataclass(frozen=True)
class InfiniteHorizon:
    """Maximization over [a, inf), probed at an increasing truncation schedule."""

    schedule: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "schedule", tuple(float(s) for s in self.schedule))


TerminalCondition = Union[
    FreeBoth,
    VerticalLine,
    HorizontalLine,
    TerminalCurve,
    TruncatedVertical,
    TruncatedHorizontal,
    CurveConstrained,
    InfiniteHorizon,
]


@dataclass(frozen=True)
class VariationalProblem:
    """A validated problem together with precomputed partials.

    ``partial_x`` and ``partial_dx`` are the symbolic partial derivatives of
    the Lagrangian with respect to x and dx; ``partial_phiT`` is present
    exactly when the terminal condition is :class:`CurveConstrained`.
    ``cost_dT``/``cost_dxT`` differentiate the terminal cost,
    ``curve_dt`` the endpoint curve (psi or phi), when those exist.
    """

    lagrangian: Expr
    terminal_cost: Expr | None
    order: FractionalOrder
    a: float
    b: float
    x_a: float
    terminal: TerminalCondition
    sense: str
    partial_x: Expr
    partial_dx: Expr
    partial_phiT: Expr | None
    cost_dT: Expr | None
    cost_dxT: Expr | None
    curve_dt: Expr | None

    @property
    def endpoint_curve(self) -> Expr | None:
        if isinstance(self.terminal, TerminalCurve):
            return self.terminal.psi
        if isinstance(self.terminal, CurveConstrained):
            return self.terminal.phi_curve
        return None

    @property
    def sense_sign(self) -> float:
        """+1 for minimization, -1 for maximization."""
        return 1.0 if self.sense == "min" else -1.0


def _as_expr(value: "str | Expr", field: str) -> Expr:
    if isinstance(value, str):
        try:
            return parse(value)
        except Exception as exc:
            raise ProblemValidationError(field, str(exc)) from exc
    return value


def _finite(value: float, field: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ProblemValidationError(field, f"not a real number: {value!r}") from None
    if not math.isfinite(v):
        raise ProblemValidationError(field, f"must be finite, got {v!r}")
    return v


def make_problem(
    lagrangian: "str | Expr",
    *,
    alpha: float,
    a: float,
    b: float,
    x_a: float,
    terminal: TerminalCondition,
    terminal_cost: "str | Expr | None" = None,
    sense: str = "min",
) -> VariationalProblem:
    """Validate the ingredients and assemble a :class:`VariationalProblem`."""
    a = _finite(a, "a")
    b = _finite(b, "b")
    if not a < b:
        raise ProblemValidationError("b", f"requires a < b, got a={a} b={b}")
    x_a = _finite(x_a, "x_a")
    try:
        order = FractionalOrder(float(alpha))
    except (TypeError, ValueError) as exc:
        raise ProblemValidationError("alpha", str(exc)) from exc
    if sense not in ("min", "max"):
        raise ProblemValidationError("sense", f"must be 'min' or 'max', got {sense!r}")

    lag = _as_expr(lagrangian, "lagrangian")
    allowed = {"t", "x", "dx"}
    if isinstance(terminal, CurveConstrained):
        allowed.add("phiT")
    for name in sorted(variables_of(lag)):
        if name not in allowed:
            raise ProblemValidationError(
                "lagrangian",
                f"variable '{name}' is not allowed here (allowed: {sorted(allowed)})",
            )

    cost = None if terminal_cost is None else _as_expr(terminal_cost, "terminal_cost")
    if cost is not None:
        if isinstance(terminal, (CurveConstrained, InfiniteHorizon)):
            raise ProblemValidationError(
                "terminal_cost",
                "must be absent for curve-constrained and infinite-horizon problems",
            )
        for name in sorted(variables_of(cost)):
            if name not in ("T", "xT"):
                raise ProblemValidationError(
                    "terminal_cost", f"variable '{name}' is not allowed (use T, xT)"
                )

    _validate_terminal(terminal, a, b, sense)

    curve = None
    if isinstance(terminal, TerminalCurve):
        curve = terminal.psi
    elif isinstance(terminal, CurveConstrained):
        curve = terminal.phi_curve

    return VariationalProblem(
        lagrangian=lag,
        terminal_cost=cost,
        order=order,
        a=a,
        b=b,
        x_a=x_a,
        terminal=terminal,
        sense=sense,
        partial_x=differentiate(lag, "x"),
        partial_dx=differentiate(lag, "dx"),
        partial_phiT=(
            differentiate(lag, "phiT") if isinstance(terminal, CurveConstrained) else None
        ),
        cost_dT=None if cost is None else differentiate(cost, "T"),
        cost_dxT=None if cost is None else differentiate(cost, "xT"),
        curve_dt=None if curve is None else differentiate(curve, "t"),
    )


def _validate_terminal(terminal: TerminalCondition, a: float, b: float, sense: str) -> None:
    if isinstance(terminal, (VerticalLine, TruncatedVertical)):
        T = _finite(terminal.T_fixed, "terminal.T")
        if not a < T <= b:
            raise ProblemValidationError("terminal.T", f"requires a < T <= b, got {T}")
        if isinstance(terminal, TruncatedVertical):
            _finite(terminal.x_min, "terminal.x_min")
    elif isinstance(terminal, TruncatedHorizontal):
        Tm = _finite(terminal.T_max, "terminal.T_max")
        if not a < Tm <= b:
            raise ProblemValidationError(
                "terminal.T_max", f"requires a < T_max <= b, got {Tm}"
            )
        _finite(terminal.xT_fixed, "terminal.xT")
    elif isinstance(terminal, HorizontalLine):
        _finite(terminal.xT_fixed, "terminal.xT")
    elif isinstance(terminal, (TerminalCurve, CurveConstrained)):
        expr = terminal.psi if isinstance(terminal, TerminalCurve) else terminal.phi_curve
        field = "terminal.psi" if isinstance(terminal, TerminalCurve) else "terminal.phi_curve"
        extra = variables_of(expr) - {"t"}
        if extra:
            raise ProblemValidationError(
                field, f"curve may only depend on t, found {sorted(extra)}"
            )
    elif isinstance(terminal, InfiniteHorizon):
        sched = tuple(float(s) for s in terminal.schedule)
        if len(sched) < 3:
            raise ProblemValidationError(
                "terminal.schedule", "needs at least 3 truncation times"
            )
        if sched[0] <= a:
            raise ProblemValidationError(
                "terminal.schedule", f"first entry must exceed a={a}, got {sched[0]}"
            )
        if any(not math.isfinite(s) for s in sched):
            raise ProblemValidationError("terminal.schedule", "entries must be finite")
        if any(s2 <= s1 for s1, s2 in zip(sched, sched[1:])):
            raise ProblemValidationError(
                "terminal.schedule", "must be strictly increasing"
            )
        if sense != "max":
            raise ProblemValidationError(
                "sense", "infinite-horizon problems are maximization problems"
            )
    elif not isinstance(terminal, FreeBoth):
        raise ProblemValidationError("terminal.kind", f"unknown variant {terminal!r}")


# ---------------------------------------------------------------------------
# problem files: line-oriented "key = value"

SOLVER_KEYS = frozenset(
    {
        "solver.n_nodes",
        "solver.max_outer_iters",
        "solver.grad_tol",
        "solver.T_tol",
        "solver.seed",
    }
)

KNOWN_KEYS = frozenset(
    {
        "alpha",
        "a",
        "b",
        "x_a",
        "lagrangian",
        "terminal_cost",
        "sense",
        "terminal.kind",
        "terminal.T",
        "terminal.xT",
        "terminal.psi",
        "terminal.x_min",
        "terminal.T_max",
        "terminal.phi_curve",
        "terminal.schedule",
    }
) | SOLVER_KEYS

_KINDS = (
    "free_both",
    "vertical_line",
    "horizontal_line",
    "terminal_curve",
    "truncated_vertical",
    "truncated_horizontal",
    "curve_constrained",
    "infinite_horizon",
)

# payload keys each terminal kind consumes
_KIND_PAYLOAD = {
    "free_both": frozenset(),
    "vertical_line": frozenset({"terminal.T"}),
    "horizontal_line": frozenset({"terminal.xT"}),
    "terminal_curve": frozenset({"terminal.psi"}),
    "truncated_vertical": frozenset({"terminal.T", "terminal.x_min"}),
    "truncated_horizontal": frozenset({"terminal.xT", "terminal.T_max"}),
    "curve_constrained": frozenset({"terminal.phi_curve"}),
    "infinite_horizon": frozenset({"terminal.schedule"}),
}


def parse_problem_file(text: str, *, name: str = "<problem>") -> dict[str, str]:
    """Parse the line-oriented key = value format into a raw string mapping.

    Blank lines and '#' comment lines are skipped; unknown and duplicate
    keys are errors.
    """
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ProblemFileError(f"{name}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in KNOWN_KEYS:
            raise ProblemFileError(f"{name}:{lineno}: unknown key '{key}'")
        if key in pairs:
            raise ProblemFileError(f"{name}:{lineno}: duplicate key '{key}'")
        if not value:
            raise ProblemFileError(f"{name}:{lineno}: empty value for '{key}'")
        pairs[key] = value
    return pairs


def _take_float(config: Mapping[str, str], key: str) -> float:
    if key not in config:
        raise ProblemValidationError(key, "required key missing")
    try:
        return float(config[key])
    except ValueError:
        raise ProblemValidationError(key, f"not a number: {config[key]!r}") from None


def build_problem(config: Mapping[str, str]) -> VariationalProblem:
    """Build a validated problem from a parsed problem file.

    ``solver.*`` keys are permitted here and ignored; they configure the
    solver, not the problem.
    """
    unknown = set(config) - KNOWN_KEYS
    if unknown:
        raise ProblemValidationError(sorted(unknown)[0], "unknown key")
    if "lagrangian" not in config:
        raise ProblemValidationError("lagrangian", "required key missing")
    if "terminal.kind" not in config:
        raise ProblemValidationError("terminal.kind", "required key missing")

    kind = config["terminal.kind"]
    if kind not in _KINDS:
        raise ProblemValidationError(
            "terminal.kind", f"must be one of {', '.join(_KINDS)}; got '{kind}'"
        )
    payload = _KIND_PAYLOAD[kind]
    for key in config:
        if key.startswith("terminal.") and key != "terminal.kind" and key not in payload:
            raise ProblemValidationError(
                key, f"not a payload key of terminal.kind = {kind}"
            )

    terminal: TerminalCondition
    if kind == "free_both":
        terminal = FreeBoth()
    elif kind == "vertical_line":
        terminal = VerticalLine(T_fixed=_take_float(config, "terminal.T"))
    elif kind == "horizontal_line":
        terminal = HorizontalLine(xT_fixed=_take_float(config, "terminal.xT"))
    elif kind == "terminal_curve":
        if "terminal.psi" not in config:
            raise ProblemValidationError("terminal.psi", "required key missing")
        terminal = TerminalCurve(psi=_as_expr(config["terminal.psi"], "terminal.psi"))
    elif kind == "truncated_vertical":
        terminal = TruncatedVertical(
            T_fixed=_take_float(config, "terminal.T"),
            x_min=_take_float(config, "terminal.x_min"),
        )
    elif kind == "truncated_horizontal":
        terminal = TruncatedHorizontal(
            xT_fixed=_take_float(config, "terminal.xT"),
            T_max=_take_float(config, "terminal.T_max"),
        )
    elif kind == "curve_constrained":
        if "terminal.phi_curve" not in config:
            raise ProblemValidationError("terminal.phi_curve", "required key missing")
        terminal = CurveConstrained(
            phi_curve=_as_expr(config["terminal.phi_curve"], "terminal.phi_curve")
        )
    else:  # infinite_horizon
        if "terminal.schedule" not in config:
            raise ProblemValidationError("terminal.schedule", "required key missing")
        try:
            sched = tuple(
                float(part) for part in config["terminal.schedule"].split(",") if part.strip()
            )
        except ValueError:
            raise ProblemValidationError(
                "terminal.schedule", f"not a comma-separated list of numbers"
            ) from None
        terminal = InfiniteHorizon(schedule=sched)

    return make_problem(
        config["lagrangian"],
        alpha=_take_float(config, "alpha"),
        a=_take_float(config, "a"),
        b=_take_float(config, "b"),
        x_a=_take_float(config, "x_a"),
        terminal=terminal,
        terminal_cost=config.get("terminal_cost"),
        sense=config.get("sense", "min"),
    )
