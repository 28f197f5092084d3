"""Euler-Lagrange and transversality residuals at a candidate (x, T).

The stationarity residual samples dL/dx + D_right(dL/ddx) on the grid,
with the right Riemann-Liouville derivative taken from :mod:`fracops`.
The transversality residuals are built from two endpoint quantities:

``I_term``
    The boundary bracket of the integrated-by-parts first variation: the
    right fractional integral of order ``1 - alpha`` of the sampled
    dL/ddx, evaluated at its own upper limit t = T.  The raw node value
    there is 0 for every grid (empty integral), so the bracket is taken as
    the kernel-normalized limit of the values on the last two
    subintervals, Richardson-extrapolated in the spacing:

        I_term = 2*F[-2]*G/h**(1-a) - F[-3]*G/(2h)**(1-a),  G = Gamma(2-a)

    For smooth integrands this equals the endpoint value of dL/ddx up to
    O(h^2), which is also its alpha -> 1 limit; a raw 0 would make every
    endpoint check vacuous.

``xprime_T``
    The classical derivative x'(T) by a 3-point backward difference.

Node indices 0, 1, n-2, n-1 are affected by one-sided stencils and the
endpoint boundary layers of the fractional operators; summaries therefore
report the sup-norm over the remaining "interior" nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .discretize import SampledTrajectory
from .exprlang import Expr, evaluate, evaluate_array
from .fracops import SampledFunction, gamma, right_rl_derivative, right_rl_integral
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
)

__all__ = [
    "TailReport",
    "TransversalityReport",
    "el_residual",
    "transversality",
    "tail_diagnostic",
    "infinite_horizon_report",
    "interior_sup",
    "interior_slice",
    "grid_error_estimate",
]

# one-sided endpoint stencils plus their central-stencil neighbours
_INTERIOR_MARGIN = 2

# slack for KKT sign checks: a binding multiplier surrogate may sit a hair
# on the wrong side of 0 from floating-point noise
_SIGN_TOL = 1e-9

_ACTIVE_TOL = 1e-9


class ResidualCaseError(ValueError):
    """Residual request inconsistent with the problem's terminal variant."""


@dataclass(frozen=True)
class TailReport:
    """Theorem-3 tail samples s(T') = I_term(T') * x(T') over a truncation schedule."""

    schedule: tuple[float, ...]
    s_values: tuple[float, ...]
    trend_decreasing: bool


@dataclass(frozen=True)
class TransversalityReport:
    """Case-tagged endpoint residuals; inapplicable fields are None.

    Case tags: FreeBoth, A (vertical line), B (horizontal line),
    C (terminal curve), CurveConstrained, D (truncated vertical),
    E (truncated horizontal), InfiniteHorizon.  For C and CurveConstrained
    the single displayed condition is stored in R1.
    """

    case_tag: str
    I_term: float
    xprime_T: float
    R1: float | None = None
    R2: float | None = None
    kkt_sign_ok: bool | None = None
    complementarity: float | None = None
    tail: TailReport | None = None
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        """JSON-ready form; absent fields are omitted."""
        out: dict = {
            "case": self.case_tag,
            "I_term": self.I_term,
            "xprime_T": self.xprime_T,
        }
        for key in ("R1", "R2", "kkt_sign_ok", "complementarity"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.tail is not None:
            out["tail"] = {
                "schedule": list(self.tail.schedule),
                "s_values": list(self.tail.s_values),
                "trend_decreasing": self.tail.trend_decreasing,
            }
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out


def interior_slice(n_nodes: int) -> slice:
    """Nodes unaffected by endpoint stencils and operator boundary layers."""
    if n_nodes < 2 * _INTERIOR_MARGIN + 1:
        return slice(1, n_nodes - 1)
    return slice(_INTERIOR_MARGIN, n_nodes - _INTERIOR_MARGIN)


def interior_sup(values: np.ndarray) -> float:
    return float(np.max(np.abs(values[interior_slice(len(values))])))


def _samples(expr: Expr, env: dict, n: int) -> np.ndarray:
    out = np.asarray(evaluate_array(expr, env), dtype=float)
    return np.ascontiguousarray(np.broadcast_to(out, (n,)))


def _trajectory_env(p: VariationalProblem, x: SampledTrajectory) -> dict:
    env: dict = {"t": x.grid.nodes, "x": x.values, "dx": x.caputo}
    if isinstance(p.terminal, CurveConstrained):
        env["phiT"] = evaluate(p.terminal.phi_curve, {"t": x.grid.b})
    return env


def _endpoint_env(p: VariationalProblem, x: SampledTrajectory) -> dict:
    env = {"t": x.grid.b, "x": float(x.values[-1]), "dx": float(x.caputo[-1])}
    if isinstance(p.terminal, CurveConstrained):
        env["phiT"] = evaluate(p.terminal.phi_curve, {"t": x.grid.b})
    return env


def el_residual(p: VariationalProblem, x: SampledTrajectory, T: float) -> SampledFunction:
    """Samples of the stationarity defect dL/dx + D_right^alpha(dL/ddx).

    All nodes are reported; the two nodes at each end carry one-sided
    stencils and boundary-layer artifacts (see :func:`interior_slice`).
    """
    _check_span(x, T)
    env = _trajectory_env(p, x)
    n = x.grid.n_nodes
    p2 = _samples(p.partial_x, env, n)
    p3 = _samples(p.partial_dx, env, n)
    rd = right_rl_derivative(SampledFunction(x.grid, p3), p.order)
    return SampledFunction(x.grid, p2 + rd.values)


def _bracket_I_term(p: VariationalProblem, x: SampledTrajectory, p3: np.ndarray) -> float:
    order = 1.0 - p.order.alpha
    F = right_rl_integral(SampledFunction(x.grid, p3), order).values
    h = x.grid.h
    g2 = gamma(2.0 - p.order.alpha)
    b1 = F[-2] * g2 / h**order
    b2 = F[-3] * g2 / (2.0 * h) ** order
    return float(2.0 * b1 - b2)


def _xprime_T(x: SampledTrajectory) -> float:
    v = x.values
    return float((3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * x.grid.h))


def _kink_warnings(p3: np.ndarray) -> tuple[str, ...]:
    jumps = np.abs(np.diff(p3))
    if jumps.size == 0:
        return ()
    peak = float(jumps.max())
    med = float(np.median(jumps))
    scale = 1.0 + float(np.max(np.abs(p3)))
    if (med > 0.0 and peak > 10.0 * med) or (med == 0.0 and peak > 1e-12 * scale):
        return (
            "dL/ddx has node-to-node jumps above 10x the median; the endpoint "
            "bracket extrapolation may be inaccurate near kinks",
        )
    return ()


def transversality(
    p: VariationalProblem, x: SampledTrajectory, T: float
) -> TransversalityReport:
    """Endpoint residuals for the problem's terminal variant at (x, T)."""
    _check_span(x, T)
    if isinstance(p.terminal, InfiniteHorizon):
        raise ResidualCaseError(
            "infinite-horizon transversality needs the whole truncation "
            "sequence; use tail_diagnostic / infinite_horizon_report"
        )

    env = _trajectory_env(p, x)
    n = x.grid.n_nodes
    p3 = _samples(p.partial_dx, env, n)
    I_term = _bracket_I_term(p, x, p3)
    xp = _xprime_T(x)
    warnings = _kink_warnings(p3)

    L_T = evaluate(p.lagrangian, _endpoint_env(p, x))
    cost_env = {"T": x.grid.b, "xT": float(x.values[-1])}
    p1phi = 0.0 if p.cost_dT is None else evaluate(p.cost_dT, cost_env)
    p2phi = 0.0 if p.cost_dxT is None else evaluate(p.cost_dxT, cost_env)

    # the two equations of the free-endpoint pair; every case reuses these
    r1 = L_T + p1phi - xp * I_term
    r2 = I_term + p2phi

    term = p.terminal
    if isinstance(term, FreeBoth):
        return TransversalityReport("FreeBoth", I_term, xp, R1=r1, R2=r2, warnings=warnings)
    if isinstance(term, VerticalLine):
        return TransversalityReport("A", I_term, xp, R2=r2, warnings=warnings)
    if isinstance(term, HorizontalLine):
        return TransversalityReport("B", I_term, xp, R1=r1, warnings=warnings)
    if isinstance(term, TerminalCurve):
        psi_p = evaluate(p.curve_dt, {"t": x.grid.b})
        rc = (psi_p - xp) * r2 + L_T + p1phi
        return TransversalityReport("C", I_term, xp, R1=rc, warnings=warnings)
    if isinstance(term, CurveConstrained):
        phi_p = evaluate(p.curve_dt, {"t": x.grid.b})
        p4 = _samples(p.partial_phiT, env, n)
        int_p4 = float(np.trapezoid(p4, dx=x.grid.h))
        rcc = (phi_p - xp) * I_term + phi_p * int_p4 + L_T
        return TransversalityReport("CurveConstrained", I_term, xp, R1=rcc, warnings=warnings)
    if isinstance(term, TruncatedVertical):
        x_T = float(x.values[-1])
        active = x_T <= term.x_min + _ACTIVE_TOL * (1.0 + abs(term.x_min))
        if active:
            sign_ok = (r2 <= _SIGN_TOL) if p.sense == "max" else (r2 >= -_SIGN_TOL)
            comp = (x_T - term.x_min) * r2
        else:
            # inactive constraint: the multiplier is exactly zero
            sign_ok = True
            comp = 0.0
        return TransversalityReport(
            "D", I_term, xp, R2=r2, kkt_sign_ok=sign_ok, complementarity=comp,
            warnings=warnings,
        )
    if isinstance(term, TruncatedHorizontal):
        active = x.grid.b >= term.T_max - _ACTIVE_TOL * (1.0 + abs(term.T_max))
        if active:
            sign_ok = (r1 >= -_SIGN_TOL) if p.sense == "max" else (r1 <= _SIGN_TOL)
            comp = (x.grid.b - term.T_max) * r1
        else:
            sign_ok = True
            comp = 0.0
        return TransversalityReport(
            "E", I_term, xp, R1=r1, kkt_sign_ok=sign_ok, complementarity=comp,
            warnings=warnings,
        )
    raise ResidualCaseError(f"unsupported terminal variant {term!r}")


def tail_diagnostic(
    p: VariationalProblem, solutions: Sequence[tuple[SampledTrajectory, float]]
) -> TailReport:
    """s(T') = I_term(T') * x(T') over increasing truncations.

    ``trend_decreasing`` is True iff |s| is non-increasing over the last
    three entries.  This is a finite-truncation surrogate for the
    infinite-horizon limit condition, not a verification of it.
    """
    if len(solutions) < 3:
        raise ValueError("tail diagnostic needs at least 3 truncation solutions")
    times = [float(T) for _, T in solutions]
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("truncation times must be strictly increasing")
    s_values = []
    for traj, T in solutions:
        env = _trajectory_env(p, traj)
        p3 = _samples(p.partial_dx, env, traj.grid.n_nodes)
        s = _bracket_I_term(p, traj, p3) * float(traj.values[-1])
        s_values.append(s)
    tail_abs = [abs(s) for s in s_values[-3:]]
    trend = tail_abs[0] >= tail_abs[1] >= tail_abs[2]
    return TailReport(tuple(times), tuple(s_values), trend)


def infinite_horizon_report(
    p: VariationalProblem, solutions: Sequence[tuple[SampledTrajectory, float]]
) -> TransversalityReport:
    """Full report for an infinite-horizon problem from its truncation solves."""
    tail = tail_diagnostic(p, solutions)
    last, _ = solutions[-1]
    env = _trajectory_env(p, last)
    p3 = _samples(p.partial_dx, env, last.grid.n_nodes)
    return TransversalityReport(
        "InfiniteHorizon",
        _bracket_I_term(p, last, p3),
        _xprime_T(last),
        tail=tail,
        warnings=_kink_warnings(p3)
        + (
            "infinite-horizon tail diagnostic is a finite-truncation "
            "approximation of the limit condition",
        ),
    )


def grid_error_estimate(p: VariationalProblem, x: SampledTrajectory, T: float) -> float:
    """Crude discretization-error scale h**(2-alpha) * (1 + sup|dL/dx| + sup|dL/ddx|).

    Used as the yardstick for the solution-quality gate on the
    Euler-Lagrange interior sup-norm.
    """
    env = _trajectory_env(p, x)
    n = x.grid.n_nodes
    p2 = _samples(p.partial_x, env, n)
    p3 = _samples(p.partial_dx, env, n)
    scale = 1.0 + float(np.max(np.abs(p2))) + float(np.max(np.abs(p3)))
    return x.grid.h ** (2.0 - p.order.alpha) * scale


def _check_span(x: SampledTrajectory, T: float) -> None:
    if abs(x.grid.b - T) > 1e-9 * (1.0 + abs(T)):
        raise ValueError(f"trajectory spans [a, {x.grid.b}] but T={T}")
