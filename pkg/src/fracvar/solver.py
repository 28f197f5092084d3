"""Direct solver: nested search for a stationary pair (x, T).

The inner problem (fixed T) is a quasi-Newton (BFGS) minimization of the
sense-adjusted discrete objective over the free node values, started from
an affine interpolant.  Free terminal times are handled by a 1-D outer
search: a 16-point presampling scan of T in (a, b] to bracket the minimum
(and to detect non-unimodality, which is reported instead of silently
mis-bracketed), followed by golden-section refinement.  The golden loop
keeps shrinking past T_tol until the measured dJ/dT along the feasible
endpoint retraction drops below grad_tol, so a converged report actually
satisfies its own stationarity claims.

Truncated endpoint variants use a two-phase active set: solve free, check
the inequality, re-solve pinned if it binds, and record the KKT branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .discretize import (
    FunctionalEvaluator,
    NonFiniteIntegrandError,
    SampledTrajectory,
    make_trajectory,
)
from .exprlang import evaluate
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
from .residuals import (
    TransversalityReport,
    el_residual,
    grid_error_estimate,
    infinite_horizon_report,
    interior_sup,
    transversality,
)

__all__ = [
    "SolverOptions",
    "SolverReport",
    "TraceEntry",
    "KKTRecord",
    "solve_fixed_T",
    "solve",
]

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

# inner solves inside the nested scheme run BFGS to a tighter tolerance than
# the reported grad_tol so that the interior-gradient residue does not
# pollute the outer dJ/dT measurement
_INNER_GTOL_FACTOR = 1e-3
_INNER_MAXITER = 2000
_PRESAMPLE_POINTS = 16


@dataclass(frozen=True)
class SolverOptions:
    n_nodes: int = 101
    max_outer_iters: int = 200
    grad_tol: float = 1e-6
    T_tol: float = 1e-6
    perturbation_seed: int = 12345

    def __post_init__(self) -> None:
        if self.n_nodes < 11:
            raise ValueError(f"n_nodes must be >= 11, got {self.n_nodes}")
        if not (self.grad_tol > 0.0 and self.T_tol > 0.0):
            raise ValueError("tolerances must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be positive")


@dataclass(frozen=True)
class TraceEntry:
    phase: str
    T: float
    objective: float
    grad_norm: float

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "T": self.T,
            "objective": self.objective,
            "grad_norm": self.grad_norm,
        }


@dataclass(frozen=True)
class KKTRecord:
    branch: str  # "inactive" | "binding"
    active: bool
    sign_ok: bool | None
    complementarity: float | None

    def to_dict(self) -> dict:
        return {
            "branch": self.branch,
            "active": self.active,
            "sign_ok": self.sign_ok,
            "complementarity": self.complementarity,
        }


@dataclass(frozen=True)
class SolverReport:
    trajectory: SampledTrajectory
    T_star: float
    objective: float
    residuals: TransversalityReport
    converged: bool
    trace: tuple[TraceEntry, ...]
    kkt: KKTRecord | None
    grad_norm: float
    dJ_dT: float | None
    el_interior_sup: float
    error_estimate: float

    def to_dict(self) -> dict:
        """JSON-ready summary (the trajectory itself is exported as CSV)."""
        return {
            "T_star": self.T_star,
            "objective": self.objective,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "dJ_dT": self.dJ_dT,
            "el_interior_sup": self.el_interior_sup,
            "error_estimate": self.error_estimate,
            "n_nodes": self.trajectory.grid.n_nodes,
            "residuals": self.residuals.to_dict(),
            "kkt": None if self.kkt is None else self.kkt.to_dict(),
            "trace": [entry.to_dict() for entry in self.trace],
        }


# ---------------------------------------------------------------------------
# inner problem


@dataclass
class _InnerResult:
    values: np.ndarray
    grad_norm: float
    ok: bool
    objective: float


def _endpoint_pin(p: VariationalProblem, T: float) -> float | None:
    term = p.terminal
    if isinstance(term, (HorizontalLine, TruncatedHorizontal)):
        return float(term.xT_fixed)
    if isinstance(term, TerminalCurve):
        return evaluate(term.psi, {"t": T})
    if isinstance(term, CurveConstrained):
        return evaluate(term.phi_curve, {"t": T})
    return None


def _endpoint_fn(p: VariationalProblem):
    """Endpoint value as a function of T along the feasible retraction, or None."""
    term = p.terminal
    if isinstance(term, (HorizontalLine, TruncatedHorizontal)):
        return lambda T: float(term.xT_fixed)
    if isinstance(term, TerminalCurve):
        return lambda T: evaluate(term.psi, {"t": T})
    if isinstance(term, CurveConstrained):
        return lambda T: evaluate(term.phi_curve, {"t": T})
    return None


def _inner_solve(
    core: FunctionalEvaluator,
    p: VariationalProblem,
    T: float,
    opts: SolverOptions,
    gtol: float,
    pin: float | None,
) -> _InnerResult:
    n = core.n
    endpoint = p.x_a if pin is None else pin
    template = np.linspace(p.x_a, endpoint, n)
    free_hi = n if pin is None else n - 1
    free_idx = range(1, free_hi)
    sgn = p.sense_sign

    def assemble(z: np.ndarray) -> np.ndarray:
        vals = template.copy()
        vals[1:free_hi] = z
        return vals

    def fun(z: np.ndarray) -> float:
        try:
            return sgn * core.value(assemble(z), T)
        except NonFiniteIntegrandError:
            return float("inf")

    def jac(z: np.ndarray) -> np.ndarray:
        return sgn * core.node_gradient(assemble(z), T, free_idx)

    x0 = template[1:free_hi].copy()
    rng = np.random.default_rng(opts.perturbation_seed)
    best = None
    for attempt in range(3):
        res = minimize(
            fun,
            x0,
            jac=jac,
            method="BFGS",
            options={"gtol": gtol, "maxiter": _INNER_MAXITER},
        )
        if best is None or res.fun < best.fun:
            best = res
        if res.success or np.max(np.abs(res.jac)) <= gtol:
            best = res
            break
        # line-search failure: restart, then restart from a perturbed point
        x0 = res.x.copy()
        if attempt == 1:
            x0 = x0 + 1e-8 * (1.0 + np.abs(x0)) * rng.standard_normal(x0.shape)

    values = assemble(best.x)
    grad = jac(best.x)
    grad_norm = float(np.max(np.abs(grad))) if grad.size else 0.0
    return _InnerResult(
        values=values,
        grad_norm=grad_norm,
        ok=grad_norm <= opts.grad_tol,
        objective=float(sgn * best.fun),
    )


def solve_fixed_T(
    p: VariationalProblem,
    T: float,
    opts: SolverOptions | None = None,
    endpoint_value: float | None = None,
) -> SampledTrajectory:
    """Quasi-Newton solve of the inner problem at a fixed terminal time.

    The endpoint is pinned according to the terminal variant (or to
    ``endpoint_value`` when given); otherwise it is free.
    """
    opts = opts or SolverOptions()
    if not p.a < T <= p.b and not isinstance(p.terminal, InfiniteHorizon):
        raise ValueError(f"T={T} outside (a, b]=({p.a}, {p.b}]")
    core = FunctionalEvaluator(p, opts.n_nodes)
    pin = endpoint_value if endpoint_value is not None else _endpoint_pin(p, T)
    res = _inner_solve(core, p, T, opts, opts.grad_tol, pin)
    return make_trajectory(p, res.values, T)


# ---------------------------------------------------------------------------
# outer problem


def _count_interior_minima(adjusted: list[float]) -> int:
    count = 0
    for k in range(1, len(adjusted) - 1):
        if adjusted[k] < adjusted[k - 1] and adjusted[k] < adjusted[k + 1]:
            count += 1
    return count


class _FreeTimeSearch:
    def __init__(self, p: VariationalProblem, core: FunctionalEvaluator, opts: SolverOptions):
        self.p = p
        self.core = core
        self.opts = opts
        self.gtol_inner = max(opts.grad_tol * _INNER_GTOL_FACTOR, 1e-10)
        self.trace: list[TraceEntry] = []
        self.n_probes = 0
        self.best: tuple[float, _InnerResult] | None = None  # (T, result)
        self.endpoint_fn = _endpoint_fn(p)

    def probe(self, T: float, phase: str) -> float:
        """Inner solve at T; returns the sense-adjusted objective."""
        pin = _endpoint_pin(self.p, T)
        res = _inner_solve(self.core, self.p, T, self.opts, self.gtol_inner, pin)
        self.n_probes += 1
        self.trace.append(TraceEntry(phase, float(T), res.objective, res.grad_norm))
        adjusted = self.p.sense_sign * res.objective
        if self.best is None or adjusted < self.p.sense_sign * self.best[1].objective:
            self.best = (float(T), res)
        return adjusted

    def measured_dJ_dT(self) -> float:
        T, res = self.best
        return self.core.dJ_dT(res.values, T, endpoint_fn=self.endpoint_fn)

    def run(self) -> dict:
        p, opts = self.p, self.opts
        a, b = p.a, p.b
        span = b - a
        Ts = [a + k * span / _PRESAMPLE_POINTS for k in range(1, _PRESAMPLE_POINTS + 1)]
        adjusted = [self.probe(T, "presample") for T in Ts]
        nonunimodal = _count_interior_minima(adjusted) >= 2
        k_star = int(np.argmin(adjusted))
        lo = Ts[k_star - 1] if k_star > 0 else a + 1e-4 * span
        hi = Ts[k_star + 1] if k_star + 1 < len(Ts) else b

        c = hi - (hi - lo) * _INV_PHI
        d = lo + (hi - lo) * _INV_PHI
        fc = self.probe(c, "golden")
        fd = self.probe(d, "golden")
        djdt = None
        width_floor = max(1e-13 * span, 64.0 * np.finfo(float).eps * max(1.0, abs(b)))
        while self.n_probes < opts.max_outer_iters:
            if fc <= fd:
                hi, d, fd = d, c, fc
                c = hi - (hi - lo) * _INV_PHI
                fc = self.probe(c, "golden")
            else:
                lo, c, fc = c, d, fd
                d = lo + (hi - lo) * _INV_PHI
                fd = self.probe(d, "golden")
            width = hi - lo
            if width <= opts.T_tol:
                djdt = self.measured_dJ_dT()
                if abs(djdt) <= opts.grad_tol or width <= width_floor:
                    break
        width = hi - lo
        if djdt is None:
            djdt = self.measured_dJ_dT()
        T_star, res = self.best
        converged = (
            res.ok
            and not nonunimodal
            and width <= opts.T_tol
            and abs(djdt) <= opts.grad_tol
        )
        return {
            "T": T_star,
            "result": res,
            "converged": converged,
            "dJ_dT": djdt,
            "nonunimodal": nonunimodal,
        }


def _make_report(
    p: VariationalProblem,
    values: np.ndarray,
    T: float,
    *,
    objective: float,
    converged: bool,
    trace: list[TraceEntry],
    grad_norm: float,
    dJ_dT: float | None,
    kkt: KKTRecord | None,
    residual_report: TransversalityReport | None = None,
) -> SolverReport:
    traj = make_trajectory(p, values, T)
    residual_report = residual_report or transversality(p, traj, T)
    el = el_residual(p, traj, T)
    return SolverReport(
        trajectory=traj,
        T_star=float(T),
        objective=float(objective),
        residuals=residual_report,
        converged=bool(converged),
        trace=tuple(trace),
        kkt=kkt,
        grad_norm=float(grad_norm),
        dJ_dT=dJ_dT,
        el_interior_sup=interior_sup(el.values),
        error_estimate=grid_error_estimate(p, traj, T),
    )


def solve(p: VariationalProblem, opts: SolverOptions | None = None) -> SolverReport:
    """Dispatch on the terminal variant and return the full report."""
    opts = opts or SolverOptions()
    core = FunctionalEvaluator(p, opts.n_nodes)
    term = p.terminal

    if isinstance(term, VerticalLine):
        res = _inner_solve(core, p, term.T_fixed, opts, opts.grad_tol, None)
        trace = [TraceEntry("fixed_T", term.T_fixed, res.objective, res.grad_norm)]
        return _make_report(
            p, res.values, term.T_fixed,
            objective=res.objective, converged=res.ok, trace=trace,
            grad_norm=res.grad_norm, dJ_dT=None, kkt=None,
        )

    if isinstance(term, TruncatedVertical):
        return _solve_truncated_vertical(p, core, opts)

    if isinstance(term, TruncatedHorizontal):
        return _solve_truncated_horizontal(p, core, opts)

    if isinstance(term, InfiniteHorizon):
        return _solve_infinite_horizon(p, core, opts)

    if isinstance(term, (FreeBoth, HorizontalLine, TerminalCurve, CurveConstrained)):
        search = _FreeTimeSearch(p, core, opts)
        out = search.run()
        res = out["result"]
        return _make_report(
            p, res.values, out["T"],
            objective=res.objective, converged=out["converged"],
            trace=search.trace, grad_norm=res.grad_norm,
            dJ_dT=out["dJ_dT"], kkt=None,
        )

    raise ValueError(f"unsupported terminal variant {term!r}")


def _solve_truncated_vertical(
    p: VariationalProblem, core: FunctionalEvaluator, opts: SolverOptions
) -> SolverReport:
    term = p.terminal
    T = term.T_fixed
    free = _inner_solve(core, p, T, opts, opts.grad_tol, None)
    trace = [TraceEntry("free_endpoint", T, free.objective, free.grad_norm)]
    if free.values[-1] >= term.x_min:
        traj = make_trajectory(p, free.values, T)
        rep = transversality(p, traj, T)
        kkt = KKTRecord("inactive", False, rep.kkt_sign_ok, rep.complementarity)
        return _make_report(
            p, free.values, T,
            objective=free.objective, converged=free.ok, trace=trace,
            grad_norm=free.grad_norm, dJ_dT=None, kkt=kkt, residual_report=rep,
        )
    pinned = _inner_solve(core, p, T, opts, opts.grad_tol, float(term.x_min))
    trace.append(TraceEntry("pinned_endpoint", T, pinned.objective, pinned.grad_norm))
    traj = make_trajectory(p, pinned.values, T)
    rep = transversality(p, traj, T)
    kkt = KKTRecord("binding", True, rep.kkt_sign_ok, rep.complementarity)
    return _make_report(
        p, pinned.values, T,
        objective=pinned.objective, converged=pinned.ok, trace=trace,
        grad_norm=pinned.grad_norm, dJ_dT=None, kkt=kkt, residual_report=rep,
    )


def _solve_truncated_horizontal(
    p: VariationalProblem, core: FunctionalEvaluator, opts: SolverOptions
) -> SolverReport:
    term = p.terminal
    search = _FreeTimeSearch(p, core, opts)
    out = search.run()
    if out["T"] <= term.T_max:
        res = out["result"]
        traj = make_trajectory(p, res.values, out["T"])
        rep = transversality(p, traj, out["T"])
        kkt = KKTRecord("inactive", False, rep.kkt_sign_ok, rep.complementarity)
        return _make_report(
            p, res.values, out["T"],
            objective=res.objective, converged=out["converged"],
            trace=search.trace, grad_norm=res.grad_norm,
            dJ_dT=out["dJ_dT"], kkt=kkt, residual_report=rep,
        )
    pinned = _inner_solve(
        core, p, term.T_max, opts, opts.grad_tol, _endpoint_pin(p, term.T_max)
    )
    trace = search.trace + [
        TraceEntry("pinned_T", term.T_max, pinned.objective, pinned.grad_norm)
    ]
    traj = make_trajectory(p, pinned.values, term.T_max)
    rep = transversality(p, traj, term.T_max)
    kkt = KKTRecord("binding", True, rep.kkt_sign_ok, rep.complementarity)
    djdt = search.core.dJ_dT(
        pinned.values, term.T_max, endpoint_fn=_endpoint_fn(p)
    )
    return _make_report(
        p, pinned.values, term.T_max,
        objective=pinned.objective, converged=pinned.ok, trace=trace,
        grad_norm=pinned.grad_norm, dJ_dT=djdt, kkt=kkt, residual_report=rep,
    )


def _solve_infinite_horizon(
    p: VariationalProblem, core: FunctionalEvaluator, opts: SolverOptions
) -> SolverReport:
    term = p.terminal
    solutions: list[tuple[SampledTrajectory, float]] = []
    trace: list[TraceEntry] = []
    all_ok = True
    last = None
    for T in term.schedule:
        res = _inner_solve(core, p, float(T), opts, opts.grad_tol, None)
        all_ok = all_ok and res.ok
        trace.append(TraceEntry("truncation", float(T), res.objective, res.grad_norm))
        traj = make_trajectory(p, res.values, float(T))
        solutions.append((traj, float(T)))
        last = res
    rep = infinite_horizon_report(p, solutions)
    T_last = float(term.schedule[-1])
    return _make_report(
        p, last.values, T_last,
        objective=last.objective, converged=all_ok, trace=trace,
        grad_norm=last.grad_norm, dJ_dT=None, kkt=None, residual_report=rep,
    )
