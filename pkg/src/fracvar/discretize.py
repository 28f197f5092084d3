"""Discretized functional J(x, T) and its finite-difference gradients.

Trajectories are piecewise linear on a uniform grid over [a, T]; the
running cost is evaluated at the nodes with dx taken from the cached L1
Caputo samples and integrated by the trapezoid rule on the same grid.  A
free terminal time is handled by rescaling the fixed node count onto
[a, T] (the nodes move with T), so the decision vector keeps its
dimension during line searches in T.

Gradients are central finite differences of the exact discrete objective;
the variational first-order formulas are reserved for the residual checks
in :mod:`fracvar.residuals`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exprlang import evaluate, evaluate_array
from .fracops import SampledFunction, UniformGrid, l1_caputo_values
from .problems import CurveConstrained, InfiniteHorizon, VariationalProblem

__all__ = [
    "SampledTrajectory",
    "ObjectiveValue",
    "NonFiniteIntegrandError",
    "make_trajectory",
    "resample",
    "FunctionalEvaluator",
    "evaluate_functional",
    "gradient",
]

# finite-difference step rules (shared with the solver)
NODE_STEP_SCALE = 1e-6
TIME_STEP_SCALE = 1e-5


class NonFiniteIntegrandError(ArithmeticError):
    """The running cost evaluated to nan/inf at some node."""

    def __init__(self, node_index: int, t: float, env: dict):
        self.node_index = node_index
        self.t = t
        self.env = env
        super().__init__(
            f"non-finite integrand at node {node_index} (t={t!r}); env={env!r}"
        )


@dataclass(frozen=True, eq=False)
class SampledTrajectory:
    """x(t) on a uniform grid over [a, T] plus cached Caputo derivative samples.

    Immutable: edits build new trajectories, which keeps the cache coherent
    by construction.
    """

    grid: UniformGrid
    values: np.ndarray
    caputo: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        cap = np.asarray(self.caputo, dtype=float)
        if vals.shape != (self.grid.n_nodes,) or cap.shape != vals.shape:
            raise ValueError("trajectory arrays must match the grid size")
        if not (np.isfinite(vals).all() and np.isfinite(cap).all()):
            raise ValueError("trajectory samples must be finite")
        vals = vals.copy()
        cap = cap.copy()
        vals.flags.writeable = False
        cap.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "caputo", cap)

    @property
    def T(self) -> float:
        return self.grid.b

    def as_sampled_function(self) -> SampledFunction:
        return SampledFunction(self.grid, self.values)


def make_trajectory(
    p: VariationalProblem, values: np.ndarray, T: float
) -> SampledTrajectory:
    """Attach node values on [a, T] to the problem, computing the Caputo cache.

    The first value must agree with x_a (it is snapped exactly onto it).
    """
    values = np.asarray(values, dtype=float).copy()
    if abs(values[0] - p.x_a) > 1e-8 * (1.0 + abs(p.x_a)):
        raise ValueError(
            f"trajectory must start at x_a={p.x_a}, got {values[0]}"
        )
    values[0] = p.x_a
    grid = UniformGrid(p.a, float(T), len(values))
    cap = l1_caputo_values(values, grid.h, p.order.alpha)
    return SampledTrajectory(grid, values, cap)


def resample(p: VariationalProblem, x: SampledTrajectory, n_nodes: int) -> SampledTrajectory:
    """Linear interpolation of a trajectory onto an n_nodes grid over the same span."""
    new_grid = UniformGrid(x.grid.a, x.grid.b, n_nodes)
    vals = np.interp(new_grid.nodes, x.grid.nodes, x.values)
    return make_trajectory(p, vals, x.grid.b)


@dataclass(frozen=True, eq=False)
class ObjectiveValue:
    j: float
    integrand_samples: np.ndarray


class FunctionalEvaluator:
    """Fast repeated evaluation of the discrete J for one problem and node count."""

    def __init__(self, p: VariationalProblem, n_nodes: int):
        if n_nodes < 3:
            raise ValueError("need at least 3 nodes")
        self.p = p
        self.n = int(n_nodes)
        self._idx = np.arange(self.n)
        self._curve = p.endpoint_curve
        self._is_curve_constrained = isinstance(p.terminal, CurveConstrained)

    # -- core evaluation ---------------------------------------------------

    def integrand(self, values: np.ndarray, T: float) -> np.ndarray:
        p = self.p
        h = (T - p.a) / (self.n - 1)
        t = p.a + h * self._idx
        cap = l1_caputo_values(values, h, p.order.alpha)
        env: dict = {"t": t, "x": values, "dx": cap}
        if self._is_curve_constrained:
            env["phiT"] = evaluate(self._curve, {"t": T})
        samples = np.broadcast_to(
            np.asarray(evaluate_array(p.lagrangian, env), dtype=float), (self.n,)
        )
        if not np.isfinite(samples).all():
            bad = int(np.flatnonzero(~np.isfinite(samples))[0])
            raise NonFiniteIntegrandError(
                bad,
                float(t[bad]),
                {"t": float(t[bad]), "x": float(values[bad]), "dx": float(cap[bad])},
            )
        return samples

    def value_and_samples(self, values: np.ndarray, T: float) -> tuple[float, np.ndarray]:
        p = self.p
        h = (T - p.a) / (self.n - 1)
        samples = self.integrand(values, T)
        j = float(np.trapezoid(samples, dx=h))
        if p.terminal_cost is not None:
            j += evaluate(p.terminal_cost, {"T": T, "xT": float(values[-1])})
        if not math.isfinite(j):
            raise NonFiniteIntegrandError(self.n - 1, T, {"j": j})
        return j, samples

    def value(self, values: np.ndarray, T: float) -> float:
        return self.value_and_samples(values, T)[0]

    # -- finite differences -------------------------------------------------

    def node_gradient(self, values: np.ndarray, T: float, indices) -> np.ndarray:
        """Central differences of the discrete J in the selected node values."""
        g = np.empty(len(indices))
        work = np.array(values, dtype=float)
        for k, i in enumerate(indices):
            step = NODE_STEP_SCALE * max(1.0, abs(work[i]))
            keep = work[i]
            work[i] = keep + step
            j_plus = self.value(work, T)
            work[i] = keep - step
            j_minus = self.value(work, T)
            work[i] = keep
            g[k] = (j_plus - j_minus) / (2.0 * step)
        return g

    def dJ_dT(self, values: np.ndarray, T: float, endpoint_fn=None) -> float:
        """Central difference of J in T under grid rescaling.

        ``endpoint_fn`` re-pins the last node to endpoint_fn(T') per probe,
        for variants whose endpoint rides a curve or a fixed level; by
        default the node values are held fixed.
        """
        step = TIME_STEP_SCALE * (T - self.p.a)
        j = []
        for T_probe in (T + step, T - step):
            vals = values
            if endpoint_fn is not None:
                vals = np.array(values, dtype=float)
                vals[-1] = endpoint_fn(T_probe)
            j.append(self.value(vals, T_probe))
        return (j[0] - j[1]) / (2.0 * step)


def evaluate_functional(
    p: VariationalProblem, x: SampledTrajectory, T: float
) -> ObjectiveValue:
    """J(x, T): trapezoid of the running cost plus the terminal cost, if any."""
    _check_span(p, x, T)
    ev = FunctionalEvaluator(p, x.grid.n_nodes)
    j, samples = ev.value_and_samples(x.values, x.grid.b)
    return ObjectiveValue(j=j, integrand_samples=samples)


def gradient(
    p: VariationalProblem, x: SampledTrajectory, T: float
) -> tuple[np.ndarray, float]:
    """Finite-difference gradient in every free node value (node 0 fixed) and T."""
    _check_span(p, x, T)
    ev = FunctionalEvaluator(p, x.grid.n_nodes)
    node_grad = ev.node_gradient(x.values, x.grid.b, range(1, x.grid.n_nodes))
    return node_grad, ev.dJ_dT(x.values, x.grid.b)


def _check_span(p: VariationalProblem, x: SampledTrajectory, T: float) -> None:
    if abs(x.grid.a - p.a) > 1e-12 * (1.0 + abs(p.a)):
        raise ValueError(f"trajectory grid starts at {x.grid.a}, problem at {p.a}")
    if abs(x.grid.b - T) > 1e-9 * (1.0 + abs(T)):
        raise ValueError(f"trajectory spans [a, {x.grid.b}] but T={T}")
    if not p.a < T <= p.b and not isinstance(p.terminal, InfiniteHorizon):
        # truncation schedules may exceed b; everything else must respect it
        raise ValueError(f"T={T} outside (a, b]=({p.a}, {p.b}]")
