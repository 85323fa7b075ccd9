"""Closed-loop simulation with fixed-step classical Runge-Kutta.

The simulated system is

    x_i' = f_i(x_i) + u_i - w_i,   y_i = h_i(x_i),   u = -E g(E^T y),

whose equilibria are exactly the solutions of
``k^{-1}(y) + E g(E^T y) = -w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .detection import AmbiguousDetection, LookupTable, detect
from .graphs import Graph, GraphFamily
from .indication import gaussian_w
from .models import NetworkModel, neural_network, random_taus
from .steady_state import NonConvergence, SteadyStateError, solve_nonlinear


class DivergenceError(RuntimeError):
    pass


class StepTooLarge(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    x: np.ndarray
    w: np.ndarray
    schedule: list = field(default_factory=list)  # [(t_start, Graph)]

    def to_csv(self, with_state: bool = True) -> str:
        n = self.y.shape[1]
        cols = ["t"] + [f"y{i}" for i in range(1, n + 1)]
        if with_state:
            cols += [f"x{i}" for i in range(1, n + 1)]
        lines = [",".join(cols)]
        for k in range(len(self.t)):
            vals = [self.t[k], *self.y[k]] + (list(self.x[k]) if with_state else [])
            lines.append(",".join(format(float(v), ".17g") for v in vals))
        return "\n".join(lines) + "\n"


@dataclass
class ConvergenceVerdict:
    converged: bool
    y: np.ndarray
    x: np.ndarray
    residual: float
    rate: float
    t: float
    solver_gap: float | None = None


class _Rhs:
    def __init__(self, model: NetworkModel, graph: Graph, w):
        if not model.has_dynamics:
            raise ValueError("model has no dynamics to simulate")
        self.model = model
        self.coupling = model.coupling(graph)
        self.w = np.asarray(w, dtype=float)

    def __call__(self, x):
        m = self.model
        return m.f(x) - self.coupling.flow(m.h(x)) - self.w


def _rk4(rhs, x, h):
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_step(rhs, x, h, step_tol):
    """Richardson estimate of the local error from one full vs two half steps."""
    full = _rk4(rhs, x, h)
    half = _rk4(rhs, _rk4(rhs, x, h / 2), h / 2)
    err = np.max(np.abs(full - half)) / 15.0
    if err > step_tol * max(1.0, float(np.max(np.abs(x)))):
        raise StepTooLarge(f"local error estimate {err:.3e} exceeds tolerance; reduce h={h}")


def _integrate_steps(rhs, x, h, nsteps, record_every, check_every, step_tol, h_fn,
                     rate_window=None):
    """Advance ``nsteps``.

    Returns the final state, the states recorded every ``record_every`` steps
    and the largest finite-difference ``|y'|_inf`` over the last
    ``rate_window`` steps (all steps by default).
    """
    rec = []
    max_rate = 0.0
    rate_from = 0 if rate_window is None else nsteps - rate_window
    y_prev = h_fn(x)
    for k in range(1, nsteps + 1):
        if check_every and k % check_every == 1:
            _check_step(rhs, x, h, step_tol)
        x = _rk4(rhs, x, h)
        y = h_fn(x)
        if k > rate_from:
            rate = float(np.max(np.abs(y - y_prev))) / h
            if rate > max_rate:
                max_rate = rate
        y_prev = y
        if not np.all(np.isfinite(x)):
            raise DivergenceError("state became non-finite")
        if record_every and k % record_every == 0:
            rec.append(x)
    return x, rec, max_rate


def integrate(model: NetworkModel, graph: Graph, w, x0=None, t_span=(0.0, 10.0),
              h: float = 1e-3, record_every: int = 10, check_every: int = 1000,
              step_tol: float = 1e-9) -> Trajectory:
    """Fixed-step RK4 from ``t_span[0]`` to ``t_span[1]``, recording every ``record_every`` steps."""
    t0, t1 = t_span
    nsteps = int(round((t1 - t0) / h))
    x = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if x.shape != (model.n,):
        raise ValueError(f"initial state must have length {model.n}")
    rhs = _Rhs(model, graph, w)
    x_end, rec, _ = _integrate_steps(rhs, x, h, nsteps, record_every, check_every, step_tol,
                                     model.h)
    xs = np.array([x] + rec) if rec else np.array([x])
    ts = t0 + h * record_every * np.arange(len(xs))
    if not rec or nsteps % record_every:
        xs = np.vstack([xs, x_end])
        ts = np.append(ts, t0 + h * nsteps)
    ys = np.array([model.h(r) for r in xs])
    return Trajectory(ts, ys, xs, rhs.w, [(t0, graph)])


def _verdict(model, graph, w, x, t, rate, tol_rate, tol_res, check_solver):
    y = model.h(x)
    residual = float(np.max(np.abs(model.residual(graph, y, w))))
    converged = rate < tol_rate and residual < tol_res
    gap = None
    if check_solver:
        try:
            ys = solve_nonlinear(graph, model, w).y
            yc = y - y.mean() if model.all_integrators else y
            gap = float(np.max(np.abs(yc - ys)))
        except (NonConvergence, SteadyStateError):
            gap = None
    return ConvergenceVerdict(converged, y, x, residual, rate, t, gap)


def run_to_convergence(model: NetworkModel, graph: Graph, w, x0=None, tol_rate: float = 1e-9,
                       tol_res: float = 1e-9, hold: float = 1.0, t_max: float = 200.0,
                       h: float = 1e-3, check_solver: bool = True, t0: float = 0.0,
                       step_tol: float = 1e-9) -> ConvergenceVerdict:
    """Integrate until ``|y'|_inf < tol_rate`` over a whole hold window and the
    steady-state residual is below ``tol_res``.

    The terminal output is cross-checked against the Newton solver
    (``solver_gap``).  Raises :class:`ConvergenceError` after ``t_max``.
    """
    x = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    rhs = _Rhs(model, graph, w)
    steps = max(1, int(round(hold / h)))
    t = t0
    while True:
        x, _, rate = _integrate_steps(rhs, x, h, steps, 0, 1000, step_tol, model.h)
        t += steps * h
        y = model.h(x)
        if rate < tol_rate:
            residual = float(np.max(np.abs(model.residual(graph, y, w))))
            if residual < tol_res:
                return _verdict(model, graph, w, x, t, rate, tol_rate, tol_res, check_solver)
        if t - t0 >= t_max:
            raise ConvergenceError(f"no convergence within {t_max} time units (rate {rate:.3e})")


@dataclass
class ScenarioResult:
    trajectory: Trajectory
    verdicts: list
    detections: list  # DetectionResult or AmbiguousDetection per segment


def run_scenario(model: NetworkModel, schedule: Sequence[tuple[float, Graph]], w, x0=None,
                 table: LookupTable | None = None, t_end: float | None = None,
                 h: float = 1e-3, record_every: int = 10, settle_last: bool = True,
                 tol_rate: float = 1e-9, tol_res: float = 1e-9) -> ScenarioResult:
    """Simulate through graph switches, detecting the graph at the end of every segment.

    The state carries over across switches.  Segment ``k`` runs from
    ``schedule[k][0]`` to the next switch time; the last one runs until
    ``t_end`` or, with ``settle_last``, on until it has converged.
    """
    times = [float(t) for t, _ in schedule]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("schedule times must be increasing")
    if t_end is None:
        t_end = times[-1] + (times[-1] - times[-2] if len(times) > 1 else 10.0)
    x = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    w = np.asarray(w, dtype=float)
    ts, xs = [np.array([times[0]])], [x[None, :]]
    verdicts, detections = [], []
    bounds = times[1:] + [t_end]
    for k, ((start, graph), stop) in enumerate(zip(schedule, bounds)):
        rhs = _Rhs(model, graph, w)
        nsteps = int(round((stop - start) / h))
        hold = min(nsteps, int(round(1.0 / h)))
        x, rec, rate = _integrate_steps(rhs, x, h, nsteps, record_every, 1000, 1e-9, model.h,
                                        rate_window=hold)
        verdict = _verdict(model, graph, w, x, stop, rate, tol_rate, tol_res, True)
        if k == len(schedule) - 1 and settle_last and not verdict.converged:
            verdict = run_to_convergence(model, graph, w, x, tol_rate, tol_res, h=h, t0=stop)
            x = verdict.x
        if rec:
            ts.append(start + h * record_every * np.arange(1, len(rec) + 1))
            xs.append(np.array(rec))
        if not np.isclose(ts[-1][-1], verdict.t):
            ts.append(np.array([verdict.t]))
            xs.append(x[None, :])
        verdicts.append(verdict)
        if table is not None:
            try:
                detections.append(detect(verdict.y, table, strict=False))
            except AmbiguousDetection as err:
                detections.append(err)
    T = np.concatenate(ts)
    X = np.vstack(xs)
    Y = np.array([model.h(r) for r in X])
    return ScenarioResult(Trajectory(T, Y, X, w, list(schedule)), verdicts, detections)


# -- case study ---------------------------------------------------------------------

CASE_STUDY_EDGES = ((1, 2), (2, 3), (2, 5), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9),
                    (9, 10), (6, 10), (3, 8))
CASE_STUDY_CUTS = ((6, 10), (1, 2))


@dataclass
class CaseStudy:
    model: NetworkModel
    w: np.ndarray
    graphs: list  # original, first cut, both cuts
    schedule: list
    family: GraphFamily
    seed: int


def case_study(seed: int = 1, b: float = 0.1, w_scale: float = 1.0,
               switch_times=(0.0, 10.0, 20.0, 30.0)) -> CaseStudy:
    """Ten neurons on a fixed connected graph; two edges are cut in turn and then restored.

    ``tau_i`` are drawn uniformly from ``[0.5, 1]`` and ``w`` is a Gaussian
    draw, both from ``seed``.  The detection family holds the three scheduled
    graphs and every single-edge deletion of the original.
    """
    g0 = Graph(10, CASE_STUDY_EDGES)
    g1 = g0.without(CASE_STUDY_CUTS[0])
    g2 = g1.without(CASE_STUDY_CUTS[1])
    model = neural_network(random_taus(10, seed), b)
    w = np.asarray(gaussian_w(10, seed, w_scale).w)
    members = [g0, g2] + [g0.without(e) for e in g0.edges]
    family = GraphFamily.explicit(members)
    schedule = list(zip(switch_times, [g0, g1, g2, g0]))
    return CaseStudy(model, w, [g0, g1, g2], schedule, family, seed)
