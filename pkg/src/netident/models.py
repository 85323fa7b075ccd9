"""Agent and controller models.

Every model function is vectorised and takes its parameters as trailing
arguments, ``fn(x, *params)``; a :class:`NetworkModel` groups agents (and
edges) that share a function so that the stacked maps cost one numpy call
per group.  Custom models just need functions with that signature.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from .exact import as_fraction, lcm_all
from .graphs import Graph, all_pairs, incidence

PROBE_GRID = np.linspace(-10.0, 10.0, 401)
NEURAL_EDGE = 1 - 1e-12


class ModelError(ValueError):
    """Invalid model description or a model that fails validation."""


class DomainError(ValueError):
    """A steady-state relation was evaluated outside its domain."""


# -- builtin functions ---------------------------------------------------------

def linear(x, a):
    return a * x


def linear_slope(x, a):
    return a + 0.0 * x


def neg_linear(x, a):
    return -a * x


def identity_map(x, *_):
    return x


def neural_k_inv(y, tau):
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) >= NEURAL_EDGE):
        raise DomainError("neural relation needs |y| < 1")
    return np.arctanh(y) / tau


def neural_dk_inv(y, tau):
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) >= NEURAL_EDGE):
        raise DomainError("neural relation needs |y| < 1")
    return 1.0 / (tau * (1.0 - y * y))


def neural_f(x, tau):
    return -x / tau


def neural_h(x, *_):
    return np.tanh(x)


def cubic(z, b, c):
    return b * z + c * z ** 3


def cubic_slope(z, b, c):
    return b + 3 * c * z ** 2


def sinh_g(z, b):
    return b * np.sinh(z)


def sinh_slope(z, b):
    return b * np.cosh(z)


# name -> (g, dg, parameter count), for config files
BUILTIN_CONTROLLERS = {
    "linear": (linear, linear_slope, 1),
    "cubic": (cubic, cubic_slope, 2),
    "sinh": (sinh_g, sinh_slope, 1),
}


@dataclass(frozen=True)
class AgentModel:
    """One scalar agent: its steady-state relation and (optionally) its dynamics.

    ``k_inv(y, *params)`` maps a steady output to the steady input that
    produces it; ``f``/``h`` give ``x' = f(x) + u`` and ``y = h(x)``.
    ``domain`` is the open interval of outputs where ``k_inv`` is defined.
    """

    k_inv: Callable
    dk_inv: Callable
    params: tuple = ()
    f: Callable | None = None
    h: Callable | None = None
    domain: tuple[float, float] = (-math.inf, math.inf)
    integrator: bool = False
    spec: str = "custom"

    @property
    def has_dynamics(self) -> bool:
        return self.f is not None and self.h is not None


@dataclass(frozen=True)
class ControllerModel:
    """Static edge controller ``mu = g(zeta, *params)``."""

    g: Callable
    dg: Callable
    params: tuple = ()
    spec: str = "custom"

    def __call__(self, z):
        return self.g(z, *self.params)


def _fmt_rat(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class LtiNetworkModel:
    """Linear agents ``k_i^{-1}(y) = a_i y`` and controllers ``g_ij(z) = b_ij z``.

    ``b`` is defined on every canonical pair, present in the graph or not.
    """

    a: tuple[Fraction, ...]
    b: Mapping[tuple[int, int], Fraction]

    def __post_init__(self):
        a = tuple(as_fraction(v) for v in self.a)
        if not a:
            raise ModelError("need at least one agent")
        if any(v < 0 for v in a):
            raise ModelError("a_i must be nonnegative")
        n = len(a)
        b = {}
        for (i, j), v in dict(self.b).items():
            b[(min(i, j), max(i, j))] = as_fraction(v)
        if set(b) != set(all_pairs(n)):
            raise ModelError("b must be given for every vertex pair")
        if any(v <= 0 for v in b.values()):
            raise ModelError("b_ij must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", dict(sorted(b.items())))

    @classmethod
    def uniform(cls, n: int, a=1, b=1) -> "LtiNetworkModel":
        return cls(tuple(as_fraction(a) for _ in range(n)),
                   {p: as_fraction(b) for p in all_pairs(n)})

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, a=1, max_num=9, max_den=9):
        """Uniform ``a`` and random ``b_ij = p/q`` with ``1 <= p <= max_num``, ``q <= max_den``."""
        b = {p: Fraction(int(rng.integers(1, max_num + 1)), int(rng.integers(1, max_den + 1)))
             for p in all_pairs(n)}
        return cls(tuple(as_fraction(a) for _ in range(n)), b)

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def a_nonzero(self) -> bool:
        return any(v > 0 for v in self.a)

    def A(self) -> np.ndarray:
        A = np.full((self.n, self.n), Fraction(0), dtype=object)
        for i, v in enumerate(self.a):
            A[i, i] = v
        return A

    def weights(self, g: Graph) -> list[Fraction]:
        return [self.b[e] for e in g.edges]

    def denominator_lcm(self) -> int:
        if "_lcm" not in self.__dict__:
            object.__setattr__(self, "_lcm",
                               lcm_all(v.denominator for v in (*self.a, *self.b.values())))
        return self.__dict__["_lcm"]

    def max_row_weight(self) -> Fraction:
        """Largest possible diagonal entry of ``A + L`` over all graphs."""
        if "_max_row" not in self.__dict__:
            rows = list(self.a)
            for (p, q), v in self.b.items():
                rows[p - 1] += v
                rows[q - 1] += v
            object.__setattr__(self, "_max_row", max(rows))
        return self.__dict__["_max_row"]

    def config_text(self) -> str:
        lines = [f"n={self.n}"]
        lines += [f"agent {i}: lti a={_fmt_rat(v)}" for i, v in enumerate(self.a, 1)]
        lines += [f"ctrl {i} {j}: lti b={_fmt_rat(v)}" for (i, j), v in self.b.items()]
        return "\n".join(lines) + "\n"


class _Stack:
    """Groups items sharing a function so a stacked map is one call per group."""

    def __init__(self, items, fn_attr):
        groups: dict = {}
        for idx, it in enumerate(items):
            fn = getattr(it, fn_attr)
            groups.setdefault(fn, []).append(idx)
        self.groups = []
        for fn, idxs in groups.items():
            cols = [np.array(c, dtype=float) for c in zip(*(items[k].params for k in idxs))]
            self.groups.append((fn, np.array(idxs), cols))
        self.size = len(items)

    def __call__(self, x):
        if len(self.groups) == 1:
            fn, _, cols = self.groups[0]
            return np.broadcast_to(fn(x, *cols), (self.size,)).astype(float)
        out = np.empty(self.size)
        for fn, idxs, cols in self.groups:
            out[idxs] = fn(x[idxs], *cols)
        return out


class Coupling:
    """Stacked controller maps restricted to the edges of one graph."""

    def __init__(self, model: "NetworkModel", graph: Graph):
        self.graph = graph
        self.E = incidence(graph).astype(float)
        self.head = np.array([i - 1 for i, _ in graph.edges], dtype=int)
        self.tail = np.array([j - 1 for _, j in graph.edges], dtype=int)
        ctrls = [model.controllers[e] for e in graph.edges]
        self._g = _Stack(ctrls, "g") if ctrls else None
        self._dg = _Stack(ctrls, "dg") if ctrls else None
        # all-linear controllers: the flow is a fixed weighted Laplacian
        self.matrix = None
        if all(c.g is linear for c in ctrls):
            b = np.array([c.params[0] for c in ctrls], dtype=float)
            self.matrix = (self.E * b) @ self.E.T

    def edge_flows(self, y):
        if self._g is None:
            return np.zeros(0)
        return self._g(y[self.head] - y[self.tail])

    def flow(self, y):
        """``E g(E^T y)``."""
        if self.matrix is not None:
            return self.matrix @ y
        return self.E @ self.edge_flows(y)

    def jacobian(self, y):
        """``E diag(g'(E^T y)) E^T``."""
        if self.matrix is not None:
            return self.matrix
        d = self._dg(y[self.head] - y[self.tail])
        return (self.E * d) @ self.E.T


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Agents plus a controller for every vertex pair."""

    agents: tuple[AgentModel, ...]
    controllers: Mapping[tuple[int, int], ControllerModel]
    lti: LtiNetworkModel | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        agents = tuple(self.agents)
        n = len(agents)
        if n < 1:
            raise ModelError("need at least one agent")
        ctrls = {(min(p), max(p)): c for p, c in dict(self.controllers).items()}
        if set(ctrls) != set(all_pairs(n)):
            raise ModelError(f"need a controller for each of the {n * (n - 1) // 2} pairs")
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "controllers", dict(sorted(ctrls.items())))
        self._cache["k_inv"] = _Stack(agents, "k_inv")
        self._cache["dk_inv"] = _Stack(agents, "dk_inv")
        if all(ag.has_dynamics for ag in agents):
            self._cache["f"] = _Stack(agents, "f")
            self._cache["h"] = _Stack(agents, "h")

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def has_dynamics(self) -> bool:
        return "f" in self._cache

    @property
    def all_integrators(self) -> bool:
        return all(ag.integrator for ag in self.agents)

    def k_inv(self, y):
        return self._cache["k_inv"](np.asarray(y, dtype=float))

    def dk_inv(self, y):
        return self._cache["dk_inv"](np.asarray(y, dtype=float))

    def f(self, x):
        return self._cache["f"](x)

    def h(self, x):
        return self._cache["h"](x)

    def in_domain(self, y) -> bool:
        return all(lo < v < hi for v, (lo, hi) in zip(y, (ag.domain for ag in self.agents)))

    def coupling(self, graph: Graph) -> Coupling:
        if graph.n != self.n:
            raise ModelError(f"graph has {graph.n} vertices, model has {self.n}")
        key = ("coupling", graph)
        c = self._cache.get(key)
        if c is None:
            c = self._cache[key] = Coupling(self, graph)
        return c

    def residual(self, graph: Graph, y, w) -> np.ndarray:
        """Left side of the steady-state equation plus ``w``: ``k^{-1}(y) + E g(E^T y) + w``."""
        y = np.asarray(y, dtype=float)
        return self.k_inv(y) + self.coupling(graph).flow(y) + np.asarray(w, dtype=float)

    def config_text(self) -> str:
        lines = [f"n={self.n}"]
        lines += [f"agent {i}: {ag.spec}" for i, ag in enumerate(self.agents, 1)]
        lines += [f"ctrl {i} {j}: {c.spec}" for (i, j), c in self.controllers.items()]
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.config_text().encode()).hexdigest()[:16]

    def validate(self, grid: np.ndarray = PROBE_GRID, consistency: bool = True) -> "NetworkModel":
        """Probe-grid checks of monotonicity and of relation/dynamics consistency."""
        for i, ag in enumerate(self.agents, 1):
            validate_agent(ag, grid, consistency, label=f"agent {i}")
        for pair, c in self.controllers.items():
            validate_controller(c, grid, label=f"controller {pair}")
        return self


def _grid_in(domain, grid):
    lo, hi = domain
    pts = grid[(grid > lo) & (grid < hi)]
    if len(pts) < 21:
        # relation lives on a narrow interval: probe its interior instead
        a = max(lo, grid[0])
        b = min(hi, grid[-1])
        pts = np.linspace(a, b, 403)[1:-1]
    return pts


def validate_agent(ag: AgentModel, grid=PROBE_GRID, consistency=True, label="agent"):
    pts = _grid_in(ag.domain, grid)
    d = np.broadcast_to(ag.dk_inv(pts, *ag.params), pts.shape)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ModelError(f"{label}: steady-state relation is not monotone on the probe grid")
    if consistency and ag.has_dynamics and not ag.integrator:
        for u in (-1.0, -0.1, 0.0, 0.1, 1.0):
            x = _equilibrium(ag, u)
            y = float(ag.h(x, *ag.params))
            if not ag.domain[0] < y < ag.domain[1]:
                raise ModelError(f"{label}: equilibrium output {y} outside relation domain")
            got = float(ag.k_inv(y, *ag.params))
            if abs(got - u) > 1e-6 * max(1.0, abs(u)):
                raise ModelError(
                    f"{label}: k_inv(h(x*)) = {got} does not reproduce input {u}")


def _equilibrium(ag: AgentModel, u: float) -> float:
    """Solve ``f(x) + u = 0`` by bracketing."""
    fun = lambda x: float(ag.f(x, *ag.params)) + u  # noqa: E731
    if fun(0.0) == 0.0:
        return 0.0
    lo, hi = -1.0, 1.0
    for _ in range(60):
        if fun(lo) * fun(hi) <= 0:
            return brentq(fun, lo, hi, xtol=1e-14, rtol=1e-14)
        lo, hi = 2 * lo, 2 * hi
    raise ModelError("agent dynamics have no equilibrium for a probe input")


def validate_controller(c: ControllerModel, grid=PROBE_GRID, label="controller"):
    d = np.broadcast_to(c.dg(grid, *c.params), grid.shape)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise ModelError(f"{label}: derivative is not strictly positive on the probe grid")


# -- constructors ----------------------------------------------------------------

def lti_agent(a) -> AgentModel:
    a = as_fraction(a)
    return AgentModel(linear, linear_slope, (float(a),), f=neg_linear, h=identity_map,
                      integrator=(a == 0), spec=f"lti a={_fmt_rat(a)}")


def lti_controller(b) -> ControllerModel:
    b = as_fraction(b)
    return ControllerModel(linear, linear_slope, (float(b),), spec=f"lti b={_fmt_rat(b)}")


def lti_to_network(m: LtiNetworkModel) -> NetworkModel:
    """Realise the linear relations as ``x' = -a x + u``, ``y = x``.

    With ``a_i = 0`` the agent is an integrator and ``k_i^{-1} = 0``.
    """
    return NetworkModel(tuple(lti_agent(a) for a in m.a),
                        {p: lti_controller(b) for p, b in m.b.items()}, lti=m)


def neural_agent(tau: float, b: float) -> tuple[AgentModel, ControllerModel]:
    """Neuron ``x' = -x/tau + u``, ``y = tanh(x)`` and its coupling ``g(z) = b z``."""
    if not tau > 0 or not b > 0:
        raise ModelError("tau and b must be positive")
    agent = AgentModel(neural_k_inv, neural_dk_inv, (float(tau),), f=neural_f, h=neural_h,
                       domain=(-1.0, 1.0), spec=f"neural tau={float(tau)!r}")
    return agent, ControllerModel(linear, linear_slope, (float(b),), spec=f"fn linear {float(b)!r}")


def neural_network(taus: Sequence[float], b: float = 0.1) -> NetworkModel:
    agents = tuple(neural_agent(t, b)[0] for t in taus)
    ctrl = neural_agent(1.0, b)[1]
    return NetworkModel(agents, {p: ctrl for p in all_pairs(len(taus))})


def random_taus(n: int, seed: int, low: float = 0.5, high: float = 1.0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(low, high, size=n)


# -- config files -------------------------------------------------------------------

_AGENT_RE = re.compile(r"^agent\s+(\*|\d+)\s*:\s*(.+)$")
_CTRL_RE = re.compile(r"^ctrl\s+(\*|\d+)\s+(\*|\d+)\s*:\s*(.+)$")


def _kv(text: str, key: str) -> str:
    m = re.fullmatch(rf"{key}\s*=\s*(\S+)", text.strip())
    if not m:
        raise ModelError(f"expected '{key}=<value>', got {text!r}")
    return m.group(1)


def _parse_agent(body: str):
    kind, _, rest = body.strip().partition(" ")
    if kind == "lti":
        return "lti", as_fraction(_kv(rest, "a"))
    if kind == "neural":
        return "neural", float(_kv(rest, "tau"))
    raise ModelError(f"unknown agent kind {kind!r}")


def _parse_ctrl(body: str):
    parts = body.split()
    if parts[0] == "lti":
        return "lti", as_fraction(_kv(" ".join(parts[1:]), "b"))
    if parts[0] == "fn":
        if len(parts) < 2 or parts[1] not in BUILTIN_CONTROLLERS:
            raise ModelError(f"unknown controller function in {body!r}")
        g, dg, k = BUILTIN_CONTROLLERS[parts[1]]
        params = tuple(float(v) for v in parts[2:])
        if len(params) != k:
            raise ModelError(f"controller {parts[1]} takes {k} parameter(s)")
        return "fn", ControllerModel(g, dg, params, spec=" ".join(["fn", parts[1], *map(repr, params)]))
    raise ModelError(f"unknown controller kind {parts[0]!r}")


def parse_model(text: str, validate: bool = True) -> NetworkModel:
    """Parse a model config.

    Lines: ``n=<int>``, ``agent <i|*>: lti a=<p/q>`` or ``agent <i|*>: neural
    tau=<real>``, ``ctrl <i|*> <j|*>: lti b=<p/q>`` or ``ctrl <i> <j>: fn
    <name> <params...>``.  Specific entries override wildcards.  When every
    agent and controller is ``lti`` the model carries its exact
    :class:`LtiNetworkModel`.
    """
    n = None
    agents: dict = {}
    ctrls: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.replace(" ", "").startswith("n="):
            n = int(line.replace(" ", "")[2:])
            continue
        if m := _AGENT_RE.match(line):
            agents[m.group(1)] = _parse_agent(m.group(2))
            continue
        if m := _CTRL_RE.match(line):
            i, j = m.group(1), m.group(2)
            if (i == "*") != (j == "*"):
                raise ModelError("controller wildcard must be 'ctrl * *'")
            key = "*" if i == "*" else (min(int(i), int(j)), max(int(i), int(j)))
            ctrls[key] = _parse_ctrl(m.group(3))
            continue
        raise ModelError(f"cannot parse model line {raw!r}")
    if n is None:
        raise ModelError("model config needs an 'n=<int>' line")

    agent_specs = []
    for i in range(1, n + 1):
        spec = agents.get(str(i), agents.get("*"))
        if spec is None:
            raise ModelError(f"no model for agent {i}")
        agent_specs.append(spec)
    ctrl_specs = {}
    for p in all_pairs(n):
        spec = ctrls.get(p, ctrls.get("*"))
        if spec is None:
            raise ModelError(f"no controller for pair {p}")
        ctrl_specs[p] = spec
    extra = [k for k in agents if k != "*" and not 1 <= int(k) <= n]
    if extra:
        raise ModelError(f"agent index out of range: {extra}")

    if all(s[0] == "lti" for s in agent_specs) and all(s[0] == "lti" for s in ctrl_specs.values()):
        model = lti_to_network(LtiNetworkModel(tuple(s[1] for s in agent_specs),
                                               {p: s[1] for p, s in ctrl_specs.items()}))
    else:
        built = []
        for kind, val in agent_specs:
            if kind == "lti":
                built.append(lti_agent(val))
            else:
                built.append(neural_agent(val, 1.0)[0])
        controllers = {}
        for p, (kind, val) in ctrl_specs.items():
            controllers[p] = lti_controller(val) if kind == "lti" else val
        model = NetworkModel(tuple(built), controllers)
    if validate:
        model.validate()
    return model
