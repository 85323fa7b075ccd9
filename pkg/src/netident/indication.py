"""Indication vectors: random and radix constructions, separation index, Gaussian bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .graphs import DEFAULT_FAMILY_CAP, Graph, GraphFamily, enumerate_family
from .models import LtiNetworkModel
from .steady_state import build_X, solve_lti, solve_nonlinear


class SeparationError(ValueError):
    """The input does not separate the family (two graphs share a steady state)."""

    def __init__(self, msg, pair=None):
        super().__init__(msg)
        self.pair = pair


@dataclass(frozen=True)
class IndicationVector:
    w: tuple
    provenance: dict
    family: GraphFamily | None = None

    @property
    def n(self) -> int:
        return len(self.w)

    @property
    def mode(self) -> str:
        return self.provenance["mode"]

    @property
    def exact(self) -> bool:
        return all(isinstance(v, (int, Fraction)) for v in self.w)

    def scaled(self, beta) -> "IndicationVector":
        prov = dict(self.provenance)
        prov["scale"] = prov.get("scale", 1) * beta
        return IndicationVector(tuple(beta * v for v in self.w), prov, self.family)


def gaussian_w(n: int, seed: int, scale: float = 1.0, family: GraphFamily | None = None
               ) -> IndicationVector:
    """``scale * z`` with ``z`` i.i.d. standard normal from a seeded generator."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    z = np.random.default_rng(seed).standard_normal(n)
    w = tuple(float(scale * v) for v in z)
    return IndicationVector(w, {"mode": "gaussian", "seed": seed, "scale": scale}, family)


def _lti_members(family: GraphFamily, m: LtiNetworkModel, cap: int):
    # A = 0 has no steady-state map on disconnected graphs: connected members only
    for g in enumerate_family(family, cap):
        if m.a_nonzero or g.is_connected():
            yield g


def radix_bounds(family: GraphFamily, m: LtiNetworkModel, cap: int = DEFAULT_FAMILY_CAP
                 ) -> tuple[int, int]:
    """``(N, D)``: largest |numerator| and lcm of denominators over all entries of all ``X_G``."""
    if family.n != m.n:
        raise ValueError("family and model disagree on n")
    N, D = 0, 1
    for g in _lti_members(family, m, cap):
        X = build_X(g, m, verify=False).X
        for v in X.flat:
            N = max(N, abs(v.numerator))
            D = math.lcm(D, v.denominator)
    return N, D


def radix_M(N: int, D: int) -> int:
    """Smallest admissible radix: ``(2N + 1) D + 1``."""
    return (2 * N + 1) * D + 1


def radix_from_bounds(n: int, N: int, D: int, M: int | None = None,
                      family: GraphFamily | None = None) -> IndicationVector:
    if M is None:
        M = radix_M(N, D)
    if M <= (2 * N + 1) * D:
        raise ValueError(f"radix M={M} must exceed (2N+1)D = {(2 * N + 1) * D}")
    w = tuple(M ** i for i in range(n))
    prov = {"mode": "radix", "M": M, "N": N, "D": D}
    prov.update(measurement_budget(n, M, N, D))
    return IndicationVector(w, prov, family)


def radix_w(family: GraphFamily, m: LtiNetworkModel, M: int | None = None,
            cap: int = DEFAULT_FAMILY_CAP) -> IndicationVector:
    """``w = (1, M, ..., M^{n-1})`` with ``M > (2N+1)D`` for the family's bounds."""
    N, D = radix_bounds(family, m, cap)
    return radix_from_bounds(m.n, N, D, M, family)


def measurement_budget(n: int, M: int, N: int, D: int) -> dict:
    """Tolerable output error for exact digit decoding.

    Decoding rounds ``D * (-y_i)`` to an integer, so each output may be off by
    strictly less than ``1/(2D)``.  Outputs can be as large as
    ``N * sum(M^i)``, which fixes the relative precision a measurement needs;
    both are reported as base-10 logarithms since they overflow floats.
    """
    magnitude = max(1, N * sum(M ** i for i in range(n)))
    log_abs = -math.log10(2 * D)
    return {"log10_abs_error_budget": log_abs,
            "log10_max_output": math.log10(magnitude),
            "log10_rel_precision_needed": log_abs - math.log10(magnitude)}


def applied_input(w: Sequence, model) -> list:
    """The input actually injected: projected onto zero-sum vectors for all-integrator models.

    Integrator networks have steady states only for zero-sum inputs, and the
    steady-state map there factors through that projection anyway.
    """
    lti = model if isinstance(model, LtiNetworkModel) else model.lti
    integrators = (not lti.a_nonzero) if lti is not None else model.all_integrators
    if not integrators:
        return list(w)
    if all(isinstance(v, (int, Fraction)) for v in w):
        mean = Fraction(sum(w), len(w))
        return [Fraction(v) - mean for v in w]
    arr = np.asarray(w, dtype=float)
    return list(arr - arr.mean())


@dataclass
class SeparationReport:
    epsilon: float
    epsilon_sq: object  # Fraction on the exact path, float otherwise
    pair: tuple[Graph, Graph] | None
    outputs: dict = field(default_factory=dict)
    distances: dict | None = None

    @property
    def separates(self) -> bool:
        return self.epsilon > 0


def family_outputs(w, family: GraphFamily, model, tol: float = 1e-10,
                   cap: int = DEFAULT_FAMILY_CAP) -> dict[Graph, np.ndarray]:
    """Steady state of every family member under ``w`` (exact when possible)."""
    lti = model if isinstance(model, LtiNetworkModel) else model.lti
    w = applied_input(w, model)
    out = {}
    if lti is not None and all(isinstance(v, (int, Fraction)) for v in w):
        for g in _lti_members(family, lti, cap):
            out[g] = solve_lti(g, lti, w).y
        return out
    if isinstance(model, LtiNetworkModel):
        from .models import lti_to_network
        model = lti_to_network(model)
    for g in enumerate_family(family, cap):
        if model.all_integrators and not g.is_connected():
            continue
        out[g] = solve_nonlinear(g, model, w, tol=tol).y
    return out


def separation_from_outputs(outputs: dict, keep_table: bool = False) -> SeparationReport:
    """Minimum pairwise Euclidean distance, exact if the outputs are Fractions."""
    graphs = list(outputs)
    if len(graphs) < 2:
        return SeparationReport(math.inf, math.inf, None, outputs)
    is_exact = all(isinstance(v, Fraction) for y in outputs.values() for v in y)
    if is_exact and len(graphs) <= 256:
        return _exact_separation(outputs, graphs, keep_table)
    Y = np.array([[float(v) for v in outputs[g]] for g in graphs])
    best_sq, best_pair = math.inf, None
    candidates = []
    # float screen in blocks, then exact recomputation of the near-minimal pairs
    for i in range(len(graphs) - 1):
        d2 = ((Y[i + 1:] - Y[i]) ** 2).sum(axis=1)
        j = int(np.argmin(d2))
        if d2[j] < best_sq:
            best_sq, best_pair = float(d2[j]), (i, i + 1 + j)
        if is_exact:
            candidates.append((i, d2))
    distances = None
    if keep_table:
        distances = {}
        for i in range(len(graphs)):
            for j in range(i + 1, len(graphs)):
                distances[(graphs[i], graphs[j])] = float(np.linalg.norm(Y[i] - Y[j]))
    if not is_exact:
        return SeparationReport(math.sqrt(best_sq), best_sq,
                                (graphs[best_pair[0]], graphs[best_pair[1]]), outputs, distances)
    cutoff = best_sq * (1 + 1e-6) + 1e-300
    exact_best, exact_pair = None, None
    for i, d2 in candidates:
        for off in np.nonzero(d2 <= cutoff)[0]:
            j = i + 1 + int(off)
            d = sum((a - b) ** 2 for a, b in zip(outputs[graphs[i]], outputs[graphs[j]]))
            if exact_best is None or d < exact_best:
                exact_best, exact_pair = d, (graphs[i], graphs[j])
    return SeparationReport(math.sqrt(exact_best), exact_best, exact_pair, outputs, distances)


def _exact_separation(outputs, graphs, keep_table):
    best, pair = None, None
    distances = {} if keep_table else None
    for i, g in enumerate(graphs):
        yg = outputs[g]
        for h in graphs[i + 1:]:
            d = sum((a - b) ** 2 for a, b in zip(yg, outputs[h]))
            if keep_table:
                distances[(g, h)] = math.sqrt(d)
            if best is None or d < best:
                best, pair = d, (g, h)
    return SeparationReport(math.sqrt(best), best, pair, outputs, distances)


def separation_index(w, family: GraphFamily, model, tol: float = 1e-10,
                     keep_table: bool = False, cap: int = DEFAULT_FAMILY_CAP) -> SeparationReport:
    """Separation index of ``w`` over ``family`` by brute force over all pairs."""
    if isinstance(w, IndicationVector):
        w = w.w
    return separation_from_outputs(family_outputs(w, family, model, tol, cap), keep_table)


def std_normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def bound_beta(m: LtiNetworkModel) -> Fraction:
    if m.a_nonzero:
        return min(m.a)
    n = m.n
    return min(m.b.values()) / math.comb(n, 2)


def epsilon_bound(delta: float, m: LtiNetworkModel) -> tuple[float, float]:
    """Lower bound ``1 - 2^{n^2} (2 Phi(delta / 2 beta) - 1)`` on ``P(eps >= delta)``.

    Returns ``(raw, clamped)``; the raw value is often negative (vacuous).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    beta = float(bound_beta(m))
    x = math.inf if beta == 0 else delta / (2 * beta)
    # 2 Phi(x) - 1 == erf(x / sqrt 2), without cancellation for small x
    tail = 1.0 if math.isinf(x) else math.erf(x / math.sqrt(2.0))
    raw = 1.0 - 2.0 ** (m.n ** 2) * tail
    return raw, min(1.0, max(0.0, raw))
