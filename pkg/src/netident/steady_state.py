"""Steady states of the diffusively coupled network.

A vector ``y`` is a closed-loop steady state under the constant input ``w``
iff

    k^{-1}(y) + E g(E^T y) = -w,

with ``E`` the incidence matrix of the graph.  For linear agents and
controllers this reads ``(A + E B E^T) y = -w``, so ``y = -X w`` with ``X``
the steady-state map built by :func:`build_X`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import exact
from .graphs import Graph, laplacian
from .models import DomainError, LtiNetworkModel, NetworkModel


class SteadyStateError(ValueError):
    """No (unique) steady state exists for the requested configuration."""


class NonConvergence(RuntimeError):
    pass


@dataclass
class SteadyState:
    y: np.ndarray
    residual: np.ndarray
    graph: Graph
    w: np.ndarray
    tol: float = 0.0
    iterations: int = 0

    @property
    def residual_norm(self) -> float:
        if len(self.residual) == 0:
            return 0.0
        return float(max(abs(v) for v in self.residual))

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.y)


@dataclass
class SteadyStateMap:
    """The linear map ``-w -> y`` of an LTI network on one graph.

    For ``kind == "A_nonzero"`` ``X = (A + L)^{-1}``.  For ``"A_zero"``
    ``X`` is the inverse of ``L`` restricted to the zero-sum subspace,
    composed with the projection onto it (the Moore-Penrose inverse of
    ``L``); ``operator`` holds ``L`` itself and ``projector`` holds
    ``I - 11^T/n``.
    """

    kind: str
    X: np.ndarray
    graph: Graph
    operator: np.ndarray
    projector: np.ndarray | None = None

    def apply(self, w) -> np.ndarray:
        """Steady output ``y = -X w``."""
        return -exact.matmul(self.X, exact.fraction_array(w))


def _J_over_n(n: int) -> np.ndarray:
    return np.full((n, n), Fraction(1, n), dtype=object)


def _check_a_zero(g: Graph):
    if not g.is_connected():
        raise SteadyStateError(
            "with A = 0 the graph must be connected (E B E^T is singular on the zero-sum space)")


def build_X(g: Graph, m: LtiNetworkModel, verify: bool = True) -> SteadyStateMap:
    """Exact steady-state map of the LTI network on ``g``."""
    if g.n != m.n:
        raise SteadyStateError(f"graph has {g.n} vertices, model has {m.n}")
    L = laplacian(g, m.weights(g))
    n = g.n
    if m.a_nonzero:
        S = m.A() + L
        try:
            X = exact.inverse(S)
        except exact.SingularMatrix as err:
            raise SteadyStateError(
                "A + E B E^T is singular: some component of the graph has a_i = 0 throughout"
            ) from err
        if verify and not exact.is_identity(exact.matmul(X, S)):
            raise ArithmeticError("exact inverse check failed")
        return SteadyStateMap("A_nonzero", X, g, S)

    _check_a_zero(g)
    J = _J_over_n(n)
    X = exact.inverse(L + J) - J
    P = exact.identity(n) - J
    if verify:
        if any(v != 0 for v in exact.matmul(X, np.full(n, Fraction(1), dtype=object))):
            raise ArithmeticError("restricted inverse does not annihilate the ones vector")
        if not np.all(exact.matmul(X, L) == P):
            raise ArithmeticError("restricted inverse check failed")
    return SteadyStateMap("A_zero", X, g, L, P)


def solve_lti(g: Graph, m: LtiNetworkModel, w: Sequence) -> SteadyState:
    """Exact steady state ``y = -X w``; for ``A = 0`` the zero-mean solution."""
    if g.n != m.n:
        raise SteadyStateError(f"graph has {g.n} vertices, model has {m.n}")
    w = exact.fraction_array(w)
    if len(w) != g.n:
        raise SteadyStateError("input vector has the wrong length")
    L = laplacian(g, m.weights(g))
    if m.a_nonzero:
        S = m.A() + L
        try:
            y = -exact.bareiss_solve(S, w)
        except exact.SingularMatrix as err:
            raise SteadyStateError("A + E B E^T is singular for this graph") from err
    else:
        _check_a_zero(g)
        if sum(w) != 0:
            raise SteadyStateError(
                "with A = 0 a steady state exists only for zero-sum inputs")
        S = L
        y = -exact.bareiss_solve(L + _J_over_n(g.n), w)
    residual = exact.matmul(S, y) + w
    return SteadyState(y, residual, g, w, tol=0.0)


def solve_nonlinear(g: Graph, model: NetworkModel, w, tol: float = 1e-10,
                    max_iter: int = 200, trace: list | None = None) -> SteadyState:
    """Damped Newton iteration on ``G(y) = k^{-1}(y) + E g(E^T y) + w``.

    Steps are accepted only if they keep ``y`` in the relations' domain and
    decrease ``||G||`` (Armijo backtracking on ``||G||^2 / 2``).  If ``trace``
    is a list, one ``(||G||_2, min eig of the Jacobian)`` tuple is appended
    per iteration.
    """
    if g.n != model.n:
        raise SteadyStateError(f"graph has {g.n} vertices, model has {model.n}")
    w = np.asarray([float(v) for v in w])
    n = g.n
    coupling = model.coupling(g)
    gauge = model.all_integrators
    if gauge:
        _check_a_zero(g)
        if abs(w.sum()) > tol * n:
            raise SteadyStateError("with integrator agents a steady state needs a zero-sum input")
        w = w - w.mean()

    def G(y):
        return model.k_inv(y) + coupling.flow(y) + w

    y = np.zeros(n)
    r = G(y)
    rnorm = np.linalg.norm(r)
    for it in range(max_iter + 1):
        if np.max(np.abs(r), initial=0.0) <= tol:
            return SteadyState(y, r, g, w, tol=tol, iterations=it)
        if it == max_iter:
            break
        J = np.diag(model.dk_inv(y)) + coupling.jacobian(y)
        if trace is not None:
            trace.append((float(rnorm), float(np.linalg.eigvalsh(J).min())))
        if gauge:
            J = J + 1.0 / n
        try:
            d = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(J, -r, rcond=None)[0]
        t = 1.0
        while t > 1e-14:
            y_new = y + t * d
            if gauge:
                y_new -= y_new.mean()
            if model.in_domain(y_new):
                try:
                    r_new = G(y_new)
                except DomainError:
                    r_new = None
                if r_new is not None:
                    n_new = np.linalg.norm(r_new)
                    if n_new * n_new <= (1 - 1e-4 * t) * rnorm * rnorm:
                        break
            t *= 0.5
        else:
            raise NonConvergence(
                f"line search stalled at ||G||_inf = {np.max(np.abs(r)):.3e} (tol {tol:g})")
        y, r, rnorm = y_new, r_new, n_new
    raise NonConvergence(
        f"no convergence in {max_iter} iterations, ||G||_inf = {np.max(np.abs(r)):.3e}")


def solve(g: Graph, model: NetworkModel | LtiNetworkModel, w, tol: float = 1e-10) -> SteadyState:
    """Exact solve when the model is rational LTI and ``w`` is exact, Newton otherwise."""
    lti = model if isinstance(model, LtiNetworkModel) else model.lti
    if lti is not None and all(isinstance(v, (int, Fraction, str)) for v in w):
        return solve_lti(g, lti, w)
    if isinstance(model, LtiNetworkModel):
        from .models import lti_to_network
        model = lti_to_network(model)
    return solve_nonlinear(g, model, w, tol=tol)


def sigma_bound_terms(g: Graph, m: LtiNetworkModel) -> float:
    """``1 / sigma_min`` of ``A + E B E^T`` (or of ``L`` on the zero-sum space when ``A = 0``)."""
    if m.a_nonzero:
        S = np.array(m.A() + laplacian(g, m.weights(g)), dtype=float)
        return 1.0 / np.linalg.svd(S, compute_uv=False).min()
    L = np.array(laplacian(g, m.weights(g)), dtype=float)
    eig = np.sort(np.linalg.eigvalsh(L))
    return 1.0 / eig[1]
