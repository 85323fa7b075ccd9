"""Labeled undirected graphs, incidence matrices, Laplacians and graph families.

Vertices are 1-based in the public interface (``Graph.edges`` and the text
format) and 0-based in every matrix.  Edges are stored in the canonical
orientation ``i < j``; the incidence matrix puts ``+1`` at ``i`` and ``-1``
at ``j``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

DEFAULT_FAMILY_CAP = 2 ** 22


class GraphError(ValueError):
    """Raised for malformed graphs, weights or Laplacians."""


class FamilyTooLarge(RuntimeError):
    """Raised when a family would exceed the enumeration cap."""


def all_pairs(n: int) -> list[tuple[int, int]]:
    """Canonical vertex pairs of ``K_n`` in lexicographic order (1-based)."""
    return list(itertools.combinations(range(1, n + 1), 2))


@dataclass(frozen=True)
class Graph:
    """An undirected simple graph on vertices ``1..n`` in canonical form."""

    n: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise GraphError(f"vertex count must be a positive integer, got {self.n!r}")
        canon = set()
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise GraphError(f"self-loop at vertex {i}")
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise GraphError(f"edge {(i, j)} has an endpoint outside 1..{self.n}")
            canon.add((min(i, j), max(i, j)))
        if len(canon) != len(self.edges):
            raise GraphError("duplicate edges")
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @property
    def m(self) -> int:
        return len(self.edges)

    def key(self) -> int:
        """Edge-presence bit vector over the canonical pairs, as an integer.

        Bit ``k`` is set iff the ``k``-th pair of :func:`all_pairs` is an edge.
        """
        index = _pair_index(self.n)
        bits = 0
        for e in self.edges:
            bits |= 1 << index[e]
        return bits

    def key_string(self) -> str:
        """The key as a '0'/'1' string, pair 0 first (empty string when n=1)."""
        k = self.key()
        return "".join("1" if k >> b & 1 else "0" for b in range(self.n * (self.n - 1) // 2))

    @classmethod
    def from_key(cls, n: int, key: int | str) -> "Graph":
        if isinstance(key, str):
            npairs = n * (n - 1) // 2
            if len(key) != npairs or set(key) - {"0", "1"}:
                raise GraphError(f"bad graph key {key!r} for n={n}")
            key = sum(1 << b for b, c in enumerate(key) if c == "1")
        pairs = all_pairs(n)
        if key < 0 or key >> len(pairs):
            raise GraphError(f"graph key {key} out of range for n={n}")
        return cls(n, tuple(p for b, p in enumerate(pairs) if key >> b & 1))

    def is_connected(self) -> bool:
        return is_connected(self.n, self.edges)

    def without(self, *edges: tuple[int, int]) -> "Graph":
        drop = {(min(e), max(e)) for e in edges}
        missing = drop - set(self.edges)
        if missing:
            raise GraphError(f"edges {sorted(missing)} not in graph")
        return Graph(self.n, tuple(e for e in self.edges if e not in drop))

    def with_edges(self, *edges: tuple[int, int]) -> "Graph":
        return Graph(self.n, tuple(set(self.edges) | {(min(e), max(e)) for e in edges}))

    def is_subgraph_of(self, other: "Graph") -> bool:
        return self.n == other.n and set(self.edges) <= set(other.edges)

    def __str__(self):
        return format_graph(self)


_PAIR_INDEX_CACHE: dict[int, dict[tuple[int, int], int]] = {}


def _pair_index(n: int) -> dict[tuple[int, int], int]:
    idx = _PAIR_INDEX_CACHE.get(n)
    if idx is None:
        idx = {p: k for k, p in enumerate(all_pairs(n))}
        _PAIR_INDEX_CACHE[n] = idx
    return idx


def is_connected(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    """Union-find connectivity test."""
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    components = n
    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            components -= 1
    return components == 1


def incidence(g: Graph) -> np.ndarray:
    """Dense ``n x |E|`` incidence matrix with integer entries."""
    E = np.zeros((g.n, g.m), dtype=int)
    for k, (i, j) in enumerate(g.edges):
        E[i - 1, k] = 1
        E[j - 1, k] = -1
    return E


def laplacian(g: Graph, b: Sequence) -> np.ndarray:
    """Weighted Laplacian ``E diag(b) E^T``.

    The weights may be floats or :class:`~fractions.Fraction`; with Fractions
    (or ints) the result is an object array and exact.
    """
    b = list(b)
    if len(b) != g.m:
        raise GraphError(f"expected {g.m} weights, got {len(b)}")
    if any(not bk > 0 for bk in b):
        raise GraphError("edge weights must be positive")
    exact = all(isinstance(bk, (int, Fraction)) for bk in b)
    if exact:
        L = np.full((g.n, g.n), Fraction(0), dtype=object)
    else:
        L = np.zeros((g.n, g.n))
    for (i, j), bk in zip(g.edges, b):
        i, j = i - 1, j - 1
        L[i, i] += bk
        L[j, j] += bk
        L[i, j] -= bk
        L[j, i] -= bk
    return L


def graph_from_laplacian(L, tol=0) -> tuple[Graph, list]:
    """Read the edge set and edge weights off a (weighted) Laplacian.

    An edge ``{i, j}`` is present iff ``|L_ij| > tol``; its weight is
    ``-L_ij``.  With ``tol=0`` and exact entries the round trip through
    :func:`laplacian` is exact.
    """
    L = np.asarray(L, dtype=object if _is_exact(L) else float)
    n = L.shape[0]
    if L.shape != (n, n):
        raise GraphError("Laplacian must be square")
    edges, weights = [], []
    for i in range(n):
        for j in range(i + 1, n):
            if abs(L[i, j] - L[j, i]) > tol:
                raise GraphError(f"matrix is not symmetric at ({i + 1}, {j + 1})")
            if abs(L[i, j]) > tol:
                w = -L[i, j]
                if w < 0:
                    raise GraphError(
                        f"positive off-diagonal entry {L[i, j]} at ({i + 1}, {j + 1})")
                edges.append((i + 1, j + 1))
                weights.append(w)
    return Graph(n, tuple(edges)), weights


def _is_exact(M) -> bool:
    a = np.asarray(M, dtype=object)
    return all(isinstance(v, (int, Fraction)) for v in a.flat)


@dataclass(frozen=True)
class GraphFamily:
    """A family of labeled graphs on ``n`` vertices.

    ``kind`` is one of ``"all"``, ``"connected"``, ``"subgraphs"`` (of
    ``host``) or ``"explicit"`` (the graphs in ``members``).
    """

    n: int
    kind: str = "all"
    host: Graph | None = None
    members: tuple[Graph, ...] = field(default=())

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("family needs n >= 1")
        if self.kind not in ("all", "connected", "subgraphs", "explicit"):
            raise GraphError(f"unknown family kind {self.kind!r}")
        if self.kind == "subgraphs" and (self.host is None or self.host.n != self.n):
            raise GraphError("subgraph family needs a host graph on n vertices")
        if self.kind == "explicit":
            members = tuple(dict.fromkeys(self.members))
            if any(g.n != self.n for g in members):
                raise GraphError("explicit family members must all have n vertices")
            object.__setattr__(self, "members", members)

    @classmethod
    def all(cls, n):
        return cls(n, "all")

    @classmethod
    def connected(cls, n):
        return cls(n, "connected")

    @classmethod
    def subgraphs_of(cls, host: Graph):
        return cls(host.n, "subgraphs", host=host)

    @classmethod
    def explicit(cls, graphs: Iterable[Graph]):
        graphs = tuple(graphs)
        if not graphs:
            raise GraphError("explicit family must be non-empty")
        return cls(graphs[0].n, "explicit", members=graphs)

    def upper_size(self) -> int:
        """Number of candidates scanned by :func:`enumerate_family`."""
        if self.kind == "explicit":
            return len(self.members)
        if self.kind == "subgraphs":
            return 2 ** self.host.m
        return 2 ** (self.n * (self.n - 1) // 2)

    def spec(self) -> str:
        """Short textual description, used in file headers and fingerprints."""
        if self.kind in ("all", "connected"):
            return f"{self.kind}:{self.n}"
        if self.kind == "subgraphs":
            return f"subgraphs:{self.n}:{self.host.key_string()}"
        return f"explicit:{self.n}:" + ",".join(g.key_string() for g in self.members)

    @classmethod
    def from_spec(cls, text: str) -> "GraphFamily":
        parts = text.strip().split(":")
        kind, n = parts[0], int(parts[1])
        if kind in ("all", "connected"):
            return cls(n, kind)
        if kind == "subgraphs":
            return cls.subgraphs_of(Graph.from_key(n, parts[2] if len(parts) > 2 else ""))
        if kind == "explicit":
            keys = parts[2].split(",") if len(parts) > 2 else [""]
            return cls.explicit(Graph.from_key(n, k) for k in keys)
        raise GraphError(f"unknown family spec {text!r}")

    def __contains__(self, g: Graph) -> bool:
        if g.n != self.n:
            return False
        if self.kind == "all":
            return True
        if self.kind == "connected":
            return g.is_connected()
        if self.kind == "subgraphs":
            return g.is_subgraph_of(self.host)
        return g in self.members


def enumerate_family(family: GraphFamily, cap: int = DEFAULT_FAMILY_CAP,
                     start: int = 0, stop: int | None = None) -> Iterator[Graph]:
    """Yield the members of ``family`` in a deterministic order.

    ``start``/``stop`` select a slice of the underlying candidate index range
    (``0 .. family.upper_size()``) so that parallel consumers can split work.
    Graphs are ordered by their key (bit ``k`` <-> ``k``-th canonical pair,
    or ``k``-th host edge for subgraph families).
    """
    size = family.upper_size()
    if size > cap:
        raise FamilyTooLarge(
            f"family {family.kind} on n={family.n} has {size} candidates (cap {cap})")
    stop = size if stop is None else min(stop, size)
    if family.kind == "explicit":
        yield from family.members[start:stop]
        return
    pairs = list(family.host.edges) if family.kind == "subgraphs" else all_pairs(family.n)
    for key in range(start, stop):
        edges = tuple(p for b, p in enumerate(pairs) if key >> b & 1)
        if family.kind == "connected" and not is_connected(family.n, edges):
            continue
        yield Graph(family.n, edges)


def family_size(family: GraphFamily, cap: int = DEFAULT_FAMILY_CAP) -> int:
    if family.kind in ("all", "subgraphs", "explicit"):
        size = family.upper_size()
        if size > cap:
            raise FamilyTooLarge(f"family has {size} members (cap {cap})")
        return size
    return sum(1 for _ in enumerate_family(family, cap))


# -- text format -------------------------------------------------------------

def format_graph(g: Graph) -> str:
    lines = [f"n={g.n}"] + [f"{i} {j}" for i, j in g.edges]
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> Graph:
    """Parse the ``n=<int>`` + one ``i j`` per line format (``#`` comments)."""
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or not lines[0].replace(" ", "").startswith("n="):
        raise GraphError("graph text must start with 'n=<int>'")
    n = int(lines[0].replace(" ", "")[2:])
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise GraphError(f"bad edge line {ln!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return Graph(n, tuple(edges))
