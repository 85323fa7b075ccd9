"""Graph reconstruction from a single steady-state measurement.

Two routes:

* lookup tables -- precompute the steady output of every candidate graph
  under a fixed input and pick the nearest entry (any monotone model);
* radix decoding -- for rational LTI models, read each row of ``X`` off the
  base-``M`` digits of one agent's output, then recover the Laplacian from
  ``X`` and read the edges off its off-diagonal entries.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import exact
from .formats import atomic_write, fmt_number, parse_number
from .graphs import (DEFAULT_FAMILY_CAP, Graph, GraphError, GraphFamily, enumerate_family,
                     graph_from_laplacian)
from .indication import (IndicationVector, SeparationError, family_outputs,
                         separation_from_outputs)
from .models import LtiNetworkModel, NetworkModel

TABLE_MAGIC = "# netident lookup table v1"


class AmbiguousDetection(RuntimeError):
    """The measurement is not within half the separation index of a unique entry."""


class DecodeError(ArithmeticError):
    """Radix digits out of range: the bounds or the measurement are wrong."""


class ReconstructionError(ArithmeticError):
    """The decoded steady-state map does not come from a valid weighted Laplacian."""


class StaleTable(RuntimeError):
    """A persisted table was built for a different model."""


@dataclass
class LookupTable:
    n: int
    family: GraphFamily
    w: tuple
    entries: dict  # Graph -> y
    epsilon: float
    fingerprint: str
    tol: float
    _keys: list = field(default=None, repr=False)
    _Y: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self._keys = list(self.entries)
        self._Y = np.array([[float(v) for v in self.entries[g]] for g in self._keys]).reshape(
            len(self._keys), self.n)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class DetectionResult:
    graph: Graph
    distance: float
    margin: float  # runner-up distance minus best distance
    runner_up: float
    confident: bool


def _outputs_chunk(args):
    family, model, w, tol, start, stop, cap = args
    members = list(enumerate_family(family, cap, start, stop))
    if not members:
        return {}
    return family_outputs(w, GraphFamily.explicit(members), model, tol)


def build_table(family: GraphFamily, model, w, tol: float = 1e-10, jobs: int = 1,
                cap: int = DEFAULT_FAMILY_CAP, min_separation: float | None = None
                ) -> LookupTable:
    """Steady output of every family member under ``w``, plus the separation index.

    Raises :class:`SeparationError` naming the closest pair when the
    separation index is not above ``min_separation`` (default: 0 for exact
    outputs, ``10 * tol`` for numerically solved ones, below which distinct
    entries cannot be told apart from solver error).
    """
    if isinstance(w, IndicationVector):
        w = w.w
    w = tuple(w)
    if jobs > 1 and family.upper_size() > 1:
        size = family.upper_size()
        step = math.ceil(size / jobs)
        chunks = [(family, model, w, tol, s, min(s + step, size), cap)
                  for s in range(0, size, step)]
        outputs = {}
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for part in ex.map(_outputs_chunk, chunks):
                outputs.update(part)
    else:
        outputs = family_outputs(w, family, model, tol, cap)
    report = separation_from_outputs(outputs)
    is_exact = all(isinstance(v, Fraction) for y in outputs.values() for v in y)
    floor = min_separation if min_separation is not None else (0.0 if is_exact else 10 * tol)
    if report.pair is not None and not report.epsilon > floor:
        g, h = report.pair
        raise SeparationError(
            f"input does not separate the family: graphs {g.key_string()} and "
            f"{h.key_string()} are {report.epsilon:.3e} apart", report.pair)
    fp = model.fingerprint() if isinstance(model, NetworkModel) else _lti_fingerprint(model)
    return LookupTable(family.n, family, w, outputs, report.epsilon, fp, tol)


def _lti_fingerprint(m: LtiNetworkModel) -> str:
    from .models import lti_to_network
    return lti_to_network(m).fingerprint()


def detect(y, table: LookupTable, strict: bool = True) -> DetectionResult:
    """Nearest table entry by Euclidean distance.

    The answer is guaranteed correct when the measurement error is below
    ``epsilon / 2``; ``confident`` records whether the nearest entry is that
    close.  Exact ties always raise :class:`AmbiguousDetection`; with
    ``strict`` a non-confident result raises too.
    """
    y = np.asarray([float(v) for v in y])
    if y.shape != (table.n,):
        raise ValueError(f"measurement must have length {table.n}")
    d = np.sqrt(((table._Y - y) ** 2).sum(axis=1))
    order = np.argsort(d, kind="stable")
    best = int(order[0])
    runner = float(d[order[1]]) if len(order) > 1 else math.inf
    if runner == d[best]:
        raise AmbiguousDetection(
            f"measurement is equidistant ({d[best]:.6g}) from two table entries")
    confident = bool(d[best] < table.epsilon / 2)
    result = DetectionResult(table._keys[best], float(d[best]), runner - float(d[best]),
                             runner, confident)
    if strict and not confident:
        raise AmbiguousDetection(
            f"nearest entry is {d[best]:.6g} away, beyond the tolerance eps/2 = "
            f"{table.epsilon / 2:.6g}")
    return result


# -- persistence ------------------------------------------------------------------

def table_text(table: LookupTable) -> str:
    lines = [TABLE_MAGIC,
             f"# n: {table.n}",
             f"# family: {table.family.spec()}",
             f"# w: {','.join(fmt_number(v) for v in table.w)}",
             f"# epsilon: {fmt_number(table.epsilon)}",
             f"# fingerprint: {table.fingerprint}",
             f"# tol: {fmt_number(table.tol)}",
             "key," + ",".join(f"y{i}" for i in range(1, table.n + 1))]
    for g in sorted(table.entries, key=lambda g: g.key()):
        lines.append(",".join([g.key_string() or "-",
                               *(fmt_number(v) for v in table.entries[g])]))
    return "\n".join(lines) + "\n"


def save_table(table: LookupTable, path):
    atomic_write(path, table_text(table))


def load_table(path, model=None) -> LookupTable:
    """Read a table file; refuse it if ``model`` has a different fingerprint."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0] != TABLE_MAGIC:
        raise ValueError(f"{path}: not a lookup table file")
    header = {}
    body = []
    for ln in lines[1:]:
        if ln.startswith("# "):
            k, _, v = ln[2:].partition(":")
            header[k.strip()] = v.strip()
        elif ln and not ln.startswith("key,"):
            body.append(ln)
    n = int(header["n"])
    entries = {}
    for ln in body:
        key, *vals = ln.split(",")
        g = Graph.from_key(n, "" if key == "-" else key)
        entries[g] = np.array([parse_number(v) for v in vals], dtype=object)
        if not all(isinstance(v, Fraction) for v in entries[g]):
            entries[g] = entries[g].astype(float)
    table = LookupTable(n, GraphFamily.from_spec(header["family"]),
                        tuple(parse_number(v) for v in header["w"].split(",")),
                        entries, float(header["epsilon"]), header["fingerprint"],
                        float(header["tol"]))
    if model is not None:
        fp = model.fingerprint() if isinstance(model, NetworkModel) else _lti_fingerprint(model)
        if fp != table.fingerprint:
            raise StaleTable(f"table was built for model {table.fingerprint}, not {fp}")
    return table


# -- radix decoding ---------------------------------------------------------------

def _scaled_row(R, M: int, N: int, D: int, n: int, digit_tol) -> list[int]:
    """Digits of ``T = D R + N D (1 + M + ... + M^{n-1})`` shifted back to ``D r_i``."""
    R = exact.as_fraction(R)
    num, den = R.numerator * D, R.denominator
    T, rem = divmod(num, den)
    if digit_tol is None:
        if rem:
            raise DecodeError(f"D*R = {R * D} is not an integer (D too small?)")
    else:
        # round half up, then check the distance to the integer
        if 2 * rem >= den:
            T, rem = T + 1, rem - den
        tn, td = float(digit_tol).as_integer_ratio()
        if abs(rem) * td > tn * den:
            raise DecodeError(
                f"scaled measurement is {abs(rem / den):.3g} from an integer "
                f"(tolerance {digit_tol}); measurement too noisy for this radix")
    ND = N * D
    T += ND * _repunit(M, n)
    if T < 0:
        raise DecodeError("negative digit string: numerator bound N too small")
    if T >= _power(M, n):
        raise DecodeError("more than n radix digits: bounds N, D underestimated")
    digits = _digits(T, M, n)
    if max(digits) > 2 * ND:
        raise DecodeError(f"digit {max(digits)} exceeds 2ND = {2 * ND}")
    return [d - ND for d in digits]


def radix_decode_row(R, M: int, N: int, D: int, n: int, digit_tol: float | None = None
                     ) -> list[Fraction]:
    """Recover a row ``r`` (entries ``p/q``, ``q | D``, ``|p| <= N``) from ``R = r . w``.

    ``T = D R + sum_i N D M^i`` is a nonnegative integer whose base-``M``
    digits are ``D r_i + N D``.  With ``digit_tol=None`` ``R`` must be exact;
    otherwise ``T`` is rounded and may be off by at most ``digit_tol``.
    """
    return [Fraction(v, D) for v in _scaled_row(R, M, N, D, n, digit_tol)]


_POWERS: dict = {}


def _power(M: int, k: int) -> int:
    key = (M, k)
    p = _POWERS.get(key)
    if p is None:
        if len(_POWERS) > 4096:
            _POWERS.clear()
        p = _POWERS[key] = M ** k
    return p


def _repunit(M: int, n: int) -> int:
    """``1 + M + ... + M^{n-1}``."""
    return (_power(M, n) - 1) // (M - 1)


def _digits(T: int, M: int, n: int) -> list[int]:
    """The ``n`` base-``M`` digits of ``0 <= T < M^n``, least significant first.

    Splits in halves so the big divisions happen on balanced operands.
    """
    if n <= 4:
        out = []
        for _ in range(n - 1):
            T, d = divmod(T, M)
            out.append(d)
        out.append(T)
        return out
    h = n // 2
    hi, lo = divmod(T, _power(M, h))
    return _digits(lo, M, h) + _digits(hi, M, n - h)


@dataclass
class Reconstruction:
    """Recovered graph and weights; ``X = scaled_X / D`` and ``L = scaled_L / c``."""

    graph: Graph
    weights: list
    scaled_X: list
    D: int
    scaled_L: list
    c: int
    timings: dict
    op_counts: dict

    @property
    def X(self) -> np.ndarray:
        return np.array([[Fraction(v, self.D) for v in row] for row in self.scaled_X],
                        dtype=object)

    @property
    def laplacian(self) -> np.ndarray:
        return np.array([[Fraction(v, self.c) for v in row] for row in self.scaled_L],
                        dtype=object)


def _radix_params(w: IndicationVector):
    prov = w.provenance
    if prov.get("mode") != "radix":
        raise ValueError("radix reconstruction needs a radix indication vector")
    return int(prov["M"]), int(prov["N"]), int(prov["D"])


def _centered(y, a_nonzero):
    vals = [exact.as_fraction(v) for v in y]
    if not a_nonzero:
        mean = sum(vals) / len(vals)
        vals = [v - mean for v in vals]
    return vals


def decode_row(i: int, y_i, w: IndicationVector, digit_tol: float | None = 0.25) -> list[Fraction]:
    """Row ``i`` of ``X`` from agent ``i``'s own output (``y = -X w``).

    Needs only ``y_i`` and the public radix constants.  For integrator
    networks ``y_i`` must already be the zero-mean representative.
    """
    M, N, D = _radix_params(w)
    return radix_decode_row(-exact.as_fraction(y_i), M, N, D, len(w.w), digit_tol)


def decode_rows(y, w: IndicationVector, a_nonzero: bool = True,
                digit_tol: float | None = 0.25) -> list[list[Fraction]]:
    """Decode every row of ``X`` from the measured outputs (row ``i`` from ``y_i`` only).

    ``digit_tol=None`` demands exact outputs.  For integrator networks the
    outputs are first shifted to zero mean.
    """
    return [decode_row(i, v, w, digit_tol) for i, v in enumerate(_centered(y, a_nonzero))]


def _scaled_row_args(args):
    return _scaled_row(*args)


def reconstruct_lti(y: Sequence, m: LtiNetworkModel, w: IndicationVector,
                    digit_tol: float | None = 0.25, method: str = "modular",
                    jobs: int = 1) -> Reconstruction:
    """Recover the graph and its edge weights from one steady-state output.

    Each row of ``X`` is decoded independently from the matching output.
    The Laplacian is then ``X^{-1} - A`` (or ``(X + 11^T/n)^{-1} - 11^T/n``
    when ``A = 0``), computed exactly.  ``method="modular"`` inverts modulo a
    large prime and certifies the result in integer arithmetic, relying on
    the a-priori bound on the Laplacian's entries; ``method="bareiss"`` does
    a plain fraction-free inversion.  With ``jobs > 1`` the rows are decoded
    in worker processes; the result does not depend on ``jobs``.
    """
    n = m.n
    if len(y) != n:
        raise ValueError(f"measurement must have length {n}")
    M, N, D = _radix_params(w)
    if len(w.w) != n:
        raise ValueError("indication vector and model disagree on n")
    t0 = time.perf_counter()
    # y = -X w, so row_i . w = -y_i; Z = D X is integral
    args = [(-v, M, N, D, n, digit_tol) for v in _centered(y, m.a_nonzero)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            Z = list(ex.map(_scaled_row_args, args))
    else:
        Z = [_scaled_row(*a) for a in args]
    t1 = time.perf_counter()

    c = m.denominator_lcm()
    if m.a_nonzero:
        Zs, Ds = Z, D
        shift = [[0] * n for _ in range(n)]
        for i, a in enumerate(m.a):
            shift[i][i] = a
    else:
        # (X + 11^T/n)^{-1} = L + 11^T/n
        c = math.lcm(c, n)
        Ds = math.lcm(D, n)
        up, add = Ds // D, Ds // n
        Zs = [[v * up + add for v in row] for row in Z]
        shift = [[Fraction(1, n)] * n for _ in range(n)]
    try:
        if method == "modular":
            bound = int(c * (m.max_row_weight() + 1)) + 1
            W = exact.inverse_modular(Zs, c * Ds, bound)
        elif method == "bareiss":
            S = exact.inverse(np.array([[Fraction(v, Ds) for v in row] for row in Zs],
                                       dtype=object))
            if any((v * c).denominator != 1 for v in S.flat):
                raise ReconstructionError("recovered Laplacian has unexpected denominators")
            W = [[int(v * c) for v in row] for row in S]
        else:
            raise ValueError(f"unknown inversion method {method!r}")
    except exact.SingularMatrix as err:
        raise ReconstructionError(f"decoded X is not invertible as expected: {err}") from err
    cL = [[wv - int(sv * c) for wv, sv in zip(wrow, srow)] for wrow, srow in zip(W, shift)]
    t2 = time.perf_counter()

    if any(sum(row) for row in cL):
        raise ReconstructionError("recovered matrix has nonzero row sums")
    try:
        graph, scaled_weights = graph_from_laplacian(cL, tol=0)
    except GraphError as err:
        raise ReconstructionError(str(err)) from err
    weights = [Fraction(v, c) for v in scaled_weights]
    return Reconstruction(graph, weights, Z, D, cL, c,
                          {"decode_s": t1 - t0, "invert_s": t2 - t1},
                          {"digits": n * n, "elimination_mults": n ** 3})
