"""Exact rational linear algebra.

Matrices are numpy object arrays (or nested lists) of ints/Fractions.  The
workhorse is fraction-free (Bareiss) elimination on integer-scaled rows;
:func:`inverse_modular` is the fast path used when the inverse is known to
have small, bounded entries.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import reduce
from typing import Sequence

import numpy as np


class SingularMatrix(ArithmeticError):
    pass


def as_fraction(x) -> Fraction:
    """Convert an int, Fraction, ``"p/q"`` string or float (exactly) to a Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    return Fraction(float(x))


def fraction_array(a) -> np.ndarray:
    arr = np.asarray(a, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = as_fraction(v)
    return out


def lcm_all(values) -> int:
    return reduce(math.lcm, values, 1)


def denominators_lcm(a) -> int:
    return lcm_all(as_fraction(v).denominator for v in np.asarray(a, dtype=object).flat)


def identity(n: int) -> np.ndarray:
    I = np.full((n, n), Fraction(0), dtype=object)
    for i in range(n):
        I[i, i] = Fraction(1)
    return I


def _integer_rows(S, rhs):
    """Rows of ``[S | rhs]`` each scaled to integers (solution unchanged)."""
    rows = []
    for srow, rrow in zip(S, rhs):
        vals = [as_fraction(v) for v in srow] + [as_fraction(v) for v in rrow]
        scale = lcm_all(v.denominator for v in vals)
        rows.append([v.numerator * (scale // v.denominator) for v in vals])
    return rows


def bareiss_solve(S, rhs) -> np.ndarray:
    """Solve ``S X = rhs`` exactly by fraction-free Gaussian elimination.

    ``rhs`` may be a vector or an ``n x k`` matrix; the result has the same
    shape and Fraction entries.  Raises :class:`SingularMatrix` when ``S`` is
    singular.
    """
    S = np.asarray(S, dtype=object)
    n = S.shape[0]
    if S.shape != (n, n):
        raise ValueError("coefficient matrix must be square")
    rhs = np.asarray(rhs, dtype=object)
    vector = rhs.ndim == 1
    R = rhs.reshape(n, -1)
    k = R.shape[1]
    M = _integer_rows(S, R)

    prev = 1
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            raise SingularMatrix("matrix is singular")
        if piv != col:
            M[col], M[piv] = M[piv], M[col]
        p = M[col][col]
        prow = M[col]
        for r in range(col + 1, n):
            row = M[r]
            f = row[col]
            # each update divides exactly by the previous pivot
            M[r] = [0] * (col + 1) + [
                (p * row[c] - f * prow[c]) // prev for c in range(col + 1, n + k)]
        prev = p
    det = M[n - 1][n - 1]

    # fraction-free back substitution: Y = det * X is integral
    Y = [[0] * k for _ in range(n)]
    for i in range(n - 1, -1, -1):
        row = M[i]
        for c in range(k):
            acc = det * row[n + c]
            for j in range(i + 1, n):
                acc -= row[j] * Y[j][c]
            Y[i][c] = acc // row[i]
    out = np.empty((n, k), dtype=object)
    for i in range(n):
        for c in range(k):
            out[i, c] = Fraction(Y[i][c], det)
    return out.reshape(n) if vector else out


def inverse(S) -> np.ndarray:
    S = np.asarray(S, dtype=object)
    return bareiss_solve(S, identity(S.shape[0]))


def determinant(S) -> Fraction:
    """Exact determinant via Bareiss (rows scaled to integers first)."""
    S = np.asarray(S, dtype=object)
    n = S.shape[0]
    if n == 0:
        return Fraction(1)
    scales = []
    M = []
    for srow in S:
        vals = [as_fraction(v) for v in srow]
        s = lcm_all(v.denominator for v in vals)
        scales.append(s)
        M.append([v.numerator * (s // v.denominator) for v in vals])
    sign, prev = 1, 1
    for col in range(n - 1):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            M[col], M[piv] = M[piv], M[col]
            sign = -sign
        p = M[col][col]
        for r in range(col + 1, n):
            f = M[r][col]
            M[r] = [0] * (col + 1) + [
                (p * M[r][c] - f * M[col][c]) // prev for c in range(col + 1, n)]
        prev = p
    return Fraction(sign * M[n - 1][n - 1], math.prod(scales))


def matmul(A, B) -> np.ndarray:
    """Exact product of object arrays (numpy falls back to Python arithmetic)."""
    return np.dot(np.asarray(A, dtype=object), np.asarray(B, dtype=object))


def is_identity(M) -> bool:
    M = np.asarray(M, dtype=object)
    n = M.shape[0]
    return all(M[i, j] == (1 if i == j else 0) for i in range(n) for j in range(n))


# -- modular inversion -------------------------------------------------------

# Mersenne primes, used as moduli
_PRIMES = [2 ** e - 1 for e in (61, 89, 107, 127, 521, 607, 1279, 2203, 2281, 3217, 4253)]


def _inverse_mod(rows: list[list[int]], p: int) -> list[list[int]] | None:
    """Gauss-Jordan inverse of an integer matrix modulo the prime ``p``."""
    n = len(rows)
    M = [[v % p for v in row] + [1 if i == j else 0 for j in range(n)]
         for i, row in enumerate(rows)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col]), None)
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        inv = pow(M[col][col], -1, p)
        prow = [v * inv % p for v in M[col]]
        M[col] = prow
        for r in range(n):
            if r != col and M[r][col]:
                f = M[r][col]
                M[r] = [(a - f * b) % p for a, b in zip(M[r], prow)]
    return [row[n:] for row in M]


def inverse_modular(Z: Sequence[Sequence[int]], scale: int, bound: int) -> list[list[int]]:
    """Return the integer matrix ``W = scale * Z^{-1}``, assuming ``|W_ij| <= bound``.

    ``Z`` is an integer matrix.  The inverse is computed modulo a prime larger
    than ``2*bound``, lifted symmetrically, and then certified exactly by
    checking ``Z W = scale I`` in integer arithmetic.  Raises
    :class:`SingularMatrix` if ``Z`` is singular or no matrix with entries in
    the bound is its scaled inverse.
    """
    n = len(Z)
    for p in _PRIMES:
        if p <= 2 * bound:
            continue
        inv = _inverse_mod(Z, p)
        if inv is None:
            continue
        s = scale % p
        half = p // 2
        W = [[(s * v) % p for v in row] for row in inv]
        W = [[v - p if v > half else v for v in row] for row in W]
        # exact certificate
        cols = list(zip(*W))
        for i in range(n):
            zi = Z[i]
            for j in range(n):
                acc = sum(a * b for a, b in zip(zi, cols[j]) if b)
                if acc != (scale if i == j else 0):
                    raise SingularMatrix(
                        "no bounded integer inverse exists (inconsistent matrix)")
        return W
    raise SingularMatrix("matrix is singular modulo every candidate prime")
