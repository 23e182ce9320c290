"""Exact arithmetic for Fourier modes annihilated by rational rotation vectors.

Nothing in this module touches floating point: rotation vectors, lattice
vectors and interval endpoints are ints or ``fractions.Fraction``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import sympy

from .action import RotationVector, as_rotation
from .errors import DegenerateBasis


def is_killed(rot, nu) -> bool:
    """True iff nu != 0 and <nu, m/n> is an integer."""
    rot = as_rotation(rot)
    nu = tuple(int(k) for k in nu)
    if len(nu) != rot.dim:
        raise ValueError("mode and rotation vector dimensions differ")
    if not any(nu):
        return False
    return sum(a * b for a, b in zip(nu, rot.m)) % rot.n == 0


def killed_modes(rot):
    """Predicate on integer vectors: is this mode forced to vanish by persistence at rot?"""
    rot = as_rotation(rot)
    return lambda nu: is_killed(rot, nu)


def to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    return Fraction(x)


@dataclass(frozen=True)
class ArithmeticSetQuery:
    """Rational basis q_1..q_d with open intervals (a_i, b_i), 0 < a_i < b_i."""

    basis: tuple
    intervals: tuple

    def __post_init__(self):
        basis = tuple(tuple(to_fraction(x) for x in row) for row in self.basis)
        intervals = tuple((to_fraction(a), to_fraction(b)) for a, b in self.intervals)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "intervals", intervals)
        d = len(basis)
        if d == 0 or any(len(row) != d for row in basis):
            raise ValueError("basis must be d vectors of length d")
        if len(intervals) != d:
            raise ValueError("need one interval per basis vector")
        for a, b in intervals:
            if not 0 < a < b:
                raise ValueError(f"interval ({a}, {b}) must satisfy 0 < a < b")
        if self.matrix.det() == 0:
            raise DegenerateBasis("basis vectors are linearly dependent")

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def matrix(self) -> sympy.Matrix:
        """Rows are the basis vectors."""
        return sympy.Matrix([[sympy.Rational(x.numerator, x.denominator) for x in row] for row in self.basis])

    def to_dict(self) -> dict:
        return {
            "basis": [[str(x) for x in row] for row in self.basis],
            "intervals": [[str(a), str(b)] for a, b in self.intervals],
        }


def mode_bound(a, b) -> int:
    """M = [b / (b - a)] + 1, the least n with n / b < (n - 1) / a."""
    a, b = to_fraction(a), to_fraction(b)
    return math.floor(b / (b - a)) + 1


def _dot(nu, q) -> Fraction:
    return sum((k * x for k, x in zip(nu, q)), Fraction(0))


def kill_witness(query: ArithmeticSetQuery, nu):
    """(i, lambda) with lambda in (a_i, b_i) rational and <nu, lambda q_i> integral, or None."""
    for i, (q, (a, b)) in enumerate(zip(query.basis, query.intervals)):
        t = _dot(nu, q)
        if t == 0:
            return i, (a + b) / 2
        lo, hi = (a * t, b * t) if t > 0 else (b * t, a * t)
        k = math.floor(lo) + 1
        if k < hi:
            return i, Fraction(k) / t
    return None


def verify_witness(query: ArithmeticSetQuery, nu, witness) -> bool:
    i, lam = witness
    a, b = query.intervals[i]
    val = lam * _dot(nu, query.basis[i])
    return a < lam < b and val.denominator == 1


def oracle_survives(query: ArithmeticSetQuery, nu, max_denominator=64) -> bool:
    """Brute force over all lambda = r/s in (a_i, b_i) with s <= max_denominator."""
    for q, (a, b) in zip(query.basis, query.intervals):
        t = _dot(nu, q)
        for s in range(1, max_denominator + 1):
            for r in range(math.floor(a * s) + 1, math.ceil(b * s)):
                if (Fraction(r, s) * t).denominator == 1:
                    return False
    return True


@dataclass
class ArithmeticSetResult:
    query: ArithmeticSetQuery
    modes: list
    M: list
    bounds: list
    box: list
    candidates: int
    oracle_agrees: bool
    oracle_max_denominator: int
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "query": self.query.to_dict(),
            "I": [list(nu) for nu in self.modes],
            "M": list(self.M),
            "polytope_bounds": [str(x) for x in self.bounds],
            "box": list(self.box),
            "candidates": self.candidates,
            "oracle_agrees": self.oracle_agrees,
            "oracle_max_denominator": self.oracle_max_denominator,
            "notes": list(self.notes),
        }


def polytope_box(query: ArithmeticSetQuery):
    """Per-coordinate bounds of the polytope {|<q_i, nu>| <= M_i / b_i}."""
    M = [mode_bound(a, b) for a, b in query.intervals]
    bounds = [Fraction(m) / b for m, (_, b) in zip(M, query.intervals)]
    inv = query.matrix.inv()
    box = []
    for j in range(query.dim):
        s = sum(abs(Fraction(int(inv[j, i].p), int(inv[j, i].q))) * bounds[i] for i in range(query.dim))
        box.append(math.floor(s))
    return M, bounds, box


def in_polytope(query, bounds, nu) -> bool:
    return all(abs(_dot(nu, q)) <= r for q, r in zip(query.basis, bounds))


def arithmetic_set(query: ArithmeticSetQuery, oracle_max_denominator=64) -> ArithmeticSetResult:
    """The finite set of nonzero nu with <nu, lambda q_i> non-integral for every admissible lambda and i.

    Candidates are the integer points of the bounding polytope; each is
    tested exactly, and cross-checked against the brute-force lambda oracle.
    """
    M, bounds, box = polytope_box(query)
    ranges = [range(-r, r + 1) for r in box]
    modes = []
    agree = True
    count = 0
    for nu in itertools.product(*ranges):
        if not any(nu) or not in_polytope(query, bounds, nu):
            continue
        count += 1
        survives = kill_witness(query, nu) is None
        if survives != oracle_survives(query, nu, oracle_max_denominator):
            agree = False
        if survives:
            modes.append(nu)
    return ArithmeticSetResult(
        query=query,
        modes=sorted(modes),
        M=M,
        bounds=bounds,
        box=box,
        candidates=count,
        oracle_agrees=agree,
        oracle_max_denominator=oracle_max_denominator,
        notes=["nu = 0 is excluded: the mean of G is never constrained"],
    )


def rotations_from_query(query: ArithmeticSetQuery, max_denominator=8) -> list:
    """All rotation vectors lambda q_i with lambda = r/s in (a_i, b_i), s <= max_denominator."""
    seen = set()
    out = []
    for q, (a, b) in zip(query.basis, query.intervals):
        for s in range(1, max_denominator + 1):
            for r in range(math.floor(a * s) + 1, math.ceil(b * s)):
                lam = Fraction(r, s)
                if math.gcd(r, s) != 1:
                    continue
                v = [lam * x for x in q]
                n = math.lcm(*(x.denominator for x in v))
                m = [int(x * n) for x in v]
                g = math.gcd(*m, n)
                rot = RotationVector(tuple(k // g for k in m), n // g)
                if rot not in seen:
                    seen.add(rot)
                    out.append(rot)
    return out
