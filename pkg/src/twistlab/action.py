"""Discrete action of configuration paths and its minimizers.

For a path q_0, ..., q_N the action is sum_j S_eps(q_j, q_{j+1}).  Its
Hessian in the interior variables is block tridiagonal with d x d blocks,
which is what the Newton minimizer below factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NonConvergence

GRAD_TOL = 1e-10
PSD_TOL = -1e-9
TIE_TOL = 1e-12

MINIMALITY_CAVEAT = "minimality certified only against multistart local minimizers"


@dataclass(frozen=True)
class RotationVector:
    """Rational rotation vector m/n with gcd(m_1, ..., m_d, n) = 1."""

    m: tuple
    n: int

    def __post_init__(self):
        m = tuple(int(k) for k in np.atleast_1d(self.m))
        object.__setattr__(self, "m", m)
        if int(self.n) < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if reduce(math.gcd, m, self.n) != 1:
            raise ValueError(f"rotation vector ({m}, {self.n}) is not coprime")

    @property
    def dim(self) -> int:
        return len(self.m)

    @property
    def shift(self) -> np.ndarray:
        return np.array(self.m, dtype=float)

    @property
    def frequency(self) -> np.ndarray:
        return self.shift / self.n

    def to_list(self) -> list:
        return [*self.m, self.n]

    def __str__(self):
        m = self.m[0] if len(self.m) == 1 else self.m
        return f"({m},{self.n})"


def as_rotation(rot) -> RotationVector:
    if isinstance(rot, RotationVector):
        return rot
    m, n = rot
    return RotationVector(m, n)


@dataclass
class ConfigurationPath:
    """Points q_0..q_N (shape (N+1, d)) plus solver diagnostics when produced by a minimizer."""

    points: np.ndarray
    bc: str = "free"
    rot: Optional[RotationVector] = None
    action: Optional[float] = None
    gradient_norm: Optional[float] = None
    min_eigenvalue: Optional[float] = None
    multiplicity: int = 1
    caveat: str = ""

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.bc not in ("free", "fixed", "periodic"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.bc == "periodic":
            if self.rot is None or len(self.points) != self.rot.n + 1:
                raise ValueError("periodic path needs rot and n + 1 points")
            if np.max(np.abs(self.points[-1] - self.points[0] - self.rot.shift)) > 1e-12:
                raise ValueError("periodic path must satisfy q_n = q_0 + m")

    @property
    def steps(self) -> int:
        return len(self.points) - 1

    @property
    def interior(self) -> np.ndarray:
        return self.points[1:-1]


@dataclass
class ActionEvaluation:
    """Value, gradient and block Hessian of the action in the free variables.

    For open paths the free variables are the interior points and the
    Hessian is block tridiagonal (``diag``, ``off``).  For cyclic problems
    the variables are q_0..q_{n-1}, and ``off[j]`` couples j with (j+1) mod n.
    """

    value: float
    gradient: np.ndarray
    diag: np.ndarray
    off: np.ndarray
    cyclic: bool = False

    def dense_hessian(self) -> np.ndarray:
        k, d = self.gradient.shape
        H = np.zeros((k * d, k * d))
        for j in range(k):
            H[j * d:(j + 1) * d, j * d:(j + 1) * d] += self.diag[j]
        for j, B in enumerate(self.off):
            a, b = j, (j + 1) % k
            H[a * d:(a + 1) * d, b * d:(b + 1) * d] += B
            H[b * d:(b + 1) * d, a * d:(a + 1) * d] += B.T
        return H

    def min_eigenvalue(self) -> float:
        if self.gradient.size == 0:
            return math.inf
        H = self.dense_hessian()
        return float(np.linalg.eigvalsh(0.5 * (H + H.T))[0])


def action(spec, path) -> ActionEvaluation:
    """Action sum_j S_eps(q_j, q_{j+1}) with derivatives in the free variables."""
    if not isinstance(path, ConfigurationPath):
        path = ConfigurationPath(path)
    q = path.points
    N = len(q) - 1
    if N < 1:
        raise ValueError("a path needs at least two points")
    d = q.shape[1]
    value = 0.0
    dq, dQ, Sqq, SqQ, SQQ = [], [], [], [], []
    for j in range(N):
        value += float(spec.S(q[j], q[j + 1]))
        dq.append(spec.dS_q(q[j], q[j + 1]))
        dQ.append(spec.dS_Q(q[j], q[j + 1]))
        Sqq.append(np.atleast_2d(spec.d2S_qq(q[j], q[j + 1])))
        SqQ.append(np.atleast_2d(spec.d2S_qQ(q[j], q[j + 1])))
        SQQ.append(np.atleast_2d(spec.d2S_QQ(q[j], q[j + 1])))

    if path.bc == "periodic":
        grad = np.array([dq[j] + dQ[j - 1] for j in range(N)]).reshape(N, d)
        diag = np.array([Sqq[j] + SQQ[j - 1] for j in range(N)])
        off = np.array(SqQ)
        return ActionEvaluation(value, grad, diag, off, cyclic=True)

    grad = np.array([dQ[j - 1] + dq[j] for j in range(1, N)]).reshape(N - 1, d)
    diag = np.array([SQQ[j - 1] + Sqq[j] for j in range(1, N)]).reshape(N - 1, d, d)
    off = np.array(SqQ[1:N - 1]).reshape(max(N - 2, 0), d, d)
    return ActionEvaluation(value, grad, diag, off)


def block_tridiagonal_solve(diag, off, rhs):
    """Solve H x = rhs for symmetric block tridiagonal H by block elimination.

    ``off[i]`` is the (i, i+1) block.  Returns None when a pivot fails its
    Cholesky factorization, i.e. when H is not positive definite.
    """
    k = len(diag)
    if k == 0:
        return np.zeros_like(rhs)
    pivots = []
    y = []
    for i in range(k):
        S = diag[i].copy()
        r = rhs[i].copy()
        if i > 0:
            U = off[i - 1]
            S -= U.T @ cho_solve(pivots[-1], U)
            r -= U.T @ cho_solve(pivots[-1], y[-1])
        try:
            pivots.append(cho_factor(0.5 * (S + S.T)))
        except np.linalg.LinAlgError:
            return None
        y.append(r)
    x = np.empty_like(rhs)
    x[-1] = cho_solve(pivots[-1], y[-1])
    for i in range(k - 2, -1, -1):
        x[i] = cho_solve(pivots[i], y[i] - off[i] @ x[i + 1])
    return x


def _local_minimize(spec, q_start, q_end, interior, maxiter=100):
    """Damped Newton from one seed; returns (path, evaluation) or None."""
    x = np.array(interior, dtype=float)

    def build(x):
        return np.vstack([q_start, x, q_end])

    ev = action(spec, build(x))
    for _ in range(maxiter):
        g = ev.gradient
        gn = float(np.max(np.abs(g)))
        if gn <= GRAD_TOL:
            break
        step = block_tridiagonal_solve(ev.diag, ev.off, -g)
        newton = step is not None
        if not newton:
            scale = max(1.0, max(np.linalg.norm(B, 2) for B in ev.diag))
            step = -g / scale
        slope = float(np.sum(g * step))
        t = 1.0
        while t > 1e-12:
            trial = action(spec, build(x + t * step))
            if trial.value <= ev.value + 1e-4 * t * slope:
                break
            if newton and np.max(np.abs(trial.gradient)) < gn and trial.value <= ev.value + 1e-12 * max(1.0, abs(ev.value)):
                break
            t *= 0.5
        else:
            return None
        x = x + t * step
        ev = trial
    if float(np.max(np.abs(ev.gradient))) > GRAD_TOL:
        return None
    return build(x), ev


def default_seeds(q_start, q_end, N):
    """Straight path, 2d coordinate shifts by +-1/(2N), and N sine-bump seeds."""
    d = len(q_start)
    t = np.arange(1, N)[:, None] / N
    straight = q_start + t * (q_end - q_start)
    seeds = [straight]
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0 / (2 * N)
        seeds.append(straight + e)
        seeds.append(straight - e)
    for mode in range(1, N + 1):
        bump = np.sin(np.pi * mode * t) / (2 * N)
        seeds.append(straight + bump * np.ones(d))
    return seeds


def minimize_fixed_endpoints(spec, q_start, q_end, N, seeds=None) -> ConfigurationPath:
    """Smallest-action local minimizer of the N-step action between fixed endpoints.

    Every seed in ``default_seeds`` (plus any extra ``seeds``) is polished by
    Newton's method.  Minimizers with actions within 1e-12 of the best tie,
    and the lexicographically smallest interior among them is returned; the
    number of distinct tied minimizers is stored as ``multiplicity``.
    """
    q_start = np.atleast_1d(np.asarray(q_start, dtype=float))
    q_end = np.atleast_1d(np.asarray(q_end, dtype=float))
    if N < 1:
        raise ValueError("N must be >= 1")
    if N == 1:
        pts = np.vstack([q_start, q_end])
        return ConfigurationPath(pts, "fixed", action=float(spec.S(q_start, q_end)),
                                 gradient_norm=0.0, min_eigenvalue=math.inf, caveat=MINIMALITY_CAVEAT)

    all_seeds = default_seeds(q_start, q_end, N) + [np.asarray(s, dtype=float).reshape(N - 1, -1) for s in (seeds or [])]
    found = []
    for seed in all_seeds:
        res = _local_minimize(spec, q_start, q_end, seed)
        if res is None:
            continue
        pts, ev = res
        lam = ev.min_eigenvalue()
        if lam < PSD_TOL:
            continue
        found.append((ev.value, pts, ev, lam))
    if not found:
        raise NonConvergence(f"no local minimizer found from {len(all_seeds)} seeds")

    best = min(v for v, *_ in found)
    tied = [f for f in found if f[0] - best <= TIE_TOL]
    tied.sort(key=lambda f: tuple(f[1][1:-1].ravel()))
    distinct = []
    for f in tied:
        if all(np.max(np.abs(f[1] - g[1])) > 1e-8 for g in distinct):
            distinct.append(f)
    value, pts, ev, lam = tied[0]
    return ConfigurationPath(
        pts, "fixed", action=value, gradient_norm=float(np.max(np.abs(ev.gradient))),
        min_eigenvalue=lam, multiplicity=len(distinct), caveat=MINIMALITY_CAVEAT,
    )


@dataclass
class SubharmonicPoint:
    q: np.ndarray
    W: float
    defect: np.ndarray
    momentum: np.ndarray
    path: ConfigurationPath
    multiplicity: int = 1
    caveat: str = field(default=MINIMALITY_CAVEAT)


def subharmonic_solve(spec, rot, q, seeds=None) -> SubharmonicPoint:
    """Minimal n-step action from q to q + m, its defect p_n - p_0, and p_0."""
    rot = as_rotation(rot)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    path = minimize_fixed_endpoints(spec, q, q + rot.shift, rot.n, seeds=seeds)
    pts = path.points
    p0 = -np.asarray(spec.dS_q(pts[0], pts[1]), dtype=float)
    pn = np.asarray(spec.dS_Q(pts[-2], pts[-1]), dtype=float)
    path.rot = rot
    return SubharmonicPoint(q, float(path.action), pn - p0, p0, path, path.multiplicity)


def subharmonic_potential(spec, rot, q):
    """(W(q), defect(q)); the defect is the gradient of W."""
    sp = subharmonic_solve(spec, rot, q)
    return sp.W, sp.defect


def melnikov_potential(family, rot, grid) -> np.ndarray:
    """First-order term sum_{j<n} G(q + j m/n) of the subharmonic potential, sampled on ``grid``."""
    rot = as_rotation(rot)
    grid = np.asarray(grid, dtype=float)
    if rot.dim == 1 and grid.ndim == 1:
        grid = grid[:, None]
    pts = grid.reshape(-1, rot.dim)
    out = sum(family.G(pts + j * rot.frequency) for j in range(rot.n))
    return np.asarray(out).reshape(grid.shape[:-1])
