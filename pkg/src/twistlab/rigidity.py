"""Rigidity analysis of the potential G: Fourier kill laws, breakdown threshold and epsilon sweeps."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .action import as_rotation, melnikov_potential
from .arithmetic import ArithmeticSetQuery, arithmetic_set, is_killed, rotations_from_query
from .errors import ConstantPotential
from .maps import TrigPotential, validate_spec
from .torus import TOL_TORUS, BreakupReport, assemble_torus, fourier_frequencies, grid_points

MODE_THRESHOLD = 1e-12
MELNIKOV_EPS_MAX = 1e-2
MELNIKOV_REL_TOL = 0.2


def sampled_modes(samples, threshold=MODE_THRESHOLD) -> dict:
    """Fourier coefficients of a function sampled on a uniform grid; entries below threshold are dropped."""
    samples = np.asarray(samples, dtype=float)
    d = samples.ndim
    N = samples.shape[0]
    coef = np.fft.fftn(samples) / samples.size
    nu = fourier_frequencies(N, d).reshape(-1, d)
    out = {}
    for k, c in zip(nu, coef.ravel()):
        if abs(c) > threshold:
            out[tuple(int(x) for x in k)] = complex(c)
    return out


def melnikov_modes(family, rot, N=None) -> dict:
    """Fourier coefficients of the Melnikov potential computed from its samples."""
    rot = as_rotation(rot)
    if N is None:
        top = int(np.max(np.abs(family.G.nus))) if family.G.nus.size else 0
        N = max(8, 2 * top + 2)
    samples = melnikov_potential(family, rot, grid_points(N, rot.dim))
    return sampled_modes(samples, threshold=0.0)


def _support(G) -> dict:
    if isinstance(G, TrigPotential):
        modes = G.modes
    elif isinstance(G, dict):
        modes = {tuple(int(x) for x in np.atleast_1d(k)): complex(v) for k, v in G.items()}
    else:
        return sampled_modes(G)
    return {k: v for k, v in modes.items() if abs(v) > MODE_THRESHOLD}


@dataclass
class RigidityReport:
    support: list
    killed: dict
    surviving: list
    verdict: str
    rotations: list
    arithmetic: Optional[list] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "support": [list(nu) for nu in self.support],
            "killed": {k: [list(nu) for nu in v] for k, v in self.killed.items()},
            "surviving": [list(nu) for nu in self.surviving],
            "verdict": self.verdict,
            "rotations": [list(r) for r in self.rotations],
            "arithmetic_set": None if self.arithmetic is None else [list(nu) for nu in self.arithmetic],
            "notes": list(self.notes),
        }


def rigidity_scan(G, rots=(), queries=(), max_denominator=8) -> RigidityReport:
    """Remove every mode of G that persistence at some rotation vector would force to vanish.

    ``rots`` are explicit rotation vectors; each query contributes all
    lambda q_i with lambda in (a_i, b_i) of denominator <= max_denominator.
    Verdicts: "constant" when only nu = 0 survives, "trig-polynomial" when
    queries were given and the survivors lie in their finite arithmetic
    sets, otherwise "undetermined".
    """
    support = sorted(_support(G))
    rot_list = [as_rotation(r) for r in rots]
    arith = None
    if queries:
        arith = set()
        for q in queries:
            if not isinstance(q, ArithmeticSetQuery):
                q = ArithmeticSetQuery(*q)
            rot_list += rotations_from_query(q, max_denominator)
            arith |= set(arithmetic_set(q).modes)
    killed = {}
    dead = set()
    for rot in rot_list:
        ks = [nu for nu in support if is_killed(rot, nu)]
        killed[str(rot)] = ks
        dead.update(ks)
    surviving = [nu for nu in support if nu not in dead]
    nonzero = [nu for nu in surviving if any(nu)]
    if not nonzero:
        verdict = "constant"
    elif arith is not None and all(nu in arith for nu in nonzero):
        verdict = "trig-polynomial"
    else:
        verdict = "undetermined"
    return RigidityReport(
        support=support,
        killed=killed,
        surviving=surviving,
        verdict=verdict,
        rotations=[r.to_list() for r in rot_list],
        arithmetic=None if arith is None else sorted(arith),
        notes=["the mean mode nu = 0 is never constrained"],
    )


# ---------------------------------------------------------------------------
# Breakdown threshold


@dataclass
class BreakdownBound:
    Lambda: float
    rate: float
    convex_curvature: float
    concave_curvature: float
    q_convex: np.ndarray
    v_convex: np.ndarray
    q_concave: np.ndarray
    v_concave: np.ndarray

    def witness(self, epsilon):
        """Point and direction where +eps D^2 G is most negative."""
        if epsilon >= 0:
            return self.q_concave, self.v_concave
        return self.q_convex, self.v_convex

    def to_dict(self) -> dict:
        return {
            "Lambda": self.Lambda,
            "rate": self.rate,
            "convex_curvature": self.convex_curvature,
            "concave_curvature": self.concave_curvature,
            "q_convex": self.q_convex.tolist(),
            "v_convex": self.v_convex.tolist(),
            "q_concave": self.q_concave.tolist(),
            "v_concave": self.v_concave.tolist(),
        }


def _extreme_curvature(G, sign, pts):
    H = G.hess(pts)
    ev, vecs = np.linalg.eigh(H)
    vals = sign * ev[:, -1] if sign > 0 else -ev[:, 0]
    k = int(np.argmax(vals))
    q0 = pts[k]

    def f(q):
        e = np.linalg.eigvalsh(G.hess(q))
        return -(e[-1] if sign > 0 else -e[0])

    res = minimize(f, q0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-15})
    if -res.fun > vals[k]:
        q0 = res.x
    e, v = np.linalg.eigh(G.hess(q0))
    j = -1 if sign > 0 else 0
    return float(sign * e[j]), np.asarray(q0, dtype=float), v[:, j]


def breakdown_bound(family, grid_size=None) -> BreakdownBound:
    """Lambda = rate / min(max positive, max negative curvature of G).

    For |eps| > Lambda the Green positivity form of S_eps fails in the
    witness direction, so no Lagrangian invariant graph can exist.
    """
    G = family.G
    if G.is_constant():
        raise ConstantPotential("D^2 G vanishes identically")
    d = family.dim
    rate = family.rate_bound
    if rate is None:
        rate = validate_spec(family.base, n_samples=2000, rng=0).rate_bound
    if not np.isfinite(rate):
        raise ValueError("breakdown threshold needs a map with bounded rate")
    N = grid_size or {1: 512, 2: 64}.get(d, 16)
    pts = grid_points(N, d).reshape(-1, d)
    cpos, qpos, vpos = _extreme_curvature(G, 1, pts)
    cneg, qneg, vneg = _extreme_curvature(G, -1, pts)
    if max(cpos, cneg) <= 1e-14:
        raise ConstantPotential("D^2 G vanishes identically")
    return BreakdownBound(rate / min(cpos, cneg), float(rate), cpos, cneg, qpos, vpos, qneg, vneg)


def green_form_at_witness(family, bound: BreakdownBound, epsilon, n_samples=200, spread=2.0, rng=None) -> float:
    """Largest sampled value of (d2S_qq(q*, Q) + d2S_QQ(Q', q*) + eps D^2 G(q*))(v*, v*).

    A negative value means Green positivity fails at the witness for every
    sampled pair (Q, Q').
    """
    rng = np.random.default_rng(rng)
    q, v = bound.witness(epsilon)
    base = family.base
    vals = []
    for _ in range(n_samples):
        Q = q + rng.uniform(-spread, spread, family.dim)
        Qp = q + rng.uniform(-spread, spread, family.dim)
        M = np.atleast_2d(base.d2S_qq(q, Q)) + np.atleast_2d(base.d2S_QQ(Qp, q)) + epsilon * family.G.hess(q)
        vals.append(float(v @ M @ v))
    return max(vals)


# ---------------------------------------------------------------------------
# Epsilon sweeps


@dataclass
class SweepResult:
    rot: list
    epsilons: list
    defect_sup: list
    oscillation: list
    verdicts: list
    persistence_set: list
    melnikov_range: float
    melnikov_ratios: dict
    melnikov_law_ok: Optional[bool]
    failures: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rot": self.rot,
            "epsilons": self.epsilons,
            "defect_sup": self.defect_sup,
            "oscillation": self.oscillation,
            "verdicts": self.verdicts,
            "persistence_set": self.persistence_set,
            "melnikov_range": self.melnikov_range,
            "melnikov_ratios": {repr(k): v for k, v in self.melnikov_ratios.items()},
            "melnikov_law_ok": self.melnikov_law_ok,
            "failures": {repr(k): v for k, v in self.failures.items()},
            "note": "persistence set is a grid approximation; isolation of persisting parameters is not certified",
        }


def epsilon_sweep(family, rot, epsilons, N=None, tol_torus=TOL_TORUS, workers=1) -> SweepResult:
    """Assemble the (m, n) graph at each epsilon and test the first-order Melnikov law."""
    rot = as_rotation(rot)
    epsilons = [float(e) for e in epsilons]

    def one(eps):
        return assemble_torus(family.with_epsilon(eps), rot, N, tol_torus)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, epsilons))
    else:
        results = [one(e) for e in epsilons]

    M = N or 256
    A1 = melnikov_potential(family, rot, grid_points(M, rot.dim))
    a_range = float(A1.max() - A1.min())
    defects, osc, verdicts, persist = [], [], [], []
    failures = {}
    for eps, res in zip(epsilons, results):
        defects.append(res.defect_sup)
        W = res.W
        osc.append(float(np.nanmax(W) - np.nanmin(W)) if np.isfinite(W).any() else math.inf)
        if isinstance(res, BreakupReport):
            verdicts.append("breakup")
            if res.failures:
                failures[eps] = len(res.failures)
        else:
            verdicts.append("persists")
            persist.append(eps)

    ratios = {e: o / abs(e) for e, o in zip(epsilons, osc) if 0 < abs(e) <= MELNIKOV_EPS_MAX}
    law = None
    if a_range > MODE_THRESHOLD and ratios:
        law = all(abs(r - a_range) <= MELNIKOV_REL_TOL * a_range for r in ratios.values())
    return SweepResult(
        rot=rot.to_list(),
        epsilons=epsilons,
        defect_sup=defects,
        oscillation=osc,
        verdicts=verdicts,
        persistence_set=persist,
        melnikov_range=a_range,
        melnikov_ratios=ratios,
        melnikov_law_ok=law,
        failures=failures,
    )
