"""Periodic orbits, (m, n)-periodic graphs and their verification."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import subspace_angles

from .action import (
    ConfigurationPath,
    RotationVector,
    action,
    as_rotation,
    subharmonic_solve,
)
from .errors import LocalTwistLoss, NonConvergence
from .maps import PhasePoint, as_phase_point, eval_inverse, eval_map, tangent_blocks

TOL_TORUS = 1e-8
ORBIT_TOL = 1e-10
TWIST_DET_MIN = 1e-10
MAX_ORBIT_STEP = 0.1  # configuration-space trust radius for cyclic Newton

TORUS_SCHEMA = "twistlab-torus/1"


def default_resolution(dim: int) -> int:
    return {1: 64, 2: 32}.get(dim, 16)


def grid_points(N: int, dim: int) -> np.ndarray:
    """Uniform grid on [0, 1)^d, shape (N,)*d + (d,), indexed 'ij'."""
    axes = [np.arange(N) / N] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def fourier_frequencies(N: int, dim: int) -> np.ndarray:
    """Integer frequency vectors matching np.fft.fftn output, shape (N,)*d + (d,)."""
    f = np.fft.fftfreq(N, 1.0 / N).round().astype(int)
    return np.stack(np.meshgrid(*[f] * dim, indexing="ij"), axis=-1)


def orbit_with_tangent(spec, x, n):
    """F^n(x) together with DF^n(x) and the visited points."""
    q, p = as_phase_point(x, spec.dim)
    M = np.eye(2 * spec.dim)
    pts = [PhasePoint(q, p)]
    for _ in range(n):
        Q, P = eval_map(spec, pts[-1])
        M = tangent_blocks(spec, pts[-1].q, Q) @ M
        pts.append(PhasePoint(Q, P))
    return pts, M


# ---------------------------------------------------------------------------
# Periodic orbits


@dataclass
class PeriodicOrbit:
    rot: RotationVector
    q: np.ndarray
    p: np.ndarray
    residual: float
    minimizing: bool
    min_eigenvalue: float
    action: float
    uniqueness_spread: Optional[float] = None

    @property
    def points(self) -> list:
        return [PhasePoint(a, b) for a, b in zip(self.q, self.p)]

    def to_dict(self) -> dict:
        return {
            "rot": self.rot.to_list(),
            "q": self.q.tolist(),
            "p": self.p.tolist(),
            "residual": self.residual,
            "minimizing": self.minimizing,
            "min_eigenvalue": self.min_eigenvalue,
            "action": self.action,
            "uniqueness_spread": self.uniqueness_spread,
        }


def radial_momentum(spec, rot, q, p_init, tol=1e-12, maxiter=50):
    """Solve pi_1 F^n(q, p) = q + m for p by Newton's method from p_init."""
    rot = as_rotation(rot)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p_init, dtype=float)).copy()
    d = spec.dim
    target = q + rot.shift
    for it in range(maxiter):
        pts, M = orbit_with_tangent(spec, (q, p), rot.n)
        r = pts[-1].q - target
        if np.max(np.abs(r)) <= tol:
            return p, pts, M
        B = M[:d, d:]
        if abs(np.linalg.det(B)) < TWIST_DET_MIN:
            raise LocalTwistLoss(f"F^n is not a local twist at q={q}", det=float(np.linalg.det(B)))
        p = p - np.linalg.solve(B, r)
    raise NonConvergence("radial momentum solve did not converge", residual=float(np.max(np.abs(r))), iterations=maxiter)


def _periodic_eval(spec, rot, x):
    pts = np.vstack([x, x[0] + rot.shift])
    return action(spec, ConfigurationPath(pts, "periodic", rot))


def solve_periodic_orbit(spec, rot, q_seed, n_trials=10, rng=None, maxiter=100) -> PeriodicOrbit:
    """Periodic orbit of type (m, n) near the straight path through q_seed.

    Critical points of the cyclic action (q_n = q_0 + m) are found by
    Newton's method with least-squares steps, so that degenerate directions
    (a whole torus of orbits) leave q_0 close to the seed.  For minimizing
    orbits the momentum at q_0 is re-solved from ``n_trials`` random
    initial momenta; ``uniqueness_spread`` is the largest disagreement.
    """
    rot = as_rotation(rot)
    rng = np.random.default_rng(rng)
    q_seed = np.atleast_1d(np.asarray(q_seed, dtype=float))
    x = q_seed + np.arange(rot.n)[:, None] * rot.frequency
    ev = _periodic_eval(spec, rot, x)
    for _ in range(maxiter):
        g = ev.gradient
        gn = float(np.max(np.abs(g)))
        if gn <= 1e-13:
            break
        H = ev.dense_hessian()
        newton = np.linalg.lstsq(H, -g.ravel(), rcond=1e-10)[0].reshape(x.shape)
        size = float(np.max(np.abs(newton)))
        if size > MAX_ORBIT_STEP:
            newton *= MAX_ORBIT_STEP / size
        accepted = None
        # a singular Hessian (inflection of the action) stalls Newton; descend instead
        for step in (newton, -g):
            t = 1.0
            while t > 1e-10:
                trial = _periodic_eval(spec, rot, x + t * step)
                if np.max(np.abs(trial.gradient)) < gn:
                    accepted = x + t * step
                    break
                t *= 0.5
            if accepted is not None:
                break
        if accepted is None:
            break
        x = accepted
        ev = trial

    q = np.vstack([x, x[0] + rot.shift])
    p = np.array([-spec.dS_q(q[j], q[j + 1]) for j in range(rot.n)]).reshape(rot.n, spec.dim)
    pts = [PhasePoint(q[0], p[0])]
    step_err = 0.0
    for j in range(rot.n):
        pts.append(eval_map(spec, pts[-1]))
        if j + 1 < rot.n:
            step_err = max(step_err, float(np.max(np.abs(pts[-1].q - q[j + 1]))), float(np.max(np.abs(pts[-1].p - p[j + 1]))))
    residual = max(
        float(np.max(np.abs(pts[-1].q - q[0] - rot.shift))),
        float(np.max(np.abs(pts[-1].p - p[0]))),
        step_err,
    )
    if residual > ORBIT_TOL:
        raise NonConvergence(f"periodic orbit {rot} from seed {q_seed}: residual {residual:.3e}", residual=residual)
    lam = ev.min_eigenvalue()
    orbit = PeriodicOrbit(rot, q[:-1], p, residual, lam >= -1e-9, lam, float(ev.value))
    if orbit.minimizing and n_trials:
        spread = 0.0
        for _ in range(n_trials):
            p_init = p[0] + rng.uniform(-0.1, 0.1, spec.dim) / rot.n
            p_k, *_ = radial_momentum(spec, rot, q[0], p_init)
            spread = max(spread, float(np.max(np.abs(p_k - p[0]))))
        orbit.uniqueness_spread = spread
    return orbit


# ---------------------------------------------------------------------------
# Monodromy


def charpoly(M) -> np.ndarray:
    """Coefficients [1, c_1, ..., c_k] of det(X I - M) by the Faddeev-LeVerrier recursion."""
    k = M.shape[0]
    coeffs = [1.0]
    Mk = np.zeros_like(M)
    eye = np.eye(k)
    for i in range(1, k + 1):
        Mk = M @ Mk + coeffs[-1] * eye
        coeffs.append(-np.trace(M @ Mk) / i)
    return np.array(coeffs)


def unipotent_charpoly(k) -> np.ndarray:
    return np.array([math.comb(k, i) * (-1) ** i for i in range(k + 1)], dtype=float)


def green_matrix(spec, q, p) -> np.ndarray:
    """d2S/dq2(q, Q(q, p)) + d2S/dQ2(Q^{-1}(q, p), q)."""
    q, p = as_phase_point((q, p), spec.dim)
    Q, _ = eval_map(spec, (q, p))
    q_prev, _ = eval_inverse(spec, (q, p))
    G = np.atleast_2d(spec.d2S_qq(q, Q)) + np.atleast_2d(spec.d2S_QQ(q_prev, q))
    return 0.5 * (G + G.T)


def green_gap(spec, q, p) -> float:
    return float(np.linalg.eigvalsh(green_matrix(spec, q, p))[0])


@dataclass
class MonodromyReport:
    DFn: np.ndarray
    charpoly: np.ndarray
    charpoly_defect: float
    nilpotency_residual: float
    local_twist_det: float
    green_gap: float
    symplectic_residual: float

    def lagrangian_criteria(self, tol=1e-7, twist_tol=1e-8) -> bool:
        return (
            self.charpoly_defect <= tol
            and self.nilpotency_residual <= tol
            and abs(self.local_twist_det) >= twist_tol
            and self.green_gap > 0
        )

    def to_dict(self) -> dict:
        return {
            "DFn": self.DFn.tolist(),
            "charpoly": self.charpoly.tolist(),
            "charpoly_defect": self.charpoly_defect,
            "nilpotency_residual": self.nilpotency_residual,
            "local_twist_det": self.local_twist_det,
            "green_gap": self.green_gap,
            "symplectic_residual": self.symplectic_residual,
        }


def monodromy_report(spec, orbit, rot=None) -> MonodromyReport:
    """Monodromy diagnostics along a periodic orbit or at a point (q, p) of a graph."""
    if isinstance(orbit, PeriodicOrbit):
        rot = orbit.rot
        x = (orbit.q[0], orbit.p[0])
    else:
        if rot is None:
            raise ValueError("rot is required when orbit is a phase point")
        rot = as_rotation(rot)
        x = orbit
    d = spec.dim
    pts, M = orbit_with_tangent(spec, x, rot.n)
    cp = charpoly(M)
    E = M - np.eye(2 * d)
    J = np.block([[np.zeros((d, d)), np.eye(d)], [-np.eye(d), np.zeros((d, d))]])
    return MonodromyReport(
        DFn=M,
        charpoly=cp,
        charpoly_defect=float(np.max(np.abs(cp - unipotent_charpoly(2 * d)))),
        nilpotency_residual=float(np.linalg.norm(E @ E, np.inf)),
        local_twist_det=float(np.linalg.det(M[:d, d:])),
        green_gap=green_gap(spec, *pts[0]),
        symplectic_residual=float(np.max(np.abs(M.T @ J @ M - J))),
    )


# ---------------------------------------------------------------------------
# Graphs on the torus


@dataclass
class TorusGrid:
    """Candidate (m, n)-periodic graph p = gamma(q) sampled on a uniform N^d grid."""

    rot: RotationVector
    N: int
    gamma: np.ndarray
    W: Optional[np.ndarray] = None
    defect_sup: Optional[float] = None
    verification: dict = field(default_factory=dict)

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        d = self.rot.dim
        if self.gamma.shape != (self.N,) * d + (d,):
            raise ValueError(f"gamma has shape {self.gamma.shape}, expected {(self.N,) * d + (d,)}")

    @property
    def dim(self) -> int:
        return self.rot.dim

    @property
    def points(self) -> np.ndarray:
        return grid_points(self.N, self.dim)

    @property
    def modes(self) -> np.ndarray:
        axes = tuple(range(self.dim))
        return np.fft.fftn(self.gamma, axes=axes) / self.N**self.dim

    @property
    def c(self) -> np.ndarray:
        return self.gamma.reshape(-1, self.dim).mean(axis=0)

    @property
    def u_modes(self) -> np.ndarray:
        """Fourier coefficients of the primitive u in gamma = c + grad u (zero mean)."""
        nu = fourier_frequencies(self.N, self.dim)
        n2 = np.sum(nu * nu, axis=-1)
        num = np.sum(self.modes * nu, axis=-1)
        out = np.zeros(n2.shape, dtype=complex)
        nz = n2 > 0
        out[nz] = num[nz] / (2j * np.pi * n2[nz])
        return out

    @property
    def lagrangian_residual(self) -> float:
        """max over nu != 0 of the part of gamma_hat(nu) orthogonal to nu."""
        nu = fourier_frequencies(self.N, self.dim).astype(float)
        g = self.modes
        n2 = np.sum(nu * nu, axis=-1)
        nz = n2 > 0
        unit = np.zeros_like(nu)
        unit[nz] = nu[nz] / np.sqrt(n2[nz])[:, None]
        par = np.sum(g * unit, axis=-1)[..., None] * unit
        perp = np.linalg.norm(g - par, axis=-1)
        return float(perp[nz].max()) if nz.any() else 0.0

    def derivative(self) -> np.ndarray:
        """Spectral Jacobian D gamma on the grid, shape (N,)*d + (d, d); [..., i, k] = d gamma_i / d q_k."""
        nu = fourier_frequencies(self.N, self.dim)
        axes = tuple(range(self.dim))
        g = self.modes * self.N**self.dim
        cols = []
        for k in range(self.dim):
            freq = nu[..., k].astype(float)
            if self.N % 2 == 0:
                freq[np.abs(nu[..., k]) == self.N // 2] = 0.0
            cols.append(np.real(np.fft.ifftn(2j * np.pi * freq[..., None] * g, axes=axes)))
        return np.stack(cols, axis=-1)

    def interpolate(self, x) -> np.ndarray:
        """Trigonometric interpolant of gamma at arbitrary (lifted) points, shape (..., d)."""
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        pts = x.reshape(-1, self.dim)
        nu = fourier_frequencies(self.N, self.dim).reshape(-1, self.dim)
        coef = self.modes.reshape(-1, self.dim)
        phase = np.exp(2j * np.pi * (pts @ nu.T))
        return np.real(phase @ coef).reshape(lead + (self.dim,))

    def to_dict(self) -> dict:
        return {
            "schema": TORUS_SCHEMA,
            "rot": self.rot.to_list(),
            "N": self.N,
            "c": self.c.tolist(),
            "gamma": self.gamma.ravel().tolist(),
            "verification": self.verification,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data) -> "TorusGrid":
        if data.get("schema") != TORUS_SCHEMA:
            raise ValueError(f"unsupported torus schema {data.get('schema')!r}")
        rot = RotationVector(data["rot"][:-1], data["rot"][-1])
        d = rot.dim
        gamma = np.array(data["gamma"], dtype=float).reshape((data["N"],) * d + (d,))
        return cls(rot, int(data["N"]), gamma, verification=dict(data.get("verification", {})))

    @classmethod
    def from_json(cls, text: str) -> "TorusGrid":
        return cls.from_dict(json.loads(text))


@dataclass
class BreakupReport:
    rot: RotationVector
    N: int
    defect_sup: float
    oscillation: float
    W: np.ndarray
    defect: np.ndarray
    multiplicity: np.ndarray
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rot": self.rot.to_list(),
            "N": self.N,
            "defect_sup": self.defect_sup,
            "oscillation": self.oscillation,
            "max_multiplicity": int(self.multiplicity.max()) if self.multiplicity.size else 0,
            "failures": list(self.failures),
        }


def assemble_torus(spec, rot, N=None, tol_torus=TOL_TORUS):
    """Solve the subharmonic problem at every grid point and assemble gamma = p_0(q).

    Returns a TorusGrid when sup |defect| <= tol_torus at every grid point,
    otherwise a BreakupReport.
    """
    rot = as_rotation(rot)
    d = rot.dim
    if d != spec.dim:
        raise ValueError("rotation vector and map dimensions differ")
    N = N or default_resolution(d)
    shape = (N,) * d
    pts = grid_points(N, d)
    W = np.full(shape, np.nan)
    defect = np.full(shape + (d,), np.nan)
    gamma = np.full(shape + (d,), np.nan)
    mult = np.zeros(shape, dtype=int)
    failures = []
    prev = None
    for idx in np.ndindex(*shape):
        q = pts[idx]
        seeds = None
        if prev is not None and rot.n > 1:
            seeds = [prev[1] + (q - prev[0])]
        try:
            sp = subharmonic_solve(spec, rot, q, seeds=seeds)
        except NonConvergence as exc:
            failures.append({"index": list(idx), "q": q.tolist(), "error": str(exc)})
            prev = None
            continue
        W[idx] = sp.W
        defect[idx] = sp.defect
        gamma[idx] = sp.momentum
        mult[idx] = sp.multiplicity
        prev = (q, sp.path.interior)

    ok = ~np.isnan(W)
    defect_sup = float(np.max(np.linalg.norm(defect[ok], axis=-1))) if ok.any() else math.inf
    osc = float(W[ok].max() - W[ok].min()) if ok.any() else math.inf
    if failures or defect_sup > tol_torus:
        return BreakupReport(rot, N, defect_sup, osc, W, defect, mult, failures)
    return TorusGrid(rot, N, gamma, W=W, defect_sup=defect_sup)


# ---------------------------------------------------------------------------
# Continuation of the radial graph in epsilon


@dataclass
class RadialGraph:
    epsilon: float
    gamma: np.ndarray
    defect: np.ndarray
    defect_sup: float
    radial_residual: float
    twist_det_min: float

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "defect_sup": self.defect_sup,
            "radial_residual": self.radial_residual,
            "twist_det_min": self.twist_det_min,
        }


def _radial_graph(family, rot, pts, gamma_guess, eps):
    spec = family.with_epsilon(eps)
    d = rot.dim
    gamma = np.empty_like(gamma_guess)
    defect = np.empty_like(gamma_guess)
    rres = 0.0
    tmin = math.inf
    for idx in np.ndindex(*pts.shape[:-1]):
        q = pts[idx]
        try:
            p, orb, M = radial_momentum(spec, rot, q, gamma_guess[idx])
        except LocalTwistLoss as exc:
            exc.epsilon = eps
            raise
        det = float(np.linalg.det(M[:d, d:]))
        if abs(det) < TWIST_DET_MIN:
            raise LocalTwistLoss(f"local twist lost at eps={eps}, q={q}", epsilon=eps, det=det)
        tmin = min(tmin, abs(det))
        gamma[idx] = p
        defect[idx] = orb[-1].p - p
        rres = max(rres, float(np.max(np.abs(orb[-1].q - q - rot.shift))))
    return RadialGraph(eps, gamma, defect, float(np.max(np.linalg.norm(defect, axis=-1))), rres, tmin)


def continue_radial_graph(family, rot, torus0, eps_target, steps=10) -> list:
    """Continue gamma_eps solving pi_1 F_eps^n(q, gamma(q)) = q + m from family.epsilon to eps_target.

    Secant predictor and per-point Newton corrector; returns the graphs at
    every step, starting with the corrected initial graph.
    """
    rot = as_rotation(rot)
    pts = grid_points(torus0.N, rot.dim)
    eps0 = float(family.epsilon)
    graphs = [_radial_graph(family, rot, pts, torus0.gamma, eps0)]
    for k in range(1, steps + 1):
        eps = eps0 + k * (eps_target - eps0) / steps
        guess = graphs[-1].gamma
        if len(graphs) > 1:
            guess = 2 * graphs[-1].gamma - graphs[-2].gamma
        graphs.append(_radial_graph(family, rot, pts, guess, eps))
    return graphs


# ---------------------------------------------------------------------------
# Verification


@dataclass
class TorusVerdict:
    periodicity: float
    invariance: float
    invariance_tol: float
    lagrangian: float
    action_oscillation: float
    action_value: float
    lipschitz_slope: float
    lipschitz_bound: float
    green_gap_min: float
    tol: float = TOL_TORUS

    @property
    def checks(self) -> dict:
        return {
            "periodicity": self.periodicity <= self.tol,
            "invariance": self.invariance <= self.invariance_tol,
            "lagrangian": self.lagrangian <= self.tol,
            "action_constancy": self.action_oscillation <= self.tol,
            "lipschitz": self.lipschitz_slope <= self.lipschitz_bound + 1e-6,
            "green_positivity": self.green_gap_min > 0,
        }

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "periodicity": self.periodicity,
            "invariance": self.invariance,
            "invariance_tol": self.invariance_tol,
            "lagrangian": self.lagrangian,
            "action_oscillation": self.action_oscillation,
            "action_value": self.action_value,
            "lipschitz_slope": self.lipschitz_slope,
            "lipschitz_bound": self.lipschitz_bound,
            "green_gap_min": self.green_gap_min,
            "checks": self.checks,
            "passed": self.passed,
        }


def verify_torus(spec, torus: TorusGrid, tol=TOL_TORUS) -> TorusVerdict:
    """Check periodicity, invariance, Lagrangianity, action constancy, slope bound and Green positivity.

    Every residual is reported separately; no criterion is inferred from another.
    """
    rot = torus.rot
    d = torus.dim
    N = torus.N
    pts = torus.points
    per = inv = 0.0
    actions = []
    bound = 0.0
    gap = math.inf
    images = []
    for idx in np.ndindex(*pts.shape[:-1]):
        q = pts[idx]
        p = torus.gamma[idx]
        orb = [PhasePoint(q, p)]
        for _ in range(rot.n):
            orb.append(eval_map(spec, orb[-1]))
        per = max(per, float(np.max(np.abs(orb[-1].q - q - rot.shift))), float(np.max(np.abs(orb[-1].p - p))))
        actions.append(sum(float(spec.S(orb[j].q, orb[j + 1].q)) for j in range(rot.n)))
        images.append(orb[1])
        Q = orb[1].q
        bound = max(bound, np.linalg.norm(np.atleast_2d(spec.d2S_qq(q, Q)), 2), np.linalg.norm(np.atleast_2d(spec.d2S_QQ(q, Q)), 2))
        gap = min(gap, green_gap(spec, q, p))
    Qs = np.array([im.q for im in images])
    Ps = np.array([im.p for im in images])
    inv = float(np.max(np.abs(torus.interpolate(Qs) - Ps)))

    slope = 0.0
    for k in range(d):
        diff = np.roll(torus.gamma, -1, axis=k) - torus.gamma
        slope = max(slope, float(np.max(np.linalg.norm(diff, axis=-1))) * N)

    actions = np.array(actions)
    verdict = TorusVerdict(
        periodicity=per,
        invariance=inv,
        invariance_tol=max(tol, 0.1 / N**2),
        lagrangian=torus.lagrangian_residual,
        action_oscillation=float(actions.max() - actions.min()),
        action_value=float(actions.mean()),
        lipschitz_slope=slope,
        lipschitz_bound=float(bound),
        green_gap_min=float(gap),
        tol=tol,
    )
    torus.verification = verdict.to_dict()
    return verdict


def tangent_space_angle(spec, torus: TorusGrid, index) -> float:
    """Largest principal angle between ker(DF^n - I) and the tangent of the graph at a grid point."""
    d = torus.dim
    q = torus.points[index]
    p = torus.gamma[index]
    _, M = orbit_with_tangent(spec, (q, p), torus.rot.n)
    _, s, vt = np.linalg.svd(M - np.eye(2 * d))
    kernel = vt[-d:].T
    Dg = torus.derivative()[index]
    tangent = np.vstack([np.eye(d), Dg])
    return float(np.max(subspace_angles(kernel, tangent)))


def kernel_dimension(spec, torus: TorusGrid, index, tol=1e-8) -> int:
    q = torus.points[index]
    _, M = orbit_with_tangent(spec, (q, torus.gamma[index]), torus.rot.n)
    s = np.linalg.svd(M - np.eye(2 * torus.dim), compute_uv=False)
    return int(np.sum(s <= tol))


__all__ = [
    "BreakupReport",
    "MonodromyReport",
    "PeriodicOrbit",
    "RadialGraph",
    "TorusGrid",
    "TorusVerdict",
    "assemble_torus",
    "continue_radial_graph",
    "monodromy_report",
    "radial_momentum",
    "solve_periodic_orbit",
    "verify_torus",
]
