"""Symplectic twist maps of T^d x R^d given by generating functions.

A map is described by S(q, Q) and its first and second derivatives.  The
lift F(q, p) = (Q, P) is recovered from the exact relations

    p = -dS/dq(q, Q),    P = dS/dQ(q, Q).

Angles are always stored as lifted reals; nothing here reduces mod 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import NonConvergence, SingularTwistBlock

TWO_PI = 2.0 * np.pi

NEWTON_MAXITER = 50
NEWTON_TOL = 1e-12


class PhasePoint(NamedTuple):
    q: np.ndarray
    p: np.ndarray


def as_vector(x, dim=None) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if dim is not None and v.shape != (dim,):
        raise ValueError(f"expected a vector of length {dim}, got shape {v.shape}")
    return v


def as_phase_point(x, dim=None) -> PhasePoint:
    q, p = x
    return PhasePoint(as_vector(q, dim), as_vector(p, dim))


# ---------------------------------------------------------------------------
# Integrable part and potentials


@dataclass(frozen=True, eq=False)
class IntegrableSpec:
    """Convex frequency Hamiltonian ell0 together with its Fenchel dual h0.

    The induced generating function is S0(q, Q) = h0(Q - q), whose lift is
    (q, p) -> (q + grad ell0(p), p).
    """

    ell0: Callable
    grad_ell0: Callable
    hess_ell0: Callable
    h0: Callable
    grad_h0: Callable
    hess_h0: Callable
    A: Optional[np.ndarray] = None

    @classmethod
    def quadratic(cls, A) -> "IntegrableSpec":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if not np.allclose(A, A.T) or np.linalg.eigvalsh(A).min() <= 0:
            raise ValueError("A must be symmetric positive definite")
        Ainv = np.linalg.inv(A)
        return cls(
            ell0=lambda p: 0.5 * p @ A @ p,
            grad_ell0=lambda p: A @ p,
            hess_ell0=lambda p: A,
            h0=lambda s: 0.5 * s @ Ainv @ s,
            grad_h0=lambda s: Ainv @ s,
            hess_h0=lambda s: Ainv,
            A=A,
        )

    @classmethod
    def from_convex(cls, ell0, grad_ell0, hess_ell0, tol=1e-14, maxiter=60) -> "IntegrableSpec":
        """Build h0 numerically as the Legendre transform of a strictly convex ell0."""

        def dual_point(s):
            p = np.array(s, dtype=float)
            for _ in range(maxiter):
                r = grad_ell0(p) - s
                if np.max(np.abs(r)) <= tol:
                    return p
                p = p - np.linalg.solve(hess_ell0(p), r)
            if np.max(np.abs(grad_ell0(p) - s)) <= 1e2 * tol:
                return p
            raise NonConvergence("Legendre inversion of grad ell0 failed", residual=float(np.max(np.abs(r))))

        def h0(s):
            p = dual_point(s)
            return s @ p - ell0(p)

        return cls(
            ell0=ell0,
            grad_ell0=grad_ell0,
            hess_ell0=hess_ell0,
            h0=h0,
            grad_h0=dual_point,
            hess_h0=lambda s: np.linalg.inv(hess_ell0(dual_point(s))),
        )

    def duality_residual(self, points) -> float:
        """max |grad h0(grad ell0(p)) - p| over the given momenta."""
        return max(float(np.max(np.abs(self.grad_h0(self.grad_ell0(p)) - p))) for p in np.atleast_2d(points))


class TrigPotential:
    """Real trigonometric polynomial G(q) = sum_k a_k cos(2 pi <nu_k, q> + phi_k)."""

    def __init__(self, nus, amplitudes, phases=None):
        self.nus = np.atleast_2d(np.asarray(nus, dtype=int))
        self.amplitudes = np.asarray(amplitudes, dtype=float).reshape(-1)
        if phases is None:
            phases = np.zeros_like(self.amplitudes)
        self.phases = np.asarray(phases, dtype=float).reshape(-1)
        if not (len(self.nus) == len(self.amplitudes) == len(self.phases)):
            raise ValueError("nus, amplitudes and phases must have equal length")
        self.dim = self.nus.shape[1]

    @classmethod
    def from_modes(cls, modes: dict) -> "TrigPotential":
        """Build from complex Fourier coefficients {nu: G_hat(nu)}; conjugate pairs are merged."""
        nus, amps, phases = [], [], []
        seen = set()
        for nu, c in sorted(modes.items()):
            nu = tuple(int(k) for k in nu)
            neg = tuple(-k for k in nu)
            if nu in seen:
                continue
            seen.add(nu)
            seen.add(neg)
            if all(k == 0 for k in nu):
                nus.append(nu)
                amps.append(float(np.real(c)))
                phases.append(0.0)
                continue
            c_neg = modes.get(neg, np.conj(c))
            if abs(c_neg - np.conj(c)) > 1e-12 * max(1.0, abs(c)):
                raise ValueError(f"modes {nu} and {neg} are not conjugate; G would not be real")
            nus.append(nu)
            amps.append(2.0 * abs(c))
            phases.append(float(np.angle(c)))
        return cls(nus, amps, phases)

    def _arg(self, q):
        return TWO_PI * (np.asarray(q, dtype=float) @ self.nus.T) + self.phases

    def __call__(self, q):
        return np.cos(self._arg(q)) @ self.amplitudes

    def grad(self, q):
        s = np.sin(self._arg(q)) * self.amplitudes
        return -TWO_PI * (s @ self.nus)

    def hess(self, q):
        c = np.cos(self._arg(q)) * self.amplitudes
        nn = np.einsum("ki,kj->kij", self.nus, self.nus)
        return -(TWO_PI**2) * np.tensordot(c, nn, axes=(-1, 0))

    @property
    def modes(self) -> dict:
        """Complex Fourier coefficients keyed by integer tuples."""
        out: dict = {}
        for nu, a, phi in zip(self.nus, self.amplitudes, self.phases):
            nu = tuple(int(k) for k in nu)
            if all(k == 0 for k in nu):
                out[nu] = out.get(nu, 0.0) + a * np.cos(phi)
                continue
            neg = tuple(-k for k in nu)
            out[nu] = out.get(nu, 0.0) + 0.5 * a * np.exp(1j * phi)
            out[neg] = out.get(neg, 0.0) + 0.5 * a * np.exp(-1j * phi)
        return {k: complex(v) for k, v in out.items()}

    def scaled(self, s: float) -> "TrigPotential":
        return TrigPotential(self.nus, s * self.amplitudes, self.phases)

    def is_constant(self) -> bool:
        return bool(np.all((self.nus == 0).all(axis=1) | (self.amplitudes == 0)))


def standard_potential(dim=1, axis=0, amplitude=1.0) -> TrigPotential:
    """G(q) = -amplitude cos(2 pi q_axis) / (2 pi)^2, so that G'' ranges over [-amplitude, amplitude]."""
    nu = np.zeros((1, dim), dtype=int)
    nu[0, axis] = 1
    return TrigPotential(nu, [-amplitude / TWO_PI**2])


# ---------------------------------------------------------------------------
# Maps


@dataclass(frozen=True, eq=False)
class MapSpec:
    dim: int
    S: Callable
    dS_q: Callable
    dS_Q: Callable
    d2S_qq: Callable
    d2S_qQ: Callable
    d2S_QQ: Callable
    alpha: Optional[float] = None
    beta: Optional[float] = None
    # None: unknown; np.inf: unbounded
    rate_bound: Optional[float] = None
    integrable: Optional[IntegrableSpec] = None
    name: str = "custom"

    @property
    def A(self):
        return None if self.integrable is None else self.integrable.A

    @property
    def base(self) -> "MapSpec":
        return self

    epsilon = 0.0
    G = None

    def predict_Q(self, q, p):
        if self.integrable is not None:
            return q + self.integrable.grad_ell0(p)
        return q + p / (self.alpha or 1.0)

    def predict_q(self, Q, P):
        if self.integrable is not None:
            return Q - self.integrable.grad_ell0(P)
        return Q - P / (self.alpha or 1.0)

    def closed_form(self, q, p):
        if self.A is None:
            return None
        return PhasePoint(q + self.A @ p, p.copy())


@dataclass(frozen=True, eq=False)
class PerturbedFamily:
    """The map generated by S_eps(q, Q) = S(q, Q) + eps G(q)."""

    base: MapSpec
    G: TrigPotential
    epsilon: float = 0.0

    def __post_init__(self):
        if self.G.dim != self.base.dim:
            raise ValueError("potential and map dimensions differ")

    @property
    def dim(self):
        return self.base.dim

    @property
    def alpha(self):
        return self.base.alpha

    @property
    def beta(self):
        return self.base.beta

    @property
    def rate_bound(self):
        return self.base.rate_bound

    @property
    def integrable(self):
        return self.base.integrable

    @property
    def A(self):
        return self.base.A

    @property
    def name(self):
        return f"{self.base.name}+eps*G"

    @property
    def G_modes(self) -> dict:
        return self.G.modes

    def with_epsilon(self, epsilon: float) -> "PerturbedFamily":
        return PerturbedFamily(self.base, self.G, float(epsilon))

    def S(self, q, Q):
        return self.base.S(q, Q) + self.epsilon * self.G(q)

    def dS_q(self, q, Q):
        return self.base.dS_q(q, Q) + self.epsilon * self.G.grad(q)

    def dS_Q(self, q, Q):
        return self.base.dS_Q(q, Q)

    def d2S_qq(self, q, Q):
        return self.base.d2S_qq(q, Q) + self.epsilon * self.G.hess(q)

    def d2S_qQ(self, q, Q):
        return self.base.d2S_qQ(q, Q)

    def d2S_QQ(self, q, Q):
        return self.base.d2S_QQ(q, Q)

    def predict_Q(self, q, p):
        return self.base.predict_Q(q, p + self.epsilon * self.G.grad(q))

    def predict_q(self, Q, P):
        return self.base.predict_q(Q, P)

    def closed_form(self, q, p):
        if self.A is None:
            return None
        P = p + self.epsilon * self.G.grad(q)
        return PhasePoint(q + self.A @ P, P)


def quadratic_map(A, name="quadratic") -> MapSpec:
    """Completely integrable map with S0(q, Q) = h0(Q - q), h0(s) = s^T A^{-1} s / 2."""
    integ = IntegrableSpec.quadratic(A)
    Ainv = np.linalg.inv(integ.A)
    ev = np.linalg.eigvalsh(Ainv)
    return MapSpec(
        dim=integ.A.shape[0],
        S=lambda q, Q: 0.5 * (Q - q) @ Ainv @ (Q - q),
        dS_q=lambda q, Q: -Ainv @ (Q - q),
        dS_Q=lambda q, Q: Ainv @ (Q - q),
        d2S_qq=lambda q, Q: Ainv,
        d2S_qQ=lambda q, Q: -Ainv,
        d2S_QQ=lambda q, Q: Ainv,
        alpha=float(ev.min()),
        beta=float(ev.max()),
        rate_bound=float(2 * ev.max()),
        integrable=integ,
        name=name,
    )


def shear(dim=1) -> MapSpec:
    """The integrable shear (q, p) -> (q + p, p)."""
    return quadratic_map(np.eye(dim), name="shear")


def integrable_map(integ: IntegrableSpec, dim=1, name="integrable") -> MapSpec:
    if integ.A is not None:
        return quadratic_map(integ.A, name=name)
    return MapSpec(
        dim=dim,
        S=lambda q, Q: integ.h0(Q - q),
        dS_q=lambda q, Q: -integ.grad_h0(Q - q),
        dS_Q=lambda q, Q: integ.grad_h0(Q - q),
        d2S_qq=lambda q, Q: integ.hess_h0(Q - q),
        d2S_qQ=lambda q, Q: -integ.hess_h0(Q - q),
        d2S_QQ=lambda q, Q: integ.hess_h0(Q - q),
        integrable=integ,
        name=name,
    )


def standard_family(epsilon=0.0, G=None, A=None) -> PerturbedFamily:
    """Generalized standard family: quadratic integrable part plus eps G(q)."""
    if A is None:
        dim = 1 if G is None else G.dim
        A = np.eye(dim)
    base = quadratic_map(A, name="standard" if np.allclose(A, np.eye(len(A))) else "quadratic")
    if G is None:
        G = standard_potential(base.dim)
    return PerturbedFamily(base, G, float(epsilon))


# ---------------------------------------------------------------------------
# Map evaluation


def _newton(residual, jacobian, x0, what):
    x = x0
    r = residual(x)
    rn = np.max(np.abs(r))
    for it in range(NEWTON_MAXITER):
        if rn <= NEWTON_TOL:
            return x
        try:
            step = np.linalg.solve(jacobian(x), r)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(f"{what}: singular twist block", residual=rn, iterations=it) from exc
        t = 1.0
        while True:
            x_new = x - t * step
            r_new = residual(x_new)
            rn_new = np.max(np.abs(r_new))
            if rn_new < rn or t < 1e-8:
                break
            t *= 0.5
        if rn_new >= rn and rn <= 10 * NEWTON_TOL:
            # stalled at the floating-point floor
            return x
        x, r, rn = x_new, r_new, rn_new
    if rn <= NEWTON_TOL:
        return x
    raise NonConvergence(f"{what}: no convergence in {NEWTON_MAXITER} iterations", residual=rn, iterations=NEWTON_MAXITER)


def eval_map(spec, x, method="auto") -> PhasePoint:
    """Image (Q, P) of the phase point x = (q, p) under the lift F."""
    q, p = as_phase_point(x, spec.dim)
    if method == "auto":
        cf = spec.closed_form(q, p)
        if cf is not None:
            return cf
    Q = _newton(lambda Q: spec.dS_q(q, Q) + p, lambda Q: spec.d2S_qQ(q, Q), spec.predict_Q(q, p), "eval_map")
    return PhasePoint(Q, np.asarray(spec.dS_Q(q, Q), dtype=float))


def eval_inverse(spec, x) -> PhasePoint:
    """Preimage (q, p) of x = (Q, P)."""
    Q, P = as_phase_point(x, spec.dim)
    q = _newton(lambda q: spec.dS_Q(q, Q) - P, lambda q: spec.d2S_qQ(q, Q).T, spec.predict_q(Q, P), "eval_inverse")
    return PhasePoint(q, -np.asarray(spec.dS_q(q, Q), dtype=float))


def orbit(spec, x, n) -> list:
    """The points x, F(x), ..., F^n(x)."""
    pts = [as_phase_point(x, spec.dim)]
    for _ in range(n):
        pts.append(eval_map(spec, pts[-1]))
    return pts


def tangent_blocks(spec, q, Q):
    """DF at the point with configuration pair (q, Q)."""
    Sqq = np.atleast_2d(spec.d2S_qq(q, Q))
    SqQ = np.atleast_2d(spec.d2S_qQ(q, Q))
    SQQ = np.atleast_2d(spec.d2S_QQ(q, Q))
    if np.linalg.cond(SqQ) > 1e12:
        raise SingularTwistBlock(f"d2S/dqdQ is numerically singular at q={q}, Q={Q}")
    inv = np.linalg.inv(SqQ)
    dQdq = -inv @ Sqq
    dQdp = -inv
    dPdq = SqQ.T + SQQ @ dQdq
    dPdp = SQQ @ dQdp
    return np.block([[dQdq, dQdp], [dPdq, dPdp]])


def tangent_map(spec, x) -> np.ndarray:
    """The 2d x 2d Jacobian DF(q, p)."""
    q, p = as_phase_point(x, spec.dim)
    Q, _ = eval_map(spec, (q, p))
    return tangent_blocks(spec, q, Q)


def symplectic_form(dim) -> np.ndarray:
    eye = np.eye(dim)
    zero = np.zeros((dim, dim))
    return np.block([[zero, eye], [-eye, zero]])


def symplecticity_residual(M) -> float:
    J = symplectic_form(M.shape[0] // 2)
    return float(np.max(np.abs(M.T @ J @ M - J)))


# ---------------------------------------------------------------------------
# Validation


def central_gradient(f, x, h=1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty(len(x))
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def central_jacobian(f, x, h=1e-5) -> np.ndarray:
    """Columns are d f / d x_i."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def _rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))))


def derivative_residual(spec, q, Q, h=1e-5) -> float:
    """Largest relative mismatch between analytic derivatives of S and central differences."""
    errs = [
        _rel_err(spec.dS_q(q, Q), central_gradient(lambda x: spec.S(x, Q), q, h)),
        _rel_err(spec.dS_Q(q, Q), central_gradient(lambda x: spec.S(q, x), Q, h)),
        _rel_err(spec.d2S_qq(q, Q), central_jacobian(lambda x: spec.dS_q(x, Q), q, h)),
        _rel_err(spec.d2S_qQ(q, Q), central_jacobian(lambda x: spec.dS_q(q, x), Q, h)),
        _rel_err(spec.d2S_QQ(q, Q), central_jacobian(lambda x: spec.dS_Q(q, x), Q, h)),
    ]
    return max(errs)


@dataclass
class ValidationReport:
    periodicity_residual: float
    derivative_residual: float
    alpha: float
    beta: float
    rate_bound: float
    perturbed_rate: float
    n_samples: int
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "periodicity_residual": self.periodicity_residual,
            "derivative_residual": self.derivative_residual,
            "alpha": self.alpha,
            "beta": self.beta,
            "rate_bound": self.rate_bound,
            "perturbed_rate": self.perturbed_rate,
            "n_samples": self.n_samples,
            "failures": list(self.failures),
            "passed": self.passed,
        }


def _op_norm(M):
    return float(np.linalg.norm(np.atleast_2d(M), 2))


def validate_spec(spec, n_samples=10_000, fd_samples=100, spread=2.0, rng=None) -> ValidationReport:
    """Sample the structural properties of a generating function.

    alpha and beta are the extremal Rayleigh quotients of -d2S/dqdQ over
    n_samples random pairs (q, Q) with q in [0, 1)^d and |Q - q| <= spread.
    For a perturbed family they, and ``rate_bound``, are those of the base
    map; ``perturbed_rate`` includes the eps D^2 G term.
    """
    rng = np.random.default_rng(rng)
    d = spec.dim
    base = spec.base
    failures = []

    qs = rng.random((n_samples, d))
    Qs = qs + rng.uniform(-spread, spread, (n_samples, d))
    lo, hi, rate, prate = np.inf, -np.inf, 0.0, 0.0
    for q, Q in zip(qs, Qs):
        B = -np.atleast_2d(base.d2S_qQ(q, Q))
        ev = np.linalg.eigvalsh(0.5 * (B + B.T))
        lo = min(lo, ev[0])
        hi = max(hi, ev[-1])
        rate = max(rate, _op_norm(base.d2S_qq(q, Q)) + _op_norm(base.d2S_QQ(q, Q)))
        prate = max(prate, _op_norm(spec.d2S_qq(q, Q)) + _op_norm(spec.d2S_QQ(q, Q)))
    if lo <= 0:
        failures.append(f"strong positivity violated: min Rayleigh quotient {lo:.3e}")
    if spec.alpha is not None and lo < spec.alpha - 1e-9:
        failures.append(f"declared alpha={spec.alpha} exceeds sampled {lo}")
    if spec.beta is not None and hi > spec.beta + 1e-9:
        failures.append(f"declared beta={spec.beta} below sampled {hi}")

    m = min(fd_samples, n_samples)
    per = 0.0
    der = 0.0
    for q, Q in zip(qs[:m], Qs[:m]):
        k = rng.integers(-3, 4, d).astype(float)
        s0 = spec.S(q, Q)
        per = max(per, abs(spec.S(q + k, Q + k) - s0) / max(1.0, abs(s0)))
        der = max(der, derivative_residual(spec, q, Q))
    if per > 1e-10:
        failures.append(f"S not invariant under integer shifts: residual {per:.3e}")
    if der > 1e-6:
        failures.append(f"derivatives disagree with finite differences: {der:.3e}")

    return ValidationReport(
        periodicity_residual=per,
        derivative_residual=der,
        alpha=float(lo),
        beta=float(hi),
        rate_bound=float(rate),
        perturbed_rate=float(prate),
        n_samples=n_samples,
        failures=failures,
    )
