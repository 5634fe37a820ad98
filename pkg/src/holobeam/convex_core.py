"""Primal-dual interior-point solver for the beamforming subproblems.

Problems have the form::

    minimize    x^T Q x + c^T x
    subject to  ||x||^2 <= radius
                A x >= b

or, in epigraph mode, ``maximize gamma s.t. A x - b >= gamma, ||x||^2 <= radius``.
Complex problems are handled by lifting to the real embedding
``x = [Re w; Im w]``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"

# line-search constants
_ALPHA = 0.01
_BETA = 0.5
_BOUNDARY = 0.99
_MU = 10.0


@dataclass(frozen=True, eq=False)
class ConvexSubproblem:
    Q: np.ndarray
    c: np.ndarray
    radius: float
    A: np.ndarray = None
    b: np.ndarray = None
    epigraph: bool = False

    def __post_init__(self):
        n = len(self.c)
        Q = np.asarray(self.Q, dtype=float).reshape(n, n)
        A = np.zeros((0, n)) if self.A is None else np.asarray(self.A, dtype=float).reshape(-1, n)
        b = np.zeros(0) if self.b is None else np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise InvalidArgumentError("A and b disagree on the number of constraints")
        if not self.radius > 0:
            raise InvalidArgumentError("ball radius must be positive")
        Q = 0.5 * (Q + Q.T)
        if n and np.linalg.eigvalsh(Q)[0] < -1e-10 * max(1.0, np.abs(Q).max()):
            raise InvalidArgumentError("objective matrix is not positive semidefinite")
        if self.epigraph and A.shape[0] == 0:
            raise InvalidArgumentError("epigraph mode needs at least one affine constraint")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return len(self.c)

    def objective(self, x) -> float:
        if self.epigraph:
            return float(np.min(self.A @ x - self.b))
        return float(x @ self.Q @ x + self.c @ x)


@dataclass(eq=False)
class SolveCertificate:
    x: np.ndarray
    objective: float
    primal_residual: float
    stationarity_residual: float
    complementarity_residual: float
    iterations: int
    status: str
    multipliers: np.ndarray = field(default=None, repr=False)
    history: list = field(default_factory=list, repr=False)
    phase1_slack: float = np.nan

    def dump_csv(self, path) -> Path:
        """Write the iterate log (iteration, objective, residuals, merit)."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["phase", "iteration", "objective", "gap", "dual_residual", "merit_before", "merit_after"])
            for row in self.history:
                w.writerow([row[k] for k in ("phase", "iteration", "objective", "gap", "dual_residual",
                                             "merit_before", "merit_after")])
        return path


# ---------------------------------------------------------------------------
# complex lifting

@dataclass(frozen=True, eq=False)
class ComplexProblem:
    """Complex-variable problem: w^H Q w + Re(c^H w), ||w||^2 <= radius,
    Re(a_i^H w) >= b_i (or max-min epigraph over the same affine forms)."""

    Q: np.ndarray
    c: np.ndarray
    radius: float
    A: np.ndarray = None  # rows are a_i (complex), constraint Re(a_i^H w) >= b_i
    b: np.ndarray = None
    epigraph: bool = False


def lift_vector(w) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    return np.concatenate([w.real, w.imag])


def unlift_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    m = len(x) // 2
    return x[:m] + 1j * x[m:]


def lift_hermitian(q) -> np.ndarray:
    q = np.asarray(q, dtype=complex)
    return np.block([[q.real, -q.imag], [q.imag, q.real]])


def lift_complex(problem: ComplexProblem) -> ConvexSubproblem:
    """Real embedding; w^H Q w and Re(a^H w) become x^T Q_r x and a_r^T x."""
    m = len(problem.c)
    A = None
    if problem.A is not None:
        Ac = np.asarray(problem.A, dtype=complex).reshape(-1, m)
        A = np.array([lift_vector(a) for a in Ac]).reshape(-1, 2 * m)
    return ConvexSubproblem(lift_hermitian(problem.Q), lift_vector(problem.c), problem.radius,
                            A, problem.b, problem.epigraph)


# ---------------------------------------------------------------------------
# generic primal-dual method on   min 1/2 z^T P z + q^T z
#                                 s.t. ||z[:nx]||^2 <= R,  G z >= h

@dataclass
class _Standard:
    P: np.ndarray
    q: np.ndarray
    nx: int
    R: float
    G: np.ndarray
    h: np.ndarray

    def constraints(self, z):
        x = z[: self.nx]
        return np.concatenate([[x @ x - self.R], self.h - self.G @ z])

    def jacobian(self, z):
        jac = np.zeros((1 + len(self.h), len(z)))
        jac[0, : self.nx] = 2 * z[: self.nx]
        jac[1:] = -self.G
        return jac

    def objective(self, z):
        return 0.5 * z @ self.P @ z + self.q @ z


def _residual(prob: _Standard, z, lam, t):
    f = prob.constraints(z)
    df = prob.jacobian(z)
    r_dual = prob.P @ z + prob.q + df.T @ lam
    r_cent = -lam * f - 1.0 / t
    return r_dual, r_cent, f, df


def _newton_solve(m, rhs):
    try:
        return np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(m, rhs, rcond=None)[0]


def _primal_dual(prob: _Standard, z0, tol, max_iter, phase, history, stop=None):
    z = np.array(z0, dtype=float)
    f = prob.constraints(z)
    if np.any(f >= 0):
        raise InvalidArgumentError("interior-point start is not strictly feasible")
    lam = -1.0 / f  # centred for t = 1
    ncon = len(f)
    for it in range(1, max_iter + 1):
        eta = float(-f @ lam)
        t = _MU * ncon / eta
        r_dual, r_cent, f, df = _residual(prob, z, lam, t)
        if np.linalg.norm(r_dual) <= tol and eta <= tol:
            return z, lam, it - 1, True
        if stop is not None and stop(z):
            return z, lam, it - 1, True
        hess = prob.P.copy()
        hess[: prob.nx, : prob.nx] += 2 * lam[0] * np.eye(prob.nx)
        d = -lam / f
        m = hess + (df.T * d) @ df
        rhs = -r_dual - df.T @ (r_cent / f)
        dz = _newton_solve(m, rhs)
        dlam = (r_cent - lam * (df @ dz)) / f

        neg = dlam < 0
        s = min(1.0, _BOUNDARY * np.min(-lam[neg] / dlam[neg])) if np.any(neg) else 1.0
        while np.any(prob.constraints(z + s * dz) >= 0):
            s *= _BETA
            if s < 1e-16:
                break
        merit0 = np.hypot(np.linalg.norm(r_dual), np.linalg.norm(r_cent))
        while True:
            rd, rc, _, _ = _residual(prob, z + s * dz, lam + s * dlam, t)
            merit1 = np.hypot(np.linalg.norm(rd), np.linalg.norm(rc))
            if merit1 <= (1 - _ALPHA * s) * merit0 or s < 1e-16:
                break
            s *= _BETA
        if s < 1e-16:
            log.debug("line search stalled in %s at iteration %d", phase, it)
            return z, lam, it, False
        # the accepted step must not raise the residual merit at this barrier weight
        assert merit1 <= merit0 * (1 + 1e-12), "interior-point merit increased"
        z = z + s * dz
        lam = lam + s * dlam
        f = prob.constraints(z)
        history.append({"phase": phase, "iteration": it, "objective": float(prob.objective(z)),
                        "gap": eta, "dual_residual": float(np.linalg.norm(r_dual)),
                        "merit_before": float(merit0), "merit_after": float(merit1)})
    return z, lam, max_iter, False


def _kkt(prob: _Standard, z, lam):
    f = prob.constraints(z)
    df = prob.jacobian(z)
    stat = np.linalg.norm(prob.P @ z + prob.q + df.T @ lam)
    return float(max(0.0, f.max())), float(stat), float(np.max(np.abs(lam * f)))


def solve(problem: ConvexSubproblem, tol: float = 1e-6, max_iter: int = 200) -> SolveCertificate:
    """Solve a :class:`ConvexSubproblem` with a phase-1 / phase-2 primal-dual method.

    The problem is rescaled internally (unit ball, unit-size objective and
    constraint rows); residuals in the certificate refer to that scaled problem.
    """
    n = problem.n
    root = np.sqrt(problem.radius)
    A, b = problem.A, problem.b
    m = A.shape[0]
    # scaled variable u = x / root
    As = A * root
    row = np.maximum(np.linalg.norm(As, axis=1) + np.abs(b), 1e-300) if m else np.ones(0)
    As = As / row[:, None]
    bs = b / row
    history: list = []

    if problem.epigraph:
        # variables (u, gamma);  As u - bs - gamma >= 0  (gamma in row-scaled units)
        nz = n + 1
        P = np.zeros((nz, nz))
        q = np.zeros(nz)
        q[-1] = -1.0
        G = np.hstack([As, -np.ones((m, 1))])
        h = bs.copy()
        scale = 1.0
    else:
        nz = n
        Qs = problem.Q * problem.radius
        cs = problem.c * root
        scale = max(np.abs(Qs).max(initial=0.0), np.abs(cs).max(initial=0.0), 1e-300)
        P = 2 * Qs / scale
        q = cs / scale
        G, h = As, bs
    prob = _Standard(P, q, n, 1.0, G, h)

    # phase 1: maximise the minimum slack s over (z, s) with s <= 1
    z0 = np.zeros(nz)
    if problem.epigraph:
        z0[-1] = -np.max(h) - 1.0 if m else 0.0
    slack0 = -prob.constraints(z0)
    phase1_slack = np.nan
    if np.min(slack0) <= 0:
        G1 = np.vstack([np.hstack([G, -np.ones((m, 1))]), np.hstack([np.zeros((1, nz)), -np.ones((1, 1))])])
        h1 = np.concatenate([h, [-1.0]])
        P1 = np.zeros((nz + 1, nz + 1))
        q1 = np.zeros(nz + 1)
        q1[-1] = -1.0
        # ball gets the slack through its own row
        ph1 = _Phase1(P1, q1, n, 1.0, G1, h1)
        s0 = min(np.min(slack0), 1.0) - 1.0
        z1, lam1, it1, _ = _primal_dual(ph1, np.concatenate([z0, [s0]]), 1e-10, max_iter, "phase1", history,
                                        stop=lambda zz: zz[-1] > 0.5)
        phase1_slack = float(z1[-1])
        if z1[-1] <= 1e-9:
            x = z1[:n] * root
            return SolveCertificate(x, np.nan, float(-z1[-1]), np.nan, np.nan, it1, INFEASIBLE,
                                    lam1, history, phase1_slack)
        z0 = z1[:nz]
    else:
        it1 = 0

    z, lam, it2, converged = _primal_dual(prob, z0, tol, max_iter - it1, "phase2", history)
    primal, stat, comp = _kkt(prob, z, lam)
    status = OPTIMAL if (converged and max(primal, stat, comp) <= tol) else MAX_ITER
    x = z[:n] * root
    return SolveCertificate(x, problem.objective(x), primal, stat, comp, it1 + it2, status,
                            lam, history, phase1_slack)


class _Phase1(_Standard):
    """Phase-1 problem: every original constraint is shifted by the slack."""

    def constraints(self, z):
        x, s = z[: self.nx], z[-1]
        return np.concatenate([[x @ x - self.R + s], self.h - self.G @ z])

    def jacobian(self, z):
        jac = np.zeros((1 + len(self.h), len(z)))
        jac[0, : self.nx] = 2 * z[: self.nx]
        jac[0, -1] = 1.0
        jac[1:] = -self.G
        return jac
