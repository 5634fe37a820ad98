"""Sum-rate maximisation under energy-harvesting constraints.

Block coordinate descent over the MSE weights ``rho``, the receive combiners
and the beam weights, with the nonconvex harvesting constraints handled by
successive convex approximation.

Users are ordered DUs first, then EUs; stream ``j`` is intended for user ``j``.
Beam weights are stored as a (n_streams, 3*N) complex array whose rows are the
flattened (N, 3) wavenumber coefficients.

Every weight subproblem depends on the weights only through the inner products
``h_u^H w_j`` and the norm, so it is solved exactly inside span{h_u}; the
orthogonal complement would only burn power.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import convex_core
from .energy import EhCircuit, ReceiverGeometry, eh_output, eh_threshold
from .errors import (DegenerateChannelError, InfeasibleRequirementError,
                     InvalidArgumentError)
from .focusing import channel_gram, fix_phase, principal_eigvec
from .geometry_em import Aperture, MediumParams, as_point, sample_user_channel
from .wavenumber import FourierBasisSet, channel_transform

log = logging.getLogger(__name__)

STAGES = ("rho", "psi", "reinit", "sca", "fill")


@dataclass(frozen=True, eq=False)
class Scenario:
    aperture: Aperture
    medium: MediumParams
    du_positions: np.ndarray
    eu_positions: np.ndarray
    pt: float  # A^2
    p0: float  # W
    sigma2: float  # V^2/m^2
    circuit: EhCircuit
    geom: ReceiverGeometry
    basis: FourierBasisSet

    def __post_init__(self):
        du = np.asarray(self.du_positions, dtype=float).reshape(-1, 3)
        eu = np.asarray(self.eu_positions, dtype=float).reshape(-1, 3)
        for p in np.vstack([du, eu]):
            as_point(p)
        if len(du) + len(eu) < 1:
            raise InvalidArgumentError("scenario needs at least one user")
        if not self.pt > 0:
            raise InvalidArgumentError("transmit power must be positive")
        if not self.sigma2 > 0:
            raise InvalidArgumentError("noise power must be positive")
        if self.p0 < 0 or self.p0 >= self.circuit.m:
            raise InvalidArgumentError("harvest target must lie in [0, M)")
        object.__setattr__(self, "du_positions", du)
        object.__setattr__(self, "eu_positions", eu)

    @property
    def k(self) -> int:
        return len(self.du_positions)

    @property
    def l(self) -> int:
        return len(self.eu_positions)

    @property
    def p0_prime(self) -> float:
        return eh_threshold(self.p0, self.geom, self.circuit) if self.l else 0.0


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Linear maps from stacked weights to the 3-vector field at each user.

    ``mats[u]`` has shape (3, 3*N); ``grams[u]`` is the continuous-aperture
    3x3 Gram matrix used for the eigen-combiner initialisation.
    """

    mats: np.ndarray
    grams: np.ndarray
    k: int
    l: int

    @property
    def n_users(self) -> int:
        return self.k + self.l

    @property
    def dim(self) -> int:
        return self.mats.shape[2]

    @classmethod
    def from_omegas(cls, omegas, grams, k: int, l: int) -> "ChannelSet":
        om = np.asarray(omegas, dtype=complex)  # (U, N, 3, 3)
        mats = om.transpose(0, 2, 1, 3).reshape(om.shape[0], 3, -1)
        return cls(mats, np.asarray(grams, dtype=complex), k, l)


def build_channels(scenario: Scenario) -> ChannelSet:
    users = np.vstack([scenario.du_positions, scenario.eu_positions])
    omegas, grams = [], []
    for i, u in enumerate(users):
        ch = sample_user_channel(scenario.aperture, u, scenario.medium)
        omegas.append(channel_transform(ch, scenario.basis, scenario.aperture, i).omega)
        grams.append(channel_gram(ch, scenario.aperture))
    return ChannelSet.from_omegas(omegas, grams, scenario.k, scenario.l)


# ---------------------------------------------------------------------------
# per-user quantities

def stream_fields(chs: ChannelSet, W) -> np.ndarray:
    """Field of every stream at every user, shape (n_users, n_streams, 3)."""
    return np.einsum("uax,jx->uja", chs.mats, np.asarray(W, dtype=complex))


def effective_channels(chs: ChannelSet, psis) -> np.ndarray:
    """h_u = M_u^H psi_u so that psi_u^H e_{u,j} = h_u^H w_j."""
    return np.einsum("uax,ua->ux", chs.mats.conj(), np.asarray(psis, dtype=complex))


def mse(k: int, fields_k, psi, sigma2: float) -> float:
    """MSE of DU ``k`` given the fields of all streams at that DU."""
    y = np.asarray(fields_k, dtype=complex) @ np.conj(psi)  # psi^H e_j
    err = np.abs(y) ** 2
    err[k] = abs(y[k] - 1) ** 2
    return float(np.sum(err) + sigma2 * np.vdot(psi, psi).real)


def mmse_combiner(k: int, fields_k, sigma2: float) -> np.ndarray:
    if not sigma2 > 0:
        raise InvalidArgumentError("MMSE combiner needs positive noise power")
    v = np.asarray(fields_k, dtype=complex)
    cov = v.T @ v.conj() + sigma2 * np.eye(3)
    return np.linalg.solve(cov, v[k])


def eu_eigen_combiner(fields_l) -> np.ndarray:
    v = np.asarray(fields_l, dtype=complex)
    if not np.any(np.abs(v) > 0):
        raise DegenerateChannelError("all fields at the EU are zero")
    return principal_eigvec(v.T @ v.conj())[1]


def sinr_rate(k: int, fields_k, psi, sigma2: float) -> tuple[float, float]:
    y = np.abs(np.asarray(fields_k, dtype=complex) @ np.conj(psi)) ** 2
    interference = float(np.sum(y) - y[k])
    gamma = float(y[k] / (interference + sigma2 * np.vdot(psi, psi).real))
    return gamma, float(np.log2(1 + gamma))


def update_rho(fields, psis, sigma2: float, k: int) -> np.ndarray:
    m = np.array([mse(i, fields[i], psis[i], sigma2) for i in range(k)])
    if np.any(m <= 0):
        raise ArithmeticError("non-positive MSE")
    return 1 / m


def r_eq(rho, fields, psis, sigma2: float) -> float:
    """sum_k rho_k M_k - ln rho_k (the quantity minimised by every block)."""
    rho = np.asarray(rho, dtype=float)
    m = np.array([mse(i, fields[i], psis[i], sigma2) for i in range(len(rho))])
    return float(np.sum(rho * m - np.log(rho)))


def du_rates(fields, psis, sigma2: float, k: int) -> np.ndarray:
    return np.array([sinr_rate(i, fields[i], psis[i], sigma2)[1] for i in range(k)])


def eu_powers(fields, psis, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Projected sum_j |psi^H e_j|^2 and unprojected sum_j ||e_j||^2 per EU."""
    proj = np.array([np.sum(np.abs(fields[u] @ np.conj(psis[u])) ** 2) for u in range(k, len(fields))])
    full = np.array([np.sum(np.abs(fields[u]) ** 2) for u in range(k, len(fields))])
    return proj, full


# ---------------------------------------------------------------------------
# weight subproblems

def _span(h: np.ndarray) -> np.ndarray:
    u, s, _ = np.linalg.svd(h.T, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise DegenerateChannelError("all effective channels are zero")
    return u[:, s > 1e-12 * s[0]]


def _weighted_obj(z, g, rho, k, const) -> float:
    y = g.conj() @ z.T  # y[u, j] = g_u^H z_j
    err = rho[:, None] * np.abs(y[:k]) ** 2
    val = np.sum(err) - 2 * np.sum(rho * np.real(np.diag(y[:k, :k]))) + np.sum(rho) + const
    return float(val)


def _eh_rows(g_eu, zbar, p0p):
    """Linearised harvest constraints Re(a^H z) >= b around ``zbar``."""
    rows, rhs = [], []
    for gl in g_eu:
        proj = zbar @ np.conj(gl)  # gl^H zbar_j
        rows.append((2 * np.outer(proj, gl)).ravel())
        rhs.append(p0p + np.sum(np.abs(proj) ** 2))
    return np.array(rows), np.array(rhs)


@dataclass
class ScaResult:
    W: np.ndarray
    objective: list
    iterations: int
    converged: bool


def sca_beamform(h, rho, k: int, pt: float, p0p: float, W0, tol: float = 1e-4,
                 max_iter: int = 50, solver_tol: float = 1e-10) -> ScaResult:
    """Minimise sum_k rho_k MSE_k over the weights by successive convex approximation.

    ``h`` holds the effective channels of all users (DUs first). The MSE
    constant terms other than 1 are omitted from the recorded objective.
    Raises InfeasibleRequirementError when the start point misses a harvest
    threshold.
    """
    h = np.asarray(h, dtype=complex)
    rho = np.asarray(rho, dtype=float)
    n_streams = len(W0)
    basis = _span(h)
    g = (basis.conj().T @ h.T).T  # g_u = basis^H h_u
    z = np.asarray(W0, dtype=complex) @ basis.conj()
    r = basis.shape[1]
    g_eu = g[k:] if p0p > 0 else g[:0]
    if len(g_eu):
        have = np.sum(np.abs(z @ g_eu.conj().T) ** 2, axis=0)
        if np.any(have < p0p):
            raise InfeasibleRequirementError(
                f"start point harvests {have.min():.4g} < threshold {p0p:.4g}")

    qk = (g[:k].T * rho) @ g[:k].conj()  # sum_k rho_k g_k g_k^H
    Q = np.kron(np.eye(n_streams), qk)
    c = np.zeros((n_streams, r), dtype=complex)
    c[:k] = -2 * rho[:, None] * g[:k]
    c = c.ravel()
    history = [_weighted_obj(z, g, rho, k, 0.0)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        A = b = None
        if len(g_eu):
            A, b = _eh_rows(g_eu, z, p0p)
        prob = convex_core.lift_complex(convex_core.ComplexProblem(Q, c, pt, A, b))
        cert = convex_core.solve(prob, tol=solver_tol)
        if cert.status == convex_core.INFEASIBLE:
            raise InfeasibleRequirementError("linearised harvest constraints are infeasible")
        z_new = convex_core.unlift_vector(cert.x).reshape(n_streams, r)
        val = _weighted_obj(z_new, g, rho, k, 0.0)
        if val > history[-1]:
            # no descent left beyond solver accuracy: keep the incumbent
            converged = True
            break
        z = z_new
        history.append(val)
        if abs(history[-2] - val) <= tol * max(abs(val), 1e-300):
            converged = True
            break
    return ScaResult(z @ basis.T, history, it, converged)


def init_maxmin_weights(h_eu, n_streams: int, pt: float, tol: float = 1e-6,
                        max_iter: int = 100, solver_tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Weights maximising the minimum projected EU power, and that minimum.

    Starts from equal streams along sum_l h_l/||h_l|| and runs SCA on the
    epigraph form.
    """
    h_eu = np.atleast_2d(np.asarray(h_eu, dtype=complex))
    basis = _span(h_eu)
    g = (basis.conj().T @ h_eu.T).T
    v = np.sum(g / np.linalg.norm(g, axis=1)[:, None], axis=0)
    if np.linalg.norm(v) == 0:
        v = g[0]
    v = v * np.sqrt(pt / (n_streams * np.vdot(v, v).real))
    z = np.tile(v, (n_streams, 1))
    r = basis.shape[1]

    def powers(zz):
        return np.sum(np.abs(zz @ g.conj().T) ** 2, axis=0)

    gamma = float(powers(z).min())
    zero = np.zeros((n_streams * r, n_streams * r))
    for _ in range(max_iter):
        A, b = _eh_rows(g, z, 0.0)
        prob = convex_core.lift_complex(convex_core.ComplexProblem(
            zero, np.zeros(n_streams * r, dtype=complex), pt, A, b, epigraph=True))
        cert = convex_core.solve(prob, tol=solver_tol)
        z_new = convex_core.unlift_vector(cert.x).reshape(n_streams, r)
        g_new = float(powers(z_new).min())
        if g_new <= gamma:
            break
        done = g_new - gamma <= tol * g_new
        z, gamma = z_new, g_new
        if done:
            break
    return z @ basis.T, gamma


def init_global(chs: ChannelSet, pt: float, sigma2: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form starting combiners and weights.

    EUs get the principal eigenvector of their Gram matrix and every stream
    carries the same current j = sum_l beta_l G_l^H psi_l, scaled to the budget.
    Without EUs each DU gets its own matched beam. DU combiners come from one
    MMSE pass.
    """
    k, l = chs.k, chs.l
    n = chs.n_users
    psis = np.zeros((n, 3), dtype=complex)
    for u in range(n):
        psis[u] = principal_eigvec(chs.grams[u])[1]
    h = effective_channels(chs, psis)
    if l:
        zeta = np.array([principal_eigvec(chs.grams[u])[0] for u in range(k, n)])
        beta = np.sqrt(pt / (zeta**2 * np.sum(1 / zeta)))
        j = beta @ h[k:]
        m = np.sqrt(pt / (n * np.vdot(j, j).real))
        W = np.tile(m * j, (n, 1))
    else:
        W = h * np.sqrt(pt / (k * np.sum(np.abs(h) ** 2, axis=1)))[:, None]
    fields = stream_fields(chs, W)
    for u in range(k):
        psis[u] = mmse_combiner(u, fields[u], sigma2)
    return psis, W


def random_start(chs: ChannelSet, pt: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n = chs.n_users
    psis = rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3))
    psis /= np.linalg.norm(psis, axis=1)[:, None]
    W = rng.normal(size=(n, chs.dim)) + 1j * rng.normal(size=(n, chs.dim))
    return psis, W * np.sqrt(pt / np.sum(np.abs(W) ** 2))


def fill_power(W, psis, k: int, pt: float) -> tuple[np.ndarray, np.ndarray]:
    """Scale the weights up to the budget and the DU combiners down by the same factor.

    Every psi_k^H e_j is unchanged while the noise term sigma^2 ||psi_k||^2
    shrinks, so each MSE decreases; harvested powers grow.
    """
    used = float(np.sum(np.abs(W) ** 2))
    if used <= 0 or used >= pt:
        return W, psis
    alpha = np.sqrt(pt / used)
    psis = psis.copy()
    psis[:k] /= alpha
    return W * alpha, psis


# ---------------------------------------------------------------------------
# the full loop

@dataclass(frozen=True)
class SolverOptions:
    outer_tol: float = 1e-3
    outer_max_iter: int = 30
    inner_tol: float = 1e-4
    inner_max_iter: int = 50
    maxmin_tol: float = 1e-6
    maxmin_max_iter: int = 100
    solver_tol: float = 1e-10
    audit_tol: float = 1e-6
    warm_start: bool = False
    power_fill: bool = True
    random_init: str = "none"  # none | global | sca
    seed: int = 0

    def __post_init__(self):
        if self.random_init not in ("none", "global", "sca"):
            raise InvalidArgumentError(f"unknown random_init {self.random_init!r}")


@dataclass(eq=False)
class BcdState:
    rho: np.ndarray
    psis: np.ndarray
    W: np.ndarray
    r_eq: list = field(default_factory=list)  # (outer, stage, value)
    r_sum: list = field(default_factory=list)
    eu_projected: list = field(default_factory=list)
    eu_unprojected: list = field(default_factory=list)


@dataclass(eq=False)
class SolveReport:
    scheme: str
    status: str
    r_sum: float
    du_rates: np.ndarray
    eu_rf_projected: np.ndarray  # W into the rectifier, projected on the combiner
    eu_rf_unprojected: np.ndarray
    eu_harvest_projected: np.ndarray  # Xi(.) of the above, W
    eu_harvest_unprojected: np.ndarray
    eu_field_projected: np.ndarray  # V^2/m^2, compared against p0_prime
    p0_prime: float
    gamma_star: float
    power: float
    outer_iterations: int
    inner_iterations: list
    r_sum_history: list
    r_eq_history: list
    audit: dict
    rho: np.ndarray
    psis: np.ndarray
    W: np.ndarray
    flags: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, np.ndarray):
                if np.iscomplexobj(v):
                    return np.stack([v.real, v.imag], axis=-1).tolist()
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, dict):
                return {a: enc(b) for a, b in v.items()}
            if isinstance(v, (list, tuple)):
                return [enc(x) for x in v]
            return v
        return {name: enc(getattr(self, name)) for name in self.__dataclass_fields__}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text


def audit_r_eq(history, tol: float = 1e-6) -> dict:
    """Largest increases of R_eq between consecutive records, split by stage."""
    worst, worst_reinit, n_reinit = 0.0, 0.0, 0
    violations = []
    for (o0, s0, v0), (o1, s1, v1) in zip(history, history[1:]):
        inc = v1 - v0
        if s1 == "reinit":
            worst_reinit = max(worst_reinit, inc)
            n_reinit += inc > tol
            continue
        worst = max(worst, inc)
        if inc > tol:
            violations.append((o1, s1, inc))
    return {"max_increase": worst, "violations": violations, "max_increase_reinit": worst_reinit,
            "reinit_increases": n_reinit, "passed": not violations}


def _xi(p, circuit):
    return np.array([eh_output(max(x, 0.0), circuit) for x in np.atleast_1d(p)])


def run_algorithm1(chs: ChannelSet, pt: float, p0p: float, sigma2: float, geom: ReceiverGeometry,
                   circuit: EhCircuit, options: SolverOptions = SolverOptions(),
                   scheme: str = "H-IDET", config: dict | None = None) -> SolveReport:
    """Alternate rho, combiner and weight updates until the sum-rate settles."""
    k, l, n = chs.k, chs.l, chs.n_users
    rng = np.random.default_rng(options.seed)
    if options.random_init == "global":
        psis, W = random_start(chs, pt, rng)
        fields = stream_fields(chs, W)
        for u in range(k):
            psis[u] = mmse_combiner(u, fields[u], sigma2)
    else:
        psis, W = init_global(chs, pt, sigma2)
    state = BcdState(np.ones(k), psis, W)
    gamma_star = np.nan
    inner_its = []
    flags = {"p0_correction": True, "squared_norm_power": True, "reinit_fallback": 0}
    status = convex_core.MAX_ITER
    outer = 0

    def record(stage):
        f = stream_fields(chs, state.W)
        state.r_eq.append((outer, stage, r_eq(state.rho, f, state.psis, sigma2)))

    for outer in range(1, options.outer_max_iter + 1):
        fields = stream_fields(chs, state.W)
        if k:
            state.rho = update_rho(fields, state.psis, sigma2, k)
            record("rho")
            for u in range(k):
                state.psis[u] = mmse_combiner(u, fields[u], sigma2)
        for u in range(k, n):
            state.psis[u] = eu_eigen_combiner(fields[u])
        if k:
            record("psi")
        h = effective_channels(chs, state.psis)

        prev_ok = True
        if l and p0p > 0:
            proj = np.sum(np.abs(state.W @ h[k:].conj().T) ** 2, axis=0)
            prev_ok = bool(np.all(proj >= p0p))
        if options.random_init == "sca":
            Wbar = random_start(chs, pt, rng)[1]
        elif l and not (options.warm_start and outer > 1):
            Wbar, gamma_star = init_maxmin_weights(h[k:], n, pt, options.maxmin_tol,
                                                   options.maxmin_max_iter, options.solver_tol)
            if gamma_star < p0p and prev_ok and outer > 1:
                # max-min is a local method; keep the feasible incumbent instead
                Wbar = state.W
                flags["reinit_fallback"] += 1
        else:
            Wbar = state.W
        state.W = Wbar
        if k:
            record("reinit")

        if k:
            try:
                res = sca_beamform(h, state.rho, k, pt, p0p if l else 0.0, state.W,
                                   options.inner_tol, options.inner_max_iter, options.solver_tol)
            except InfeasibleRequirementError as exc:
                log.info("outer iteration %d infeasible: %s", outer, exc)
                status = convex_core.INFEASIBLE
                break
            inner_its.append(res.iterations)
            state.W = res.W
            record("sca")
            if options.power_fill:
                state.W, state.psis = fill_power(state.W, state.psis, k, pt)
                record("fill")
        elif l and gamma_star < p0p:
            status = convex_core.INFEASIBLE
            break

        fields = stream_fields(chs, state.W)
        for u in range(k):
            state.psis[u] = mmse_combiner(u, fields[u], sigma2)
        rates = du_rates(fields, state.psis, sigma2, k)
        state.r_sum.append(float(np.sum(rates)))
        proj, full = eu_powers(fields, state.psis, k)
        state.eu_projected.append(proj.tolist())
        state.eu_unprojected.append(full.tolist())
        if k == 0:
            status = convex_core.OPTIMAL
            break
        if len(state.r_sum) > 1:
            prev, cur = state.r_sum[-2], state.r_sum[-1]
            if abs(cur - prev) <= options.outer_tol * max(abs(prev), 1e-300):
                status = convex_core.OPTIMAL
                break

    ev = evaluate_weights(chs, state.W, state.psis, sigma2, geom, circuit)
    if status == convex_core.INFEASIBLE:
        ev["r_sum"] = 0.0
    return SolveReport(
        scheme=scheme, status=status, **ev, p0_prime=p0p, gamma_star=float(gamma_star),
        outer_iterations=outer, inner_iterations=inner_its, r_sum_history=state.r_sum,
        r_eq_history=[list(t) for t in state.r_eq], audit=audit_r_eq(state.r_eq, options.audit_tol),
        rho=state.rho, psis=state.psis, W=state.W, flags=flags,
        config={"options": options.__dict__, **(config or {})})


def evaluate_weights(chs: ChannelSet, W, psis, sigma2: float, geom: ReceiverGeometry,
                     circuit: EhCircuit, k: int | None = None) -> dict:
    """Rates of the first ``k`` users (default: the DUs) and harvest of the EUs."""
    k = chs.k if k is None else k
    fields = stream_fields(chs, W)
    rates = du_rates(fields, psis, sigma2, k) if k else np.zeros(0)
    proj, full = eu_powers(fields, psis, chs.k)
    return {"r_sum": float(np.sum(rates)), "du_rates": rates,
            "eu_rf_projected": geom.factor * proj, "eu_rf_unprojected": geom.factor * full,
            "eu_harvest_projected": _xi(geom.factor * proj, circuit),
            "eu_harvest_unprojected": _xi(geom.factor * full, circuit),
            "eu_field_projected": proj, "power": float(np.sum(np.abs(W) ** 2))}


def solve_scenario(scenario: Scenario, options: SolverOptions = SolverOptions(),
                   chs: ChannelSet | None = None, config: dict | None = None) -> SolveReport:
    chs = chs if chs is not None else build_channels(scenario)
    return run_algorithm1(chs, scenario.pt, scenario.p0_prime, scenario.sigma2, scenario.geom,
                          scenario.circuit, options, "H-IDET", config)
