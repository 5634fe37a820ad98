"""Comparison schemes: discrete fully-digital arrays, matched filtering and the
interference-free bound."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import convex_core
from .energy import EhCircuit, ReceiverGeometry
from .errors import DegenerateChannelError, InvalidArgumentError, ResolutionError
from .geometry_em import Aperture, MediumParams, UserChannel, green_tensor, make_aperture
from .idet_optimizer import (ChannelSet, Scenario, SolveReport, SolverOptions, eu_eigen_combiner,
                             evaluate_weights, run_algorithm1, stream_fields)

Y_POL = np.array([0.0, 1.0, 0.0], dtype=complex)


def _ceil_ratio(a: float, b: float) -> int:
    return int(math.ceil(a / b - 1e-9))


@dataclass(frozen=True, eq=False)
class DiscreteArray:
    """Half-wavelength grid of disk antennas, each of area lambda^2 / (8 pi).

    ``pitch`` overrides the half-wavelength spacing for resolution studies.
    """

    lx: float
    ly: float
    wavelength: float
    pitch: float | None = None
    mx: int = field(init=False)
    my: int = field(init=False)
    centers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.lx > 0 and self.ly > 0 and self.wavelength > 0):
            raise InvalidArgumentError("array dimensions must be positive")
        pitch = self.wavelength / 2 if self.pitch is None else self.pitch
        if not pitch > 0:
            raise InvalidArgumentError("antenna pitch must be positive")
        mx, my = _ceil_ratio(self.lx, pitch), _ceil_ratio(self.ly, pitch)
        xs = -self.lx / 2 + (np.arange(mx) + 0.5) * self.lx / mx
        ys = -self.ly / 2 + (np.arange(my) + 0.5) * self.ly / my
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        c = np.stack([gx.ravel(), gy.ravel(), np.zeros(mx * my)], axis=1)
        c.setflags(write=False)
        object.__setattr__(self, "mx", mx)
        object.__setattr__(self, "my", my)
        object.__setattr__(self, "centers", c)
        r = self.radius
        if np.any(np.abs(c[:, 0]) + r > self.lx / 2 + 1e-12) or np.any(np.abs(c[:, 1]) + r > self.ly / 2 + 1e-12):
            raise InvalidArgumentError("antenna disks do not fit inside the aperture")

    @property
    def m(self) -> int:
        return self.mx * self.my

    @property
    def element_area(self) -> float:
        return self.wavelength**2 / (8 * np.pi)

    @property
    def radius(self) -> float:
        return float(np.sqrt(self.element_area / np.pi))

    def membership(self, aperture: Aperture) -> np.ndarray:
        """Antenna index of every grid sample (-1 outside all disks)."""
        labels = np.full(aperture.n_samples, -1)
        pts = aperture.points
        ix = np.clip(np.round((pts[:, 0] + self.lx / 2) * self.mx / self.lx - 0.5).astype(int), 0, self.mx - 1)
        iy = np.clip(np.round((pts[:, 1] + self.ly / 2) * self.my / self.ly - 0.5).astype(int), 0, self.my - 1)
        idx = ix * self.my + iy
        d = np.linalg.norm(pts - self.centers[idx], axis=1)
        inside = d <= self.radius * (1 + 1e-12)
        labels[inside] = idx[inside]
        counts = np.bincount(labels[inside], minlength=self.m)
        if np.any(counts == 0):
            raise ResolutionError("some antenna disk captures no grid sample; use a finer grid")
        return labels

    def captured_areas(self, aperture: Aperture, labels: np.ndarray | None = None) -> np.ndarray:
        """Quadrature area of each disk on ``aperture`` (tends to lambda^2 / (8 pi))."""
        labels = self.membership(aperture) if labels is None else labels
        inside = labels >= 0
        return np.bincount(labels[inside], weights=aperture.weights[inside], minlength=self.m)

    def fine_aperture(self, per_half_wavelength: int = 9) -> Aperture:
        """Grid with an odd number of samples per element pitch so each centre is sampled."""
        return make_aperture(self.lx, self.ly, self.mx * per_half_wavelength, self.my * per_half_wavelength)


def fd_effective_channel(channel: UserChannel, array: DiscreteArray, aperture: Aperture,
                         labels: np.ndarray | None = None) -> np.ndarray:
    """H_m = integral of G over disk m, shape (M, 3, 3)."""
    if len(channel) != aperture.n_samples:
        raise InvalidArgumentError("channel was not sampled on this aperture")
    labels = array.membership(aperture) if labels is None else labels
    inside = labels >= 0
    H = np.zeros((array.m, 3, 3), dtype=complex)
    np.add.at(H, labels[inside], aperture.weights[inside, None, None] * channel.G[inside])
    return H


def build_fd_channels(scenario: Scenario, array: DiscreteArray | None = None, per_half_wavelength: int = 9,
                      eus_as_dus: bool = False) -> tuple[ChannelSet, DiscreteArray]:
    """Channel set whose variables are u_m = sqrt(a_m) v_m, so power is sum ||u||^2.

    ``a_m`` is the captured quadrature area of disk m, which keeps the power
    equal to the integral of ||theta||^2 over the rect-supported currents.
    """
    if array is None:
        array = DiscreteArray(scenario.aperture.lx, scenario.aperture.ly, scenario.medium.wavelength)
    fine = array.fine_aperture(per_half_wavelength)
    labels = array.membership(fine)
    root = np.sqrt(array.captured_areas(fine, labels))[:, None, None]
    inside = labels >= 0
    pts, wts, lab = fine.points[inside], fine.weights[inside], labels[inside]
    users = np.vstack([scenario.du_positions, scenario.eu_positions])
    omegas, grams = [], []
    for u in users:
        G = green_tensor(u, pts, scenario.medium)
        H = np.zeros((array.m, 3, 3), dtype=complex)
        np.add.at(H, lab, wts[:, None, None] * G)
        om = H / root
        omegas.append(om)
        grams.append(np.einsum("nab,ncb->ac", om, om.conj()))
    k, l = scenario.k, scenario.l
    if eus_as_dus:
        k, l = k + l, 0
    return ChannelSet.from_omegas(omegas, grams, k, l), array


def fd_idet_solve(scenario: Scenario, variant: str = "FD-IDET", options: SolverOptions = SolverOptions(),
                  chs: ChannelSet | None = None, array: DiscreteArray | None = None,
                  per_half_wavelength: int = 9, config: dict | None = None) -> SolveReport:
    """Run the same BCD/SCA loop on the discrete array.

    ``FD`` treats every EU as a DU without a harvest constraint; its reported
    sum-rate covers the true DUs only and EU harvest uses eigen-combiners.
    """
    if variant not in ("FD", "FD-IDET"):
        raise InvalidArgumentError(f"unknown FD variant {variant!r}")
    as_du = variant == "FD"
    if chs is None:
        chs, array = build_fd_channels(scenario, array, per_half_wavelength, as_du)
    p0p = 0.0 if as_du else scenario.p0_prime
    rep = run_algorithm1(chs, scenario.pt, p0p, scenario.sigma2, scenario.geom, scenario.circuit,
                         options, variant, config)
    if as_du and scenario.l:
        real = ChannelSet(chs.mats, chs.grams, scenario.k, scenario.l)
        fields = stream_fields(real, rep.W)
        psis = rep.psis.copy()
        for u in range(scenario.k, real.n_users):
            psis[u] = eu_eigen_combiner(fields[u])
        ev = evaluate_weights(real, rep.W, psis, scenario.sigma2, scenario.geom, scenario.circuit)
        for name, v in ev.items():
            setattr(rep, name, v)
        rep.p0_prime = scenario.p0_prime
        rep.flags["eh_met"] = bool(np.all(ev["eu_field_projected"] >= scenario.p0_prime))
        rep.psis = psis
    if array is not None:
        rep.flags["antennas"] = array.m
    return rep


def mf_beamformers(chs: ChannelSet, pt: float, equal_power: bool = False) -> np.ndarray:
    """Conjugate-channel beams for y-polarised receivers, scaled to total power pt.

    The default follows mu_k^2 proportional to pt * g_k / sum g with
    g_k = ||h_k||^2 and then rescales globally; ``equal_power`` gives every
    user pt / (K + L) instead.
    """
    h = np.einsum("uax,a->ux", chs.mats.conj(), Y_POL)
    g = np.sum(np.abs(h) ** 2, axis=1)
    if np.any(g <= 0):
        raise DegenerateChannelError("a user has zero y-polarised channel")
    if equal_power:
        mu2 = pt / (len(g) * g)
    else:
        mu2 = pt * g / np.sum(g)
    W = np.sqrt(mu2)[:, None] * h
    return W * np.sqrt(pt / np.sum(np.abs(W) ** 2))


def mf_solve(scenario: Scenario, chs: ChannelSet, equal_power: bool = False,
             config: dict | None = None) -> SolveReport:
    W = mf_beamformers(chs, scenario.pt, equal_power)
    psis = np.tile(Y_POL, (chs.n_users, 1))
    ev = evaluate_weights(chs, W, psis, scenario.sigma2, scenario.geom, scenario.circuit)
    p0p = scenario.p0_prime
    return SolveReport(scheme="MF", status=convex_core.OPTIMAL, **ev, p0_prime=p0p, gamma_star=np.nan,
                       outer_iterations=0, inner_iterations=[], r_sum_history=[ev["r_sum"]],
                       r_eq_history=[], audit={}, rho=np.zeros(0), psis=psis, W=W,
                       flags={"equal_power": equal_power,
                              "eh_met": bool(np.all(ev["eu_field_projected"] >= p0p))},
                       config=config or {})


def upper_bound_rate(report: SolveReport, chs: ChannelSet, sigma2: float) -> float:
    """Sum-rate of the solved state with every interference term removed."""
    fields = stream_fields(chs, report.W)
    total = 0.0
    for k in range(chs.k):
        psi = report.psis[k]
        sig = abs(np.vdot(psi, fields[k, k])) ** 2
        total += np.log2(1 + sig / (sigma2 * np.vdot(psi, psi).real))
    return float(total)
