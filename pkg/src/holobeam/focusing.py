"""Closed-form single-user energy focusing and beam-pattern scans."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import ReceiverGeometry
from .errors import DegenerateChannelError, InvalidArgumentError
from .geometry_em import Aperture, MediumParams, UserChannel, green_tensor


def fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate ``v`` so its first largest-magnitude entry is real and non-negative."""
    i = int(np.argmax(np.abs(v)))
    if np.abs(v[i]) == 0:
        return v
    out = v * (np.conj(v[i]) / np.abs(v[i]))
    out[i] = np.abs(v[i])  # exact, free of rounding in the imaginary part
    return out


def principal_eigvec(a: np.ndarray) -> tuple[float, np.ndarray]:
    """Largest eigenpair of a Hermitian PSD matrix, phase-fixed.

    Ties are resolved by LAPACK's ordering, which is deterministic for a given
    input.
    """
    a = 0.5 * (a + a.conj().T)
    vals, vecs = np.linalg.eigh(a)
    scale = np.max(np.abs(vals)) if vals.size else 0.0
    if scale == 0 or not np.isfinite(scale):
        raise DegenerateChannelError("matrix is numerically zero")
    v = vecs[:, -1]
    return float(vals[-1]), fix_phase(v / np.linalg.norm(v))


def channel_gram(channel: UserChannel, aperture: Aperture) -> np.ndarray:
    """A = int G(s) G(s)^H ds (3x3 Hermitian)."""
    return np.einsum("m,mab,mcb->ac", aperture.weights, channel.G, channel.G.conj())


def optimal_eu_combiner(channel: UserChannel, aperture: Aperture) -> np.ndarray:
    a = channel_gram(channel, aperture)
    if np.max(np.abs(a)) < 1e-300:
        raise DegenerateChannelError("channel is numerically zero")
    return principal_eigvec(a)[1]


@dataclass(frozen=True, eq=False)
class FocusSolution:
    psi: np.ndarray
    mu: float
    theta: np.ndarray = field(repr=False)  # (n_samples, 3) current on the grid
    p_eh: float  # RF power into the receiver, W
    power: float  # int |theta|^2 ds, A^2


def matched_beam(channel: UserChannel, psi, pt: float, aperture: Aperture,
                 geom: ReceiverGeometry | None = None) -> FocusSolution:
    """theta(s) = mu G^H(s) psi scaled to use the full budget ``pt``."""
    if not pt > 0:
        raise InvalidArgumentError("transmit power must be positive")
    psi = np.asarray(psi, dtype=complex)
    shape = np.einsum("mba,b->ma", channel.G.conj(), psi)  # G^H psi per sample
    norm2 = float(np.sum(aperture.weights * np.sum(np.abs(shape) ** 2, axis=1)))
    if norm2 <= 0 or not np.isfinite(norm2):
        raise DegenerateChannelError("matched beam has zero norm")
    mu = np.sqrt(pt / norm2)
    theta = mu * shape
    power = float(np.sum(aperture.weights * np.sum(np.abs(theta) ** 2, axis=1)))
    p_eh = np.nan
    if geom is not None:
        e = np.einsum("m,mab,mb->a", aperture.weights, channel.G, theta)
        p_eh = geom.factor * abs(np.vdot(psi, e)) ** 2
    return FocusSolution(psi, float(mu), theta, float(p_eh), power)


def closed_form_power(channel: UserChannel, pt: float, aperture: Aperture, geom: ReceiverGeometry) -> float:
    """Optimal single-user harvested RF power factor * pt * lambda_max(A)."""
    lam = principal_eigvec(channel_gram(channel, aperture))[0]
    return geom.factor * pt * lam


def field_at(point, theta, aperture: Aperture, medium: MediumParams) -> np.ndarray:
    G = green_tensor(point, aperture.points, medium)
    return np.einsum("m,mab,mb->a", aperture.weights, G, theta)


def beam_pattern_scan(theta, scan_points, medium: MediumParams, aperture: Aperture,
                      normalization: str = "pathloss_compensated") -> np.ndarray:
    """Received field power |e(r)|^2 over a list of points.

    ``pathloss_compensated`` multiplies each value by the squared distance to
    the aperture centre and rescales the map to a maximum of 1.
    """
    if normalization not in ("raw", "pathloss_compensated"):
        raise InvalidArgumentError(f"unknown normalization {normalization!r}")
    theta = np.asarray(theta, dtype=complex)
    pts = np.atleast_2d(np.asarray(scan_points, dtype=float))
    raw = np.array([np.sum(np.abs(field_at(p, theta, aperture, medium)) ** 2) for p in pts])
    if normalization == "raw":
        return raw
    comp = raw * np.sum((pts - aperture.center) ** 2, axis=1)
    return comp / comp.max()


def depth_extent_3db(z: np.ndarray, values: np.ndarray) -> float:
    """Length of the contiguous region around the peak where values >= max/2."""
    z = np.asarray(z, dtype=float)
    v = np.asarray(values, dtype=float)
    i = int(np.argmax(v))
    half = v[i] / 2
    lo = i
    while lo > 0 and v[lo - 1] >= half:
        lo -= 1
    hi = i
    while hi < len(v) - 1 and v[hi + 1] >= half:
        hi += 1
    return float(z[hi] - z[lo])


def export_beam_map(path, points, raw, compensated) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "value_raw", "value_compensated"])
        for p, a, b in zip(np.atleast_2d(points), raw, compensated):
            w.writerow([f"{p[0]:.6g}", f"{p[1]:.6g}", f"{p[2]:.6g}", f"{a:.10g}", f"{b:.10g}"])
    return path
