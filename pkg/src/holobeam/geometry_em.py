"""Aperture geometry, surface quadrature and free-space electromagnetic channels.

All quantities are SI. The transmit aperture lies on the z = 0 plane centred
at the origin; currents are surface current densities so that the integral of
``|theta(s)|^2`` over the aperture is measured in A^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidArgumentError, SingularGeometryError

SPEED_OF_LIGHT = 3.0e8
FREE_SPACE_IMPEDANCE = 376.73

# reject evaluations closer than this fraction of a wavelength
SINGULAR_FRACTION = 1e-2

GREEN_TERMS = ("far", "mid", "near")


class Point3(NamedTuple):
    x: float
    y: float
    z: float


def as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"expected a finite 3-vector, got {p!r}")
    return arr


@dataclass(frozen=True)
class MediumParams:
    """Propagation medium and harvester impedance.

    ``c`` defaults to 3e8 m/s so that 10 GHz maps to a wavelength of exactly
    3 cm, which is what the basis-size and antenna-count formulas assume.
    """

    frequency: float
    z0: float = FREE_SPACE_IMPEDANCE
    z: float = 25.0
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not self.frequency > 0:
            raise InvalidArgumentError("frequency must be positive")
        if not (self.z0 > 0 and self.z > 0):
            raise InvalidArgumentError("impedances must be positive")

    @property
    def wavelength(self) -> float:
        return self.c / self.frequency

    @property
    def wavenumber(self) -> float:
        return 2 * np.pi / self.wavelength


@dataclass(frozen=True, eq=False)
class Aperture:
    """Rectangular aperture with a uniform midpoint quadrature grid."""

    lx: float
    ly: float
    nx: int
    ny: int
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def n_samples(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.area / self.n_samples

    @property
    def center(self) -> np.ndarray:
        return np.zeros(3)

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.lx, self.ly))

    def same_grid(self, other: "Aperture") -> bool:
        return (self.lx, self.ly, self.nx, self.ny) == (other.lx, other.ly, other.nx, other.ny)

    def grid_shape(self) -> tuple[int, int]:
        """Shape for reshaping per-sample arrays into (nx, ny) images."""
        return self.nx, self.ny


@dataclass(frozen=True, eq=False)
class UserChannel:
    user_position: np.ndarray
    G: np.ndarray = field(repr=False)  # (n_samples, 3, 3)

    def __len__(self):
        return self.G.shape[0]


def make_aperture(lx: float, ly: float, nx: int, ny: int) -> Aperture:
    if not (lx > 0 and ly > 0):
        raise InvalidArgumentError("aperture dimensions must be positive")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidArgumentError("grid resolution must be positive integers")
    nx, ny = int(nx), int(ny)
    xs = -lx / 2 + (np.arange(nx) + 0.5) * lx / nx
    ys = -ly / 2 + (np.arange(ny) + 0.5) * ly / ny
    # sample m = i * ny + j  <->  (xs[i], ys[j])
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    points = np.stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)], axis=1)
    weights = np.full(nx * ny, lx * ly / (nx * ny))
    points.setflags(write=False)
    weights.setflags(write=False)
    return Aperture(lx, ly, nx, ny, points, weights)


def grid_for_samples(lx: float, ly: float, n_samples: int) -> tuple[int, int]:
    """Split a sample budget into (nx, ny) proportional to the side lengths."""
    nx = max(1, int(round(np.sqrt(n_samples * lx / ly))))
    ny = max(1, int(round(n_samples / nx)))
    return nx, ny


def green_tensor(r, s, medium: MediumParams, terms: Sequence[str] = GREEN_TERMS) -> np.ndarray:
    """Dyadic Green function G(r, s) for one observation point and many sources.

    ``s`` has shape (..., 3); the result has shape (..., 3, 3). ``terms``
    selects any subset of the far-, middle- and near-field contributions.
    """
    r = as_point(r)
    s = np.asarray(s, dtype=float)
    p = r - s
    dist = np.asarray(np.linalg.norm(p, axis=-1))
    if np.any(dist < SINGULAR_FRACTION * medium.wavelength):
        raise SingularGeometryError("observation point coincides with the source surface")
    kappa = medium.wavenumber
    phat = p / dist[..., None]
    outer = phat[..., :, None] * phat[..., None, :]
    eye = np.eye(3)
    kr = np.asarray(kappa * dist, dtype=complex)
    bracket = np.zeros(p.shape[:-1] + (3, 3), dtype=complex)
    for term in terms:
        if term == "far":
            bracket += eye - outer
        elif term == "mid":
            bracket += (1j / kr)[..., None, None] * (eye - 3 * outer)
        elif term == "near":
            bracket += (1 / kr**2)[..., None, None] * (eye - 3 * outer)
        else:
            raise InvalidArgumentError(f"unknown Green term {term!r}")
    scale = np.asarray(1j * kappa * medium.z0 / (4 * np.pi) * np.exp(1j * kr) / dist)
    return scale[..., None, None] * bracket


def dyadic_green(r, s, medium: MediumParams) -> np.ndarray:
    """Exact free-space dyadic Green matrix (3x3, complex symmetric)."""
    return green_tensor(r, as_point(s), medium)


def _check_off_footprint(aperture: Aperture, user: np.ndarray, medium: MediumParams):
    tol = SINGULAR_FRACTION * medium.wavelength
    if (abs(user[2]) < tol and abs(user[0]) <= aperture.lx / 2 + tol
            and abs(user[1]) <= aperture.ly / 2 + tol):
        raise SingularGeometryError(f"user {user.tolist()} lies on the aperture")


def sample_user_channel(aperture: Aperture, user, medium: MediumParams) -> UserChannel:
    u = as_point(user)
    _check_off_footprint(aperture, u, medium)
    G = green_tensor(u, aperture.points, medium)
    G.setflags(write=False)
    return UserChannel(u, G)


def radiate_field(channel: UserChannel, current, aperture: Aperture) -> np.ndarray:
    """Electric field at the user: sum_m weight_m G_m current_m."""
    current = np.asarray(current, dtype=complex)
    if current.shape != (len(channel), 3) or aperture.n_samples != len(channel):
        raise InvalidArgumentError(
            f"current shape {current.shape} does not match {len(channel)} samples")
    return np.einsum("m,mab,mb->a", aperture.weights, channel.G, current)


def fresnel_channel(r, s, medium: MediumParams, order: int = 1, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Traditional near-field (Fresnel) approximation of the far-field Green term.

    The path length is expanded as ``D0 * sqrt(1 + x)`` around the distance
    ``D0`` from the aperture centre and truncated after the first or second
    order term. The amplitude and polarisation use the centre distance and
    direction. Vectorised over ``s`` like :func:`green_tensor`.
    """
    if order not in (1, 2):
        raise InvalidArgumentError("order must be 1 or 2")
    r = as_point(r)
    c = as_point(center)
    s = np.asarray(s, dtype=float)
    if np.any(np.linalg.norm(r - s, axis=-1) < SINGULAR_FRACTION * medium.wavelength):
        raise SingularGeometryError("observation point coincides with the source surface")
    if abs(r[2] - c[2]) < SINGULAR_FRACTION * medium.wavelength:
        raise SingularGeometryError("observation point lies in the aperture plane")
    rc = r - c
    d0 = np.linalg.norm(rc)
    dist = fresnel_path_length(r, s, order, center)
    kappa = medium.wavenumber
    u = rc / d0
    pol = np.eye(3) - np.outer(u, u)
    scale = 1j * kappa * medium.z0 / (4 * np.pi) * np.exp(1j * kappa * dist) / d0
    return scale[..., None, None] * pol


def fresnel_path_length(r, s, order: int, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    r, c = as_point(r), as_point(center)
    sc = np.asarray(s, dtype=float) - c
    rc = r - c
    d0 = np.linalg.norm(rc)
    x = (np.sum(sc**2, axis=-1) - 2 * sc @ rc) / d0**2
    out = d0 * (1 + x / 2)
    if order == 2:
        out = out - d0 * x**2 / 8
    return out


def sample_fresnel_channel(aperture: Aperture, user, medium: MediumParams, order: int = 1) -> UserChannel:
    u = as_point(user)
    _check_off_footprint(aperture, u, medium)
    G = fresnel_channel(u, aperture.points, medium, order)
    G.setflags(write=False)
    return UserChannel(u, G)


def fraunhofer_distance(d: float, wavelength: float) -> float:
    """Radiating near-field outer boundary 2 D^2 / lambda."""
    return 2 * d**2 / wavelength


def fresnel_lower_bound(d: float, wavelength: float) -> float:
    """Radiating near-field inner boundary 0.5 sqrt(D^3 / lambda)."""
    return 0.5 * np.sqrt(d**3 / wavelength)


def _line_green(d, dz, medium: MediumParams):
    p2 = dz**2 + d**2
    p = np.sqrt(p2)
    if np.any(p < SINGULAR_FRACTION * medium.wavelength):
        raise SingularGeometryError("observation point coincides with the source line")
    kappa = medium.wavenumber
    return 1j * kappa * medium.z0 * d**2 * np.exp(1j * kappa * p) / (4 * np.pi * p2 * p)


def scalar_green_linear(r, s, medium: MediumParams):
    """Scalar (z-polarised) Green function for a linear source along the z-axis.

    ``d`` is the user's offset from the line; only the radiating term of the
    dyadic kernel survives in this form.
    """
    r = as_point(r)
    s = np.asarray(s, dtype=float)
    d = np.hypot(r[0] - s[..., 0], r[1] - s[..., 1])
    return _line_green(d, r[2] - s[..., 2], medium)


def correlation_metric(c: float, user1, user2, medium: MediumParams, n_samples: int = 4000) -> float:
    """(1/c) |int_C G*(r1, s) G(r2, s) ds| over a linear aperture of length c on the z-axis."""
    if not c > 0:
        raise InvalidArgumentError("aperture length must be positive")
    u1, u2 = as_point(user1), as_point(user2)
    if np.array_equal(u1, u2):
        raise InvalidArgumentError("correlation metric is defined for distinct users")
    zs = -c / 2 + (np.arange(n_samples) + 0.5) * c / n_samples
    line = np.stack([np.zeros_like(zs), np.zeros_like(zs), zs], axis=1)
    g1 = scalar_green_linear(u1, line, medium)
    g2 = scalar_green_linear(u2, line, medium)
    integral = np.sum(np.conj(g1) * g2) * (c / n_samples)
    return float(abs(integral) / c)
