"""Fourier basis over a rectangular aperture and wavenumber-domain channels.

Beam weights for one user are stored as an (N_F, 3) complex array whose rows
follow the frozen lexicographic basis ordering; ``flatten()`` of that array
gives the stacked length-3*N_F vector used by the optimizer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import InvalidArgumentError, ResolutionError
from .geometry_em import Aperture, UserChannel


def _ceil_ratio(a: float, b: float) -> int:
    # 0.3 / 0.03 evaluates to 9.999999999999998
    return int(math.ceil(a / b - 1e-9))


@dataclass(frozen=True, eq=False)
class FourierBasisSet:
    nx: int
    ny: int
    lx: float
    ly: float
    nz: int = 0
    lz: float = 1.0
    indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 0:
            raise InvalidArgumentError("basis bounds must be non-negative")
        idx = np.array(list(product(range(-self.nx, self.nx + 1),
                                    range(-self.ny, self.ny + 1),
                                    range(-self.nz, self.nz + 1))), dtype=int)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return (2 * self.nx + 1) * (2 * self.ny + 1) * (2 * self.nz + 1)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    def position(self, n) -> int:
        """Row of mode ``n`` in the stacked ordering."""
        nx, ny, nz = (int(v) for v in n)
        if abs(nx) > self.nx or abs(ny) > self.ny or abs(nz) > self.nz:
            raise InvalidArgumentError(f"mode {tuple(n)} outside basis bounds")
        return ((nx + self.nx) * (2 * self.ny + 1) + (ny + self.ny)) * (2 * self.nz + 1) + nz + self.nz

    def evaluate(self, points) -> np.ndarray:
        """Basis matrix of shape (n_points, N_F)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        phase = (np.outer(pts[:, 0] - self.lx / 2, self.indices[:, 0]) / self.lx
                 + np.outer(pts[:, 1] - self.ly / 2, self.indices[:, 1]) / self.ly)
        if self.nz:
            phase += np.outer(pts[:, 2] - self.lz / 2, self.indices[:, 2]) / self.lz
        return np.exp(2j * np.pi * phase) / np.sqrt(self.area)


@dataclass(frozen=True, eq=False)
class WavenumberChannel:
    user: int
    omega: np.ndarray = field(repr=False)  # (N_F, 3, 3)

    def __len__(self):
        return self.omega.shape[0]


def make_basis(lx: float, ly: float, wavelength: float, override_n: int | None = None) -> FourierBasisSet:
    if not (lx > 0 and ly > 0 and wavelength > 0):
        raise InvalidArgumentError("lengths and wavelength must be positive")
    if override_n is not None:
        return FourierBasisSet(int(override_n), int(override_n), lx, ly)
    return FourierBasisSet(_ceil_ratio(lx, wavelength), _ceil_ratio(ly, wavelength), lx, ly)


def basis_eval(basis: FourierBasisSet, n, s) -> complex:
    basis.position(n)
    s = np.asarray(s, dtype=float)
    phase = n[0] * (s[0] - basis.lx / 2) / basis.lx + n[1] * (s[1] - basis.ly / 2) / basis.ly
    if basis.nz:
        phase += n[2] * (s[2] - basis.lz / 2) / basis.lz
    return complex(np.exp(2j * np.pi * phase) / np.sqrt(basis.area))


def check_resolution(aperture: Aperture, basis: FourierBasisSet):
    """Refuse grids that cannot keep the basis discretely orthonormal."""
    need_x, need_y = 2 * (2 * basis.nx + 1), 2 * (2 * basis.ny + 1)
    if aperture.nx < need_x or aperture.ny < need_y:
        raise ResolutionError(
            f"grid {aperture.nx}x{aperture.ny} too coarse for basis "
            f"(+-{basis.nx}, +-{basis.ny}); need at least {need_x}x{need_y}")
    if not (np.isclose(aperture.lx, basis.lx) and np.isclose(aperture.ly, basis.ly)):
        raise InvalidArgumentError("basis and aperture extents differ")


def gram_matrix(basis: FourierBasisSet, aperture: Aperture) -> np.ndarray:
    ups = basis.evaluate(aperture.points)
    return (ups.conj().T * aperture.weights) @ ups


def channel_transform(channel: UserChannel, basis: FourierBasisSet, aperture: Aperture,
                      user: int = 0) -> WavenumberChannel:
    """Omega_n = sum_m weight_m G(s_m) Upsilon_n(s_m)."""
    if len(channel) != aperture.n_samples:
        raise InvalidArgumentError("channel was not sampled on this aperture")
    check_resolution(aperture, basis)
    ups = basis.evaluate(aperture.points)
    omega = np.einsum("m,mn,mab->nab", aperture.weights, ups, channel.G)
    return WavenumberChannel(user, omega)


def project(currents, basis: FourierBasisSet, aperture: Aperture) -> np.ndarray:
    """Coefficients w_n = sum_m weight_m theta(s_m) conj(Upsilon_n(s_m))."""
    currents = np.asarray(currents, dtype=complex)
    ups = basis.evaluate(aperture.points)
    return np.einsum("m,mn,ma->na", aperture.weights, ups.conj(), currents)


def synthesize(w, basis: FourierBasisSet, s) -> np.ndarray:
    """Current theta(s) = sum_n w_n Upsilon_n(s); ``s`` may be one point or many."""
    w = np.asarray(w, dtype=complex).reshape(basis.size, 3)
    single = np.ndim(s) == 1
    out = basis.evaluate(s) @ w
    return out[0] if single else out


def field_from_weights(omega: WavenumberChannel | np.ndarray, w) -> np.ndarray:
    om = omega.omega if isinstance(omega, WavenumberChannel) else np.asarray(omega)
    w = np.asarray(w, dtype=complex)
    if w.size != 3 * om.shape[0]:
        raise InvalidArgumentError(f"weights of size {w.size} do not match N_F={om.shape[0]}")
    return np.einsum("nab,nb->a", om, w.reshape(-1, 3))


def power_from_weights(all_w) -> float:
    """Parseval power sum_k sum_n |w_kn|^2 in A^2."""
    return float(sum(np.vdot(w, w).real for w in all_w))
