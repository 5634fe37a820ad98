"""Poynting-vector received power and the sigmoid energy-harvesting model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleRequirementError, InvalidArgumentError
from .geometry_em import MediumParams


@dataclass(frozen=True)
class EhCircuit:
    """Sigmoid rectifier: saturation ``m`` (W), steepness ``a`` (1/W), offset ``b`` (W)."""

    a: float = 1500.0
    b: float = 0.0022
    m: float = 3.9e-3

    def __post_init__(self):
        if not (self.m > 0 and self.a > 0 and self.b >= 0):
            raise InvalidArgumentError("EH circuit needs m, a > 0 and b >= 0")

    @property
    def x(self) -> float:
        e = np.exp(self.a * self.b)
        return e / (1 + e)

    @property
    def y(self) -> float:
        return self.m / np.exp(self.a * self.b)


@dataclass(frozen=True)
class ReceiverGeometry:
    area: float
    phi: float = 0.0
    z: float = 25.0

    def __post_init__(self):
        if not self.area > 0:
            raise InvalidArgumentError("receiving area must be positive")
        if not 0 <= self.phi <= np.pi / 2:
            raise InvalidArgumentError("incidence angle must lie in [0, pi/2]")
        if not self.z > 0:
            raise InvalidArgumentError("wave impedance must be positive")

    @classmethod
    def isotropic(cls, medium: MediumParams, phi: float = 0.0) -> "ReceiverGeometry":
        """Receiver with the isotropic effective area lambda^2 / (4 pi)."""
        return cls(medium.wavelength**2 / (4 * np.pi), phi, medium.z)

    @property
    def factor(self) -> float:
        """Watts per (V/m)^2 of received field."""
        return self.area * np.cos(self.phi) / (2 * self.z)


def poynting_power(fields, geom: ReceiverGeometry) -> float:
    """Power through the receiving area for a set of uncorrelated streams."""
    fields = np.asarray(fields, dtype=complex).reshape(-1, 3)
    return float(geom.factor * np.sum(np.abs(fields) ** 2))


def eh_output(p, circuit: EhCircuit):
    """Harvested DC power for RF input power ``p`` (scalar or array)."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise InvalidArgumentError("input power must be non-negative")
    # logistic written via expit-style split to stay finite for large a*p
    z = circuit.a * (p - circuit.b)
    logistic = np.where(z >= 0, 1 / (1 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))))
    out = circuit.m * logistic / circuit.x - circuit.y
    return float(out) if out.ndim == 0 else out


def eh_inverse(p0: float, circuit: EhCircuit) -> float:
    """RF input power needed to harvest ``p0``."""
    if p0 < 0:
        raise InvalidArgumentError("harvest target must be non-negative")
    if p0 >= circuit.m:
        raise InfeasibleRequirementError(
            f"target {p0} W is at or beyond saturation {circuit.m} W")
    if p0 == 0:
        return 0.0
    ratio = circuit.m / (circuit.x * (p0 + circuit.y)) - 1
    return float(circuit.b - np.log(ratio) / circuit.a)


def eh_threshold(p0: float, geom: ReceiverGeometry, circuit: EhCircuit) -> float:
    """Threshold on the combined field power sum_j |psi^H e_j|^2 (V^2/m^2).

    Meeting it makes the Poynting power equal eh_inverse(p0), i.e. harvested
    power p0.
    """
    if geom.factor <= 1e-15 * geom.area / geom.z:
        raise InfeasibleRequirementError("grazing incidence: no power crosses the receiver")
    return eh_inverse(p0, circuit) / geom.factor
