"""Polarization qubits, measurement bases and the singlet source.

Conventions: amplitudes are stored in the ``{|H>, |V>}`` basis and the
equatorial states are ``|phi> = (|H> + e^{i phi}|V>)/sqrt(2)``, so that
``|+> = phi=0``, ``|R> = phi=pi/2``, ``|-> = phi=pi`` and ``|L> = phi=-pi/2``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Qubit",
    "MeasurementBasis",
    "ModeBasisLabel",
    "H",
    "V",
    "equatorial",
    "equatorial_basis",
    "linear_basis",
    "time_reversal",
    "singlet_partner",
    "singlet_project",
    "equatorial_phase_of",
    "PM",
    "RL",
    "HV",
    "basis_from_label",
]

NORM_TOL = 1e-12


@dataclass(frozen=True)
class Qubit:
    """A normalized polarization state ``alpha|H> + beta|V>``.

    Global phase is kept as given. Use :meth:`same_state` to compare.
    """

    alpha: complex
    beta: complex

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"qubit is not normalized: |alpha|^2+|beta|^2 = {norm!r}")

    @classmethod
    def normalized(cls, alpha: complex, beta: complex) -> Qubit:
        norm = math.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return cls(alpha / norm, beta / norm)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)

    def inner(self, other: Qubit) -> complex:
        """<self|other>."""
        return self.alpha.conjugate() * other.alpha + self.beta.conjugate() * other.beta

    def same_state(self, other: Qubit, tol: float = 1e-12) -> bool:
        return abs(abs(self.inner(other)) - 1.0) <= tol

    def __mul__(self, phase: complex) -> Qubit:
        return Qubit(self.alpha * phase, self.beta * phase)

    __rmul__ = __mul__

    def __neg__(self) -> Qubit:
        return Qubit(-self.alpha, -self.beta)


H = Qubit(1.0, 0.0)
V = Qubit(0.0, 1.0)


def equatorial(phi: float) -> Qubit:
    """Equatorial qubit ``(|H> + e^{i phi}|V>)/sqrt(2)``."""
    s = 1.0 / math.sqrt(2.0)
    return Qubit(s, s * cmath.exp(1j * phi))


def equatorial_phase_of(q: Qubit, tol: float = 1e-12) -> float | None:
    """Phase ``phi`` in ``[0, 2pi)`` if ``q`` lies on the equator, else None."""
    if abs(abs(q.alpha) ** 2 - 0.5) > tol:
        return None
    return cmath.phase(q.beta / q.alpha) % (2.0 * math.pi)


@dataclass(frozen=True)
class MeasurementBasis:
    """An orthonormal pair of polarization states.

    ``plus`` is outcome 0, ``minus`` is outcome 1. The same object labels
    the two modes of a two-mode Fock amplitude table.
    """

    plus: Qubit
    minus: Qubit
    label: str = ""

    def __post_init__(self):
        overlap = abs(self.plus.inner(self.minus))
        if overlap > NORM_TOL:
            raise ValueError(f"basis states are not orthogonal: |<plus|minus>| = {overlap:.3e}")

    def __getitem__(self, index: int) -> Qubit:
        return (self.plus, self.minus)[index]

    @property
    def matrix(self) -> np.ndarray:
        """Columns are the basis vectors in H/V coordinates."""
        return np.column_stack([self.plus.vector, self.minus.vector])

    @property
    def phase(self) -> float | None:
        """Equatorial phase of ``plus`` when both members lie on the equator."""
        phi = equatorial_phase_of(self.plus)
        if phi is None or equatorial_phase_of(self.minus) is None:
            return None
        return phi


ModeBasisLabel = MeasurementBasis


def equatorial_basis(phi: float, label: str | None = None) -> MeasurementBasis:
    return MeasurementBasis(
        equatorial(phi),
        equatorial(phi + math.pi),
        label if label is not None else f"phi:{phi:.9g}",
    )


def linear_basis(theta: float, label: str | None = None) -> MeasurementBasis:
    """Basis ``{cos t|H> + sin t|V>, -sin t|H> + cos t|V>}``."""
    c, s = math.cos(theta), math.sin(theta)
    return MeasurementBasis(
        Qubit(c, s),
        Qubit(-s, c),
        label if label is not None else f"theta:{theta:.9g}",
    )


PM = equatorial_basis(0.0, "pm")
# |L> is taken as (|H> - i|V>)/sqrt(2), the state orthogonal to |R>.
RL = equatorial_basis(math.pi / 2, "rl")
HV = MeasurementBasis(H, V, "hv")


def time_reversal(q: Qubit) -> Qubit:
    """Anti-unitary flip ``(alpha, beta) -> (-beta*, alpha*)``."""
    return Qubit(-q.beta.conjugate(), q.alpha.conjugate())


def singlet_partner(detected: Qubit) -> Qubit:
    """State left on the other photon of ``(|HV> - |VH>)/sqrt(2)``.

    Projecting the second photon onto ``detected = (a_H, a_V)`` leaves the
    first in ``(a_V*, -a_H*)``, which equals ``-T|detected>``.
    """
    return Qubit(detected.beta.conjugate(), -detected.alpha.conjugate())


def singlet_project(alice_basis: MeasurementBasis, rng: np.random.Generator) -> tuple[int, Qubit]:
    """Alice measures her singlet photon; returns her outcome and Bob's state.

    Both outcomes occur with probability 1/2 whatever the basis.
    """
    outcome = int(rng.integers(2))
    return outcome, singlet_partner(alice_basis[outcome])


_NAMED_BASES = {"pm": PM, "rl": RL, "hv": HV}


def basis_from_label(label: str) -> MeasurementBasis:
    """Parse ``pm``, ``rl``, ``hv``, ``phi:<radians>`` or ``theta:<radians>``."""
    key = label.strip().lower()
    if key in _NAMED_BASES:
        return _NAMED_BASES[key]
    kind, sep, value = key.partition(":")
    if sep:
        try:
            angle = float(value)
        except ValueError:
            angle = None
        if angle is not None and math.isfinite(angle):
            if kind == "phi":
                return equatorial_basis(angle, key)
            if kind == "theta":
                return linear_basis(angle, key)
    raise ValueError(f"unknown basis label {label!r}; expected pm, rl, hv, phi:<rad> or theta:<rad>")
