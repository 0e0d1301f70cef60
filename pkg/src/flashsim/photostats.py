"""Exact photon-counting statistics of the amplified field.

Everything here is built from the two per-mode marginals of the amplifier
(squeezed vacuum and squeezed single photon). An injected qubit whose
overlap with the first analysis mode is ``w`` yields the joint count law

    P(n_a, n_b) = w * One(n_a) Vac(n_b) + (1 - w) * Vac(n_a) One(n_b)

because the two terms of the output state live in disjoint parity sectors.
Imperfect injection only changes the mixture weights, so the same three
product components cover the imperfect model as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from .opa import (
    DEFAULT_TOL,
    MAX_TABLE_ENTRIES,
    GainParameter,
    _as_gain,
    default_cutoff,
    log_squeezed_one,
    log_squeezed_vacuum,
)

__all__ = [
    "ImperfectionModel",
    "PhotonCountDistribution",
    "InfeasibleConditioningError",
    "mixture_weights",
    "mode_marginals",
    "marginal_cutoff",
    "joint_distribution",
    "delta_distribution",
    "delta_moments",
    "visibility_model",
    "clone_fidelity",
]

CONDITION_MASS_FLOOR = 1e-12
_DIRECT_CORRELATE_MAX = 4096


class InfeasibleConditioningError(ValueError):
    pass


@dataclass(frozen=True)
class ImperfectionModel:
    """Input visibility ``v_in`` and probability ``p_inject`` that the amplifier is seeded."""

    v_in: float = 1.0
    p_inject: float = 1.0

    def __post_init__(self):
        for name in ("v_in", "p_inject"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)


IDEAL = ImperfectionModel()


@dataclass(frozen=True)
class PhotonCountDistribution:
    """Probability table over integer observables.

    ``support`` has shape ``(k,)`` for scalar observables such as
    ``x = n_a - n_b`` or ``(k, 2)`` for joint counts ``(n_a, n_b)``.
    """

    support: np.ndarray
    probs: np.ndarray
    leakage: float = 0.0

    def __post_init__(self):
        if self.support.shape[0] != self.probs.shape[0]:
            raise ValueError("support and probs differ in length")
        if np.any(self.probs < 0):
            raise ValueError("negative probability")

    @property
    def total_mass(self) -> float:
        return float(self.probs.sum())

    @property
    def is_joint(self) -> bool:
        return self.support.ndim == 2

    def moment(self, order: int = 1) -> float:
        if self.is_joint:
            raise ValueError("moment() needs a scalar observable; take a marginal first")
        x = self.support.astype(float)
        return float(np.sum(self.probs * x**order))

    def mean(self) -> float:
        return self.moment(1)

    def prob(self, value) -> float:
        if self.is_joint:
            hit = np.all(self.support == np.asarray(value), axis=1)
        else:
            hit = self.support == value
        return float(self.probs[hit].sum())

    def as_dict(self, drop_zeros: bool = True) -> dict:
        keys = map(tuple, self.support.tolist()) if self.is_joint else self.support.tolist()
        return {k: float(p) for k, p in zip(keys, self.probs) if p > 0 or not drop_zeros}

    def as_table(self) -> np.ndarray:
        """Dense ``table[n_a, n_b]`` for a joint distribution."""
        if not self.is_joint:
            raise ValueError("as_table() needs a joint distribution")
        shape = tuple(self.support.max(axis=0) + 1)
        table = np.zeros(shape)
        table[self.support[:, 0], self.support[:, 1]] = self.probs
        return table

    def difference(self) -> PhotonCountDistribution:
        """Distribution of ``n_a - n_b`` from a joint distribution."""
        if not self.is_joint:
            raise ValueError("difference() needs a joint distribution")
        x = self.support[:, 0] - self.support[:, 1]
        values, inverse = np.unique(x, return_inverse=True)
        return PhotonCountDistribution(values, np.bincount(inverse, weights=self.probs), self.leakage)

    def absolute(self) -> PhotonCountDistribution:
        """Distribution of ``|x|``."""
        if self.is_joint:
            raise ValueError("absolute() needs a scalar observable")
        values, inverse = np.unique(np.abs(self.support), return_inverse=True)
        return PhotonCountDistribution(values, np.bincount(inverse, weights=self.probs), self.leakage)


def mixture_weights(overlap_sq: float, imp: ImperfectionModel | None = None) -> tuple[float, float, float]:
    """Weights of (One x Vac, Vac x One, Vac x Vac).

    ``overlap_sq`` is ``|<a|psi>|^2`` between the injected qubit and the first
    analysis mode, ``cos^2(delta_phi/2)`` for equatorial states. The input is
    depolarized to ``v_in |psi><psi| + (1 - v_in) 1/2``; a failed injection
    leaves both modes in squeezed vacuum.
    """
    imp = imp or IDEAL
    w = imp.v_in * overlap_sq + 0.5 * (1.0 - imp.v_in)
    p = imp.p_inject
    return p * w, p * (1.0 - w), 1.0 - p


def _phase_overlap(delta_phi: float) -> float:
    return math.cos(0.5 * delta_phi) ** 2


@lru_cache(maxsize=32)
def _marginals(g: float, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    n = np.arange(n_max + 1)
    vac = np.exp(log_squeezed_vacuum(n, g))
    one = np.exp(log_squeezed_one(n, g))
    vac.setflags(write=False)
    one.setflags(write=False)
    return vac, one


def mode_marginals(gain, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Squeezed-vacuum and squeezed-one-photon count probabilities for n = 0..n_max."""
    return _marginals(_as_gain(gain).g, int(n_max))


def _marginal_leakage(gain: GainParameter, n_max: int) -> float:
    vac, one = mode_marginals(gain, n_max)
    return max(0.0, 1.0 - float(vac.sum())) + max(0.0, 1.0 - float(one.sum()))


@lru_cache(maxsize=64)
def _cutoff(g: float, tol: float) -> int:
    gain = GainParameter(g)
    n = default_cutoff(gain)
    while _marginal_leakage(gain, n) >= tol:
        n = math.ceil(n * 1.25)
    return n


def marginal_cutoff(gain, tol: float = DEFAULT_TOL) -> int:
    """Smallest per-mode cutoff on the growth ladder whose tail mass is below ``tol``."""
    return _cutoff(_as_gain(gain).g, float(tol))


def _resolve_cutoff(gain: GainParameter, n_max: int | None, tol: float) -> int:
    return marginal_cutoff(gain, tol) if n_max is None else int(n_max)


def _correlate(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``out[x + n] = sum_k a[k] b[k - x]`` for x in [-n, n]."""
    if a.size <= _DIRECT_CORRELATE_MAX:
        return np.convolve(a, b[::-1])
    return np.clip(fftconvolve(a, b[::-1]), 0.0, None)


@lru_cache(maxsize=16)
def _delta_components(g: float, n_max: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    vac, one = _marginals(g, n_max)
    d_ab = _correlate(one, vac)
    d_ba = d_ab[::-1].copy()
    d_cc = _correlate(vac, vac)
    for arr in (d_ab, d_ba, d_cc):
        arr.setflags(write=False)
    return d_ab, d_ba, d_cc


def joint_distribution(
    delta_phi: float,
    gain,
    n_max: int | None = None,
    imp: ImperfectionModel | None = None,
    tol: float = DEFAULT_TOL,
    overlap_sq: float | None = None,
) -> PhotonCountDistribution:
    """Joint law of ``(n_a, n_b)`` on the box ``0..n_max`` per mode.

    ``delta_phi`` is the injected phase relative to the analysis basis;
    ``overlap_sq`` overrides it for non-equatorial inputs.
    """
    gain = _as_gain(gain)
    n = _resolve_cutoff(gain, n_max, tol)
    if (n + 1) ** 2 > MAX_TABLE_ENTRIES:
        raise ValueError(f"cutoff {n} is too large for a dense joint table; use delta_distribution")
    w = _phase_overlap(delta_phi) if overlap_sq is None else overlap_sq
    wa, wb, wc = mixture_weights(w, imp)
    vac, one = mode_marginals(gain, n)
    table = wa * np.outer(one, vac) + wb * np.outer(vac, one)
    if wc:
        table += wc * np.outer(vac, vac)
    a, b = np.indices(table.shape)
    support = np.column_stack([a.ravel(), b.ravel()])
    return PhotonCountDistribution(support, table.ravel(), max(0.0, 1.0 - float(table.sum())))


def delta_distribution(
    delta_phi: float,
    gain,
    n_max: int | None = None,
    condition_total: int | None = None,
    imp: ImperfectionModel | None = None,
    tol: float = DEFAULT_TOL,
    overlap_sq: float | None = None,
) -> PhotonCountDistribution:
    """Law of ``x = n_a - n_b``, optionally conditioned on ``n_a + n_b``.

    Conditioning renormalizes over the shell ``n_a + n_b = condition_total``
    (support ``x = -N, -N+2, ..., N``) and raises
    :class:`InfeasibleConditioningError` if the shell carries less than
    ``1e-12`` of the probability.
    """
    gain = _as_gain(gain)
    imp = imp or IDEAL
    w = _phase_overlap(delta_phi) if overlap_sq is None else overlap_sq
    wa, wb, wc = mixture_weights(w, imp)

    if condition_total is not None:
        N = int(condition_total)
        if N < 0:
            raise ValueError("condition_total must be >= 0")
        if imp.p_inject == 1.0 and N % 2 == 0:
            raise InfeasibleConditioningError("an injected amplifier emits an odd total photon number")
        vac, one = mode_marginals(gain, N)
        shell = wa * one * vac[::-1] + wb * vac * one[::-1]
        if wc:
            shell = shell + wc * vac * vac[::-1]
        mass = float(shell.sum())
        if not mass >= CONDITION_MASS_FLOOR:
            raise InfeasibleConditioningError(
                f"total photon number {N} has probability {mass:.3e} at g={gain.g}"
            )
        x = 2 * np.arange(N + 1) - N
        return PhotonCountDistribution(x, shell / mass, 0.0)

    n = _resolve_cutoff(gain, n_max, tol)
    d_ab, d_ba, d_cc = _delta_components(gain.g, n)
    probs = wa * d_ab + wb * d_ba
    if wc:
        probs = probs + wc * d_cc
    vac, one = mode_marginals(gain, n)
    leakage = max(0.0, 1.0 - float(one.sum()) * float(vac.sum()))
    return PhotonCountDistribution(np.arange(-n, n + 1), probs, leakage)


def delta_moments(delta_phi: float, gain) -> tuple[float, float]:
    """Closed-form ``(<x>, <x^2>)``; the second moment does not depend on the phase."""
    m = _as_gain(gain).mbar
    return (2 * m + 1) * math.cos(delta_phi), 12 * m * m + 12 * m + 1


def visibility_model(imp: ImperfectionModel, gain) -> float:
    """Fringe visibility of the mean signal with imperfect input and injection."""
    m = _as_gain(gain).mbar
    seeded = imp.p_inject * (2 * m + 1)
    if seeded + 2 * m == 0.0:
        return 0.0
    return imp.v_in * seeded / (seeded + 2 * m)


def clone_fidelity(gain, imp: ImperfectionModel | None = None) -> float:
    """Single-clone fidelity; ``(1 + V)/2`` with the modeled visibility when ``imp`` is given."""
    if imp is None:
        m = _as_gain(gain).mbar
        return (3 * m + 1) / (4 * m + 1)
    return 0.5 * (1.0 + visibility_model(imp, gain))
