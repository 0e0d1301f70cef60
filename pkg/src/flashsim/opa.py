"""Quantum-injected optical parametric amplifier.

The interaction ``g (a_H^dag a_V^dag - a_H a_V)`` splits, on the modes
``a_{+/-} = (a_H +/- a_V)/sqrt(2)``, into two independent single-mode
squeezers of opposite sign:

    g/2 (a_+^dag^2 - a_+^2) - g/2 (a_-^dag^2 - a_-^2)

so an injected ``|+>`` becomes (squeezed one-photon) x (squeezed vacuum)
and ``|->`` the mirror image. Two backends build the output state:

* :func:`amplify_analytic` uses those closed forms in log space and stores
  the result in the ``{+, -}`` mode basis;
* :func:`amplify_numeric` integrates the Hamiltonian directly on a truncated
  ``(n_H, n_V)`` grid with :func:`scipy.sparse.linalg.expm_multiply` (Krylov /
  truncated Taylor with automatic step selection, accurate to double
  precision). It evolves on a grid twice the requested cutoff and reports the
  mass outside the cutoff as leakage, so edge reflections of the truncated
  generator never reach the returned amplitudes.

:func:`fock_rotate` moves a state between polarization mode bases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import schur
from scipy.sparse.linalg import expm_multiply
from scipy.special import gammaln

from .qstate import PM, HV, MeasurementBasis, Qubit

__all__ = [
    "GainParameter",
    "AmplifiedState",
    "TruncationError",
    "BackendLimitError",
    "NUMERIC_G_MAX",
    "DEFAULT_TOL",
    "default_cutoff",
    "log_squeezed_vacuum",
    "log_squeezed_one",
    "squeezed_vacuum_prob",
    "squeezed_one_prob",
    "squeezed_vacuum_amplitudes",
    "squeezed_one_amplitudes",
    "amplify_analytic",
    "amplify_numeric",
    "fock_rotate",
    "mean_photon",
]

NUMERIC_G_MAX = 1.5
# largest cutoff the sparse evolution accepts (about 7 s per state at the cap)
NUMERIC_N_MAX = 400
DEFAULT_TOL = 1e-8
MAX_TABLE_ENTRIES = 20_000_000
# mode coefficients below this are round-off (e.g. from exp(i*pi)) and are dropped
COEFF_EPS = 1e-15


class TruncationError(ValueError):
    """Requested cutoff loses more probability than allowed."""

    def __init__(self, leakage: float, tol: float, n_max: int):
        self.leakage = leakage
        self.tol = tol
        self.n_max = n_max
        super().__init__(
            f"cutoff n_max={n_max} leaks {leakage:.3e} of the norm (tolerance {tol:.1e}); "
            "raise n_max or leave it unset"
        )


class BackendLimitError(ValueError):
    pass


@dataclass(frozen=True)
class GainParameter:
    """Nonlinear gain ``g`` of the amplifier (``g = chi * t``)."""

    g: float

    def __post_init__(self):
        g = float(self.g)
        if not math.isfinite(g) or g < 0:
            raise ValueError(f"gain must be finite and >= 0, got {self.g!r}")
        object.__setattr__(self, "g", g)

    @classmethod
    def from_mbar(cls, mbar: float) -> GainParameter:
        return cls(math.asinh(math.sqrt(mbar)))

    @property
    def mbar(self) -> float:
        """Spontaneous mean photon number per mode, ``sinh(g)^2``."""
        return math.sinh(self.g) ** 2

    @property
    def Gamma(self) -> float:
        return math.tanh(self.g)

    @property
    def C(self) -> float:
        return math.cosh(self.g)


def _as_gain(gain) -> GainParameter:
    return gain if isinstance(gain, GainParameter) else GainParameter(gain)


def default_cutoff(gain) -> int:
    return math.ceil(20.0 * (_as_gain(gain).mbar + 1.0))


def _log_gamma_powers(k: np.ndarray, gain: GainParameter) -> np.ndarray:
    # 2k log(Gamma), with 0 * log(0) := 0 at g = 0
    if gain.g == 0.0:
        return np.where(k == 0, 0.0, -np.inf)
    return 2.0 * k * math.log(gain.Gamma)


def log_squeezed_vacuum(n, gain) -> np.ndarray:
    """log P(n) for a squeezed vacuum; ``-inf`` on odd ``n``."""
    gain = _as_gain(gain)
    n = np.asarray(n, dtype=np.int64)
    k = np.maximum(n, 0) // 2
    out = (
        gammaln(2 * k + 1)
        - 2.0 * (k * math.log(2.0) + gammaln(k + 1))
        + _log_gamma_powers(k, gain)
        - math.log(gain.C)
    )
    return np.where((n % 2 == 0) & (n >= 0), out, -np.inf)


def log_squeezed_one(n, gain) -> np.ndarray:
    """log P(n) for a squeezed single photon; ``-inf`` on even ``n``."""
    gain = _as_gain(gain)
    n = np.asarray(n, dtype=np.int64)
    k = np.maximum(n - 1, 0) // 2
    out = (
        gammaln(2 * k + 2)
        - 2.0 * (k * math.log(2.0) + gammaln(k + 1))
        + _log_gamma_powers(k, gain)
        - 3.0 * math.log(gain.C)
    )
    return np.where((n % 2 == 1) & (n >= 1), out, -np.inf)


def squeezed_vacuum_prob(j: int, gain) -> float:
    if j < 0:
        raise ValueError(f"photon number must be >= 0, got {j}")
    return float(np.exp(log_squeezed_vacuum(j, gain)))


def squeezed_one_prob(k: int, gain) -> float:
    if k < 1:
        raise ValueError(f"photon number must be >= 1 for a seeded squeezer, got {k}")
    return float(np.exp(log_squeezed_one(k, gain)))


def squeezed_vacuum_amplitudes(n_max: int, gain, sign: int = 1) -> np.ndarray:
    """Amplitudes <n|S|0> for n = 0..n_max; ``sign`` selects the squeezing direction."""
    n = np.arange(n_max + 1)
    amp = np.exp(0.5 * log_squeezed_vacuum(n, gain))
    return amp * np.where((n // 2) % 2 == 1, float(sign), 1.0)


def squeezed_one_amplitudes(n_max: int, gain, sign: int = 1) -> np.ndarray:
    n = np.arange(n_max + 1)
    amp = np.exp(0.5 * log_squeezed_one(n, gain))
    return amp * np.where(((n - 1) // 2) % 2 == 1, float(sign), 1.0)


@dataclass(frozen=True)
class AmplifiedState:
    """Truncated two-mode Fock amplitudes ``amplitudes[n_a, n_b]``.

    Entries with ``n_a + n_b > n_max`` are zero. ``basis`` says which two
    polarizations the modes carry; ``norm_leakage`` is the probability lost
    to truncation.
    """

    basis: MeasurementBasis
    amplitudes: np.ndarray
    norm_leakage: float
    gain: GainParameter | None = field(default=None, compare=False)

    @property
    def n_max(self) -> int:
        return self.amplitudes.shape[0] - 1

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norm2(self) -> float:
        return float(self.probabilities.sum())

    def mode_means(self) -> tuple[float, float]:
        p = self.probabilities
        n = np.arange(self.n_max + 1)
        return float(p.sum(axis=1) @ n), float(p.sum(axis=0) @ n)

    def inner(self, other: AmplifiedState) -> complex:
        """<self|other>; states must share mode basis and cutoff."""
        if other.n_max != self.n_max:
            raise ValueError("states have different cutoffs")
        if not _same_modes(self.basis, other.basis):
            raise ValueError("states are expressed in different mode bases; fock_rotate first")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: AmplifiedState) -> float:
        return abs(self.inner(other)) ** 2

    def support(self) -> list[tuple[int, int]]:
        a, b = np.nonzero(self.amplitudes)
        return list(zip(a.tolist(), b.tolist()))


def _same_modes(b1: MeasurementBasis, b2: MeasurementBasis) -> bool:
    # identical vectors, not just equal up to phase: a phase on a mode changes amplitudes
    return np.allclose(b1.matrix, b2.matrix, atol=1e-14, rtol=0)


def _triangle_mask(n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    return (n[:, None] + n[None, :]) <= n_max


def _check_table_size(n_max: int) -> None:
    if (n_max + 1) ** 2 > MAX_TABLE_ENTRIES:
        raise ValueError(
            f"cutoff {n_max} needs a {(n_max + 1)}^2 amplitude table; use the photostats "
            "distribution functions, which work from per-mode marginals"
        )


def _analytic_table(c_plus: complex, c_minus: complex, gain: GainParameter, n_max: int) -> np.ndarray:
    one_p = squeezed_one_amplitudes(n_max, gain, +1)
    vac_m = squeezed_vacuum_amplitudes(n_max, gain, -1)
    vac_p = squeezed_vacuum_amplitudes(n_max, gain, +1)
    one_m = squeezed_one_amplitudes(n_max, gain, -1)
    table = c_plus * np.outer(one_p, vac_m) + c_minus * np.outer(vac_p, one_m)
    table[~_triangle_mask(n_max)] = 0.0
    return table


def amplify_analytic(q: Qubit, gain, n_max: int | None = None, tol: float = DEFAULT_TOL) -> AmplifiedState:
    """Exact amplified state in the ``{+, -}`` mode basis.

    With ``n_max=None`` the cutoff starts at ``ceil(20 (mbar + 1))`` and grows
    until the leakage is below ``tol``; an explicit ``n_max`` that leaks more
    raises :class:`TruncationError`.
    """
    gain = _as_gain(gain)
    c_plus, c_minus = (c if abs(c) > COEFF_EPS else 0.0 for c in (PM.plus.inner(q), PM.minus.inner(q)))
    explicit = n_max is not None
    n = n_max if explicit else default_cutoff(gain)
    while True:
        _check_table_size(n)
        table = _analytic_table(c_plus, c_minus, gain, n)
        leakage = max(0.0, 1.0 - float(np.sum(np.abs(table) ** 2)))
        if leakage < tol:
            return AmplifiedState(PM, table, leakage, gain)
        if explicit:
            raise TruncationError(leakage, tol, n)
        n = math.ceil(n * 1.25)


def _triangle_index(L: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a, b = np.nonzero(_triangle_mask(L))
    index = -np.ones((L + 1, L + 1), dtype=np.int64)
    index[a, b] = np.arange(a.size)
    return a, b, index


def _pair_creation_generator(g: float, L: int):
    """Sparse ``g (a^dag b^dag - a b)`` on ``{n_a + n_b <= L}``."""
    a, b, index = _triangle_index(L)
    keep = a + b + 2 <= L
    src = index[a[keep], b[keep]]
    dst = index[a[keep] + 1, b[keep] + 1]
    val = g * np.sqrt((a[keep] + 1.0) * (b[keep] + 1.0))
    rows = np.concatenate([dst, src])
    cols = np.concatenate([src, dst])
    vals = np.concatenate([val, -val])
    dim = a.size
    return sparse.csr_matrix((vals, (rows, cols)), shape=(dim, dim)), a, b


def _evolve_hv(q: Qubit, g: float, L: int) -> np.ndarray:
    K, a, b = _pair_creation_generator(g, L)
    _, _, index = _triangle_index(L)
    psi0 = np.zeros(a.size, dtype=complex)
    psi0[index[1, 0]] = q.alpha
    psi0[index[0, 1]] = q.beta
    psi = expm_multiply(K, psi0) if g > 0 else psi0
    table = np.zeros((L + 1, L + 1), dtype=complex)
    table[a, b] = psi
    return table


def amplify_numeric(
    q: Qubit,
    gain,
    n_max: int | None = None,
    tol: float = DEFAULT_TOL,
    g_max: float = NUMERIC_G_MAX,
) -> AmplifiedState:
    """Direct evolution ``exp(g(a_H^dag a_V^dag - a_H a_V)) |q>`` on the H/V Fock grid."""
    gain = _as_gain(gain)
    if gain.g > g_max:
        raise BackendLimitError(
            f"g={gain.g} exceeds the numeric backend limit {g_max}; use amplify_analytic"
        )
    explicit = n_max is not None
    n = n_max if explicit else default_cutoff(gain)
    while True:
        if n > NUMERIC_N_MAX:
            raise BackendLimitError(
                f"cutoff {n} exceeds the numeric backend limit {NUMERIC_N_MAX}; use amplify_analytic"
            )
        _check_table_size(2 * n + 10)
        full = _evolve_hv(q, gain.g, 2 * n + 10)
        table = full[: n + 1, : n + 1].copy()
        table[~_triangle_mask(n)] = 0.0
        leakage = max(0.0, 1.0 - float(np.sum(np.abs(table) ** 2)))
        if leakage < tol:
            return AmplifiedState(HV, table, leakage, gain)
        if explicit:
            raise TruncationError(leakage, tol, n)
        n = math.ceil(n * 1.25)


def _mode_generator(A: np.ndarray, n_max: int):
    """Sparse ``sum_jk A_jk a_j^dag a_k`` on ``{n_a + n_b <= n_max}``."""
    a, b, index = _triangle_index(n_max)
    rows = [np.arange(a.size)]
    cols = [np.arange(a.size)]
    vals = [A[0, 0] * a + A[1, 1] * b + 0j]
    # a_0^dag a_1 : (a, b) -> (a+1, b-1)
    m = b >= 1
    rows.append(index[a[m] + 1, b[m] - 1])
    cols.append(index[a[m], b[m]])
    vals.append(A[0, 1] * np.sqrt((a[m] + 1.0) * b[m]))
    # a_1^dag a_0 : (a, b) -> (a-1, b+1)
    m = a >= 1
    rows.append(index[a[m] - 1, b[m] + 1])
    cols.append(index[a[m], b[m]])
    vals.append(A[1, 0] * np.sqrt(a[m] * (b[m] + 1.0)))
    gen = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(a.size, a.size)
    )
    return gen, a, b


def fock_rotate(s: AmplifiedState, target: MeasurementBasis) -> AmplifiedState:
    """Express ``s`` in the mode basis ``target``.

    A photon in source mode ``i`` is ``sum_j W[j, i]`` photons in target mode
    ``j`` with ``W[j, i] = <target_j|source_i>``. Writing ``W = exp(iA)``, the
    Fock-space operator is ``exp(i sum A_jk a_j^dag a_k)``, which conserves
    total photon number and so respects the triangular cutoff.
    """
    W = target.matrix.conj().T @ s.basis.matrix
    T, Z = schur(W, output="complex")
    A = Z @ np.diag(np.angle(np.diag(T))) @ Z.conj().T
    A = 0.5 * (A + A.conj().T)
    gen, a, b = _mode_generator(A, s.n_max)
    psi = s.amplitudes[a, b]
    if np.any(A != 0):
        psi = expm_multiply(1j * gen, psi)
    table = np.zeros_like(s.amplitudes, dtype=complex)
    table[a, b] = psi
    return AmplifiedState(target, table, s.norm_leakage, s.gain)


def mean_photon(delta_phi: float, gain) -> tuple[float, float]:
    """Mean photon numbers in the two analysis modes for relative input phase ``delta_phi``."""
    m = _as_gain(gain).mbar
    c = math.cos(delta_phi)
    return m + 0.5 * (2 * m + 1) * (1 + c), m + 0.5 * (2 * m + 1) * (1 - c)
