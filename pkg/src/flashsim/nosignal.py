"""Computational checks that Alice's basis choice never reaches Bob.

* :func:`rho_bob` and :func:`trace_distance`: equal mixtures of amplified
  basis states give the same density matrix for every basis.
* :func:`distribution_sum_invariance`: summed count laws of a basis pair.
* :func:`mutual_information`, :func:`flatness_test`, :func:`homogeneity_test`:
  the same statement measured on Monte Carlo datasets.
* :func:`two_clone_density`: two-photon correlations of the clones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .opa import DEFAULT_TOL, AmplifiedState, _as_gain, amplify_analytic, amplify_numeric
from .photostats import delta_distribution, marginal_cutoff
from .protocol import ExperimentDataset
from .qstate import MeasurementBasis

__all__ = [
    "DensityMatrix",
    "InvarianceReport",
    "MutualInformation",
    "InsufficientPhotonsError",
    "trace_distance",
    "rho_bob",
    "distribution_sum_invariance",
    "mutual_information",
    "mi_bin_sensitivity",
    "flatness_test",
    "homogeneity_test",
    "two_clone_density",
    "partial_product",
    "clone_correlation_distance",
]


class InsufficientPhotonsError(ValueError):
    pass


class DensityMatrix:
    """Density matrix over an explicit list of basis labels.

    Built either from a dense ``matrix`` or, for mixtures of a few pure
    states, from ``vectors`` (rows, one per state) and ``weights``; the dense
    form is then materialized only on request.
    """

    def __init__(self, labels, matrix=None, *, vectors=None, weights=None):
        self.labels = tuple(labels)
        if (matrix is None) == (vectors is None):
            raise ValueError("give exactly one of matrix or vectors")
        self._matrix = None if matrix is None else np.asarray(matrix, dtype=complex)
        self.vectors = None if vectors is None else np.atleast_2d(np.asarray(vectors, dtype=complex))
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        if self.vectors is not None and self.weights.shape != (self.vectors.shape[0],):
            raise ValueError("need one weight per vector")

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = (self.vectors.T * self.weights) @ self.vectors.conj()
        return self._matrix

    @property
    def trace(self) -> float:
        if self._matrix is None:
            return float(np.sum(self.weights * np.sum(np.abs(self.vectors) ** 2, axis=1)))
        return float(np.real(np.trace(self._matrix)))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))

    def hermiticity_error(self) -> float:
        if self._matrix is None:
            return 0.0
        return float(np.max(np.abs(self._matrix - self._matrix.conj().T), initial=0.0))

    def _positions(self, labels) -> np.ndarray:
        pos = {lab: i for i, lab in enumerate(labels)}
        return np.array([pos[lab] for lab in self.labels], dtype=int)

    def embed(self, labels) -> np.ndarray:
        """Matrix on a larger label set, zero outside the original labels."""
        idx = self._positions(labels)
        out = np.zeros((len(labels), len(labels)), dtype=complex)
        out[np.ix_(idx, idx)] = self.matrix
        return out

    def embed_vectors(self, labels) -> np.ndarray:
        idx = self._positions(labels)
        out = np.zeros((self.vectors.shape[0], len(labels)), dtype=complex)
        out[:, idx] = self.vectors
        return out


def trace_distance(r1: DensityMatrix, r2: DensityMatrix) -> float:
    """``1/2 ||r1 - r2||_1`` on the union of the two label sets."""
    labels = list(dict.fromkeys(list(r1.labels) + list(r2.labels)))
    if r1.vectors is not None and r2.vectors is not None:
        # the difference lives in the span of the component states
        vecs = np.vstack([r1.embed_vectors(labels), r2.embed_vectors(labels)])
        w = np.concatenate([r1.weights, -r2.weights])
        q, r = np.linalg.qr(vecs.T)
        diff = (r * w) @ r.conj().T
    else:
        diff = r1.embed(labels) - r2.embed(labels)
    eig = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return 0.5 * float(np.abs(eig).sum())


def _pure(states: list[AmplifiedState], weights: list[float]) -> DensityMatrix:
    support = np.zeros(states[0].amplitudes.shape, dtype=bool)
    for s in states:
        support |= s.amplitudes != 0
    a, b = np.nonzero(support)
    vectors = np.array([s.amplitudes[a, b] for s in states])
    return DensityMatrix(tuple(zip(a.tolist(), b.tolist())), vectors=vectors, weights=weights)


def rho_bob(
    basis: MeasurementBasis,
    gain,
    n_max: int | None = None,
    tol: float = 1e-10,
    backend: str = "numeric",
) -> DensityMatrix:
    """Bob's state when Alice measures in ``basis`` and her outcome is unknown.

    ``backend="numeric"`` accepts any basis and works on the H/V grid;
    ``"analytic"`` needs equatorial bases and works in the +/- modes. Do not
    compare matrices from different backends: their labels refer to
    different modes.
    """
    if backend == "numeric":
        amplify = amplify_numeric
    elif backend == "analytic":
        if basis.phase is None:
            raise ValueError("the analytic backend only amplifies equatorial bases")
        amplify = amplify_analytic
    else:
        raise ValueError(f"unknown backend {backend!r}")
    first = amplify(basis.plus, gain, n_max=n_max, tol=tol)
    second = amplify(basis.minus, gain, n_max=first.n_max, tol=tol)
    return _pure([first, second], [0.5, 0.5])


@dataclass(frozen=True)
class InvarianceReport:
    metric: str
    value: float
    threshold: float
    config: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.threshold)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "value": float(self.value),
            "threshold": float(self.threshold),
            "pass": bool(self.passed),
            "config": self.config,
        }


def distribution_sum_invariance(
    phi: float,
    gain,
    n_max: int | None = None,
    threshold: float = 1e-12,
    tol: float = DEFAULT_TOL,
) -> InvarianceReport:
    """Compare ``P^phi + P^{phi+pi}`` with ``P^0 + P^pi`` pointwise in ``x``."""
    gain = _as_gain(gain)
    n = marginal_cutoff(gain, tol) if n_max is None else n_max
    pair = delta_distribution(phi, gain, n).probs + delta_distribution(phi + math.pi, gain, n).probs
    ref = delta_distribution(0.0, gain, n).probs + delta_distribution(math.pi, gain, n).probs
    value = float(np.max(np.abs(pair - ref)))
    return InvarianceReport(
        "distribution_sum_invariance", value, threshold, {"phi": phi, "gain": gain.g, "n_max": n}
    )


@dataclass(frozen=True)
class MutualInformation:
    bits: float
    se: float
    bins: int
    shots: int
    excluded: int


def _entropy_mm(counts: np.ndarray) -> float:
    """Miller-Madow corrected entropy in bits."""
    n = counts.sum()
    p = counts[counts > 0] / n
    h = -float(np.sum(p * np.log(p)))
    return (h + (p.size - 1) / (2.0 * n)) / math.log(2.0)


def _mi_from_codes(s: np.ndarray, y: np.ndarray, bins: int, n_labels: int) -> float:
    joint = np.bincount(y * bins + s, minlength=n_labels * bins).reshape(n_labels, bins)
    return _entropy_mm(joint.sum(axis=0)) + _entropy_mm(joint.sum(axis=1)) - _entropy_mm(joint.ravel())


def _stat_range(statistic: str, values: np.ndarray) -> tuple[float, float]:
    if statistic == "N":
        return -1.0, 1.0
    if statistic == "abs_N":
        return 0.0, 1.0
    lo, hi = float(values.min()), float(values.max())
    return (lo, hi) if hi > lo else (lo - 0.5, lo + 0.5)


def mutual_information(
    ds: ExperimentDataset,
    label: str = "alice_basis",
    statistic: str = "abs_N",
    bins: int = 32,
    bob_basis: str | None = None,
    n_boot: int = 200,
    seed: int = 0,
) -> MutualInformation:
    """Plug-in MI (bits) between a shot label and a binned Bob statistic.

    Each entropy gets the Miller-Madow correction; the standard error comes
    from ``n_boot`` bootstrap resamples of the shots. Shots where the
    statistic is undefined are dropped and counted in ``excluded``.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    if bob_basis is not None:
        ds = ds.select(bob_basis=bob_basis)
    values = ds.column(statistic).astype(float)
    raw = [getattr(r, label) for r in ds.records]
    keep = ~np.isnan(values)
    values = values[keep]
    raw = [v for v, k in zip(raw, keep) if k]
    names = sorted(set(map(str, raw)))
    if len(names) < 2:
        raise ValueError(f"need at least two values of {label!r}, found {names}")
    code = {name: i for i, name in enumerate(names)}
    y = np.array([code[str(v)] for v in raw])
    if np.any(np.bincount(y, minlength=len(names)) == 0):
        raise ValueError("empty label class")
    lo, hi = _stat_range(statistic, values)
    s = np.clip(((values - lo) / (hi - lo) * bins).astype(int), 0, bins - 1)
    bits = _mi_from_codes(s, y, bins, len(names))
    rng = np.random.default_rng(seed)
    boot = np.empty(n_boot)
    for k in range(n_boot):
        idx = rng.integers(0, s.size, s.size)
        boot[k] = _mi_from_codes(s[idx], y[idx], bins, len(names))
    se = float(boot.std(ddof=1)) if n_boot > 1 else float("nan")
    return MutualInformation(bits, se, bins, int(s.size), int((~keep).sum()))


def mi_bin_sensitivity(ds: ExperimentDataset, bins=(16, 32, 64), **kwargs) -> dict[int, MutualInformation]:
    return {b: mutual_information(ds, bins=b, **kwargs) for b in bins}


def flatness_test(ds: ExperimentDataset, statistic: str = "abs_N", group_by: str = "alice_basis") -> float:
    """One-way ANOVA p-value for equal means of ``statistic`` across groups."""
    groups = []
    for name in ds.labels(group_by):
        sub = [r for r in ds.records if getattr(r, group_by) == name]
        v = ExperimentDataset(ds.config, sub).column(statistic).astype(float)
        groups.append(v[~np.isnan(v)])
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    return float(stats.f_oneway(*groups).pvalue)


def homogeneity_test(
    ds_a: ExperimentDataset, ds_b: ExperimentDataset, min_expected: float = 5.0
) -> float:
    """Two-sample chi-square p-value on the joint detected counts ``(n_a, n_b)``.

    Cells whose pooled expected count falls below ``min_expected`` are merged
    into one overflow cell.
    """
    ka = list(zip(ds_a.column("n_a").tolist(), ds_a.column("n_b").tolist()))
    kb = list(zip(ds_b.column("n_a").tolist(), ds_b.column("n_b").tolist()))
    cells = sorted(set(ka) | set(kb))
    index = {c: i for i, c in enumerate(cells)}
    table = np.zeros((2, len(cells)))
    np.add.at(table[0], [index[c] for c in ka], 1)
    np.add.at(table[1], [index[c] for c in kb], 1)
    pooled = table.sum(axis=0)
    expected_min = pooled * min(table.sum(axis=1)) / table.sum()
    big = expected_min >= min_expected
    merged = np.column_stack([table[:, big], table[:, ~big].sum(axis=1)])
    merged = merged[:, merged.sum(axis=0) > 0]
    if merged.shape[1] < 2:
        return 1.0
    return float(stats.chi2_contingency(merged, correction=False).pvalue)


def _lower(table: np.ndarray, mode: int) -> np.ndarray:
    n = np.sqrt(np.arange(table.shape[mode], dtype=float))
    out = np.zeros_like(table)
    if mode == 0:
        out[:-1, :] = table[1:, :] * n[1:, None]
    else:
        out[:, :-1] = table[:, 1:] * n[None, 1:]
    return out


def two_clone_density(s: AmplifiedState) -> tuple[DensityMatrix, DensityMatrix]:
    """Two-clone and single-clone polarization density matrices of ``s``.

    ``rho_pair[(k,l),(i,j)] = <a_i^dag a_j^dag a_l a_k> / <N(N-1)>`` and
    ``rho_single[k,i] = <a_i^dag a_k> / <N>``, with modes labelled by
    ``s.basis``.
    """
    lowered = [_lower(s.amplitudes, 0), _lower(s.amplitudes, 1)]
    norm1 = sum(float(np.vdot(v, v).real) for v in lowered)
    if norm1 < 2.0:
        raise InsufficientPhotonsError(f"state carries {norm1:.4g} mean photons; need at least 2")
    single = np.array([[np.vdot(lowered[i], lowered[k]) for i in range(2)] for k in range(2)])
    twice = {(k, l): _lower(lowered[l], k) for k in range(2) for l in range(2)}
    keys = [(0, 0), (0, 1), (1, 0), (1, 1)]
    pair = np.array([[np.vdot(twice[ij], twice[kl]) for ij in keys] for kl in keys])
    pair /= np.trace(pair).real
    names = (s.basis.label or "a", (s.basis.label or "b") + "_perp")
    labels2 = tuple((names[k], names[l]) for k, l in keys)
    return DensityMatrix(labels2, pair), DensityMatrix(names, single / norm1)


def partial_product(rho_single: DensityMatrix) -> DensityMatrix:
    """``rho_single (x) rho_single`` with labels matching :func:`two_clone_density`."""
    labels = tuple((a, b) for a in rho_single.labels for b in rho_single.labels)
    return DensityMatrix(labels, np.kron(rho_single.matrix, rho_single.matrix))


def clone_correlation_distance(s: AmplifiedState) -> float:
    """Trace distance between the two-clone matrix and the product of single clones."""
    pair, single = two_clone_density(s)
    return trace_distance(pair, partial_product(single))

