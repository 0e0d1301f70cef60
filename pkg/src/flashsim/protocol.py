"""Monte Carlo FLASH runs: source, amplifier, beam splitter and lossy detectors.

Each shot draws from its own generator seeded by ``(seed, stream, trial)``,
so a dataset does not depend on the order in which shots are simulated.

Per shot, Bob analyses in a single basis (the beam splitter is a per-photon
routing loss of ``bs_transmission``), and the counts are sampled exactly
from the mixture law in :mod:`flashsim.photostats`:

1. Alice's singlet measurement fixes Bob's qubit;
2. with probability ``p_inject`` the amplifier is seeded, the input being
   depolarized to visibility ``v_in``; otherwise both modes carry squeezed
   vacuum;
3. each mode count is thinned binomially with ``eta * bs_transmission``;
4. signals ``I = count * (1 + sigma * z)`` are clamped at 0 and
   ``N = (I_a - I_b)/(I_a + I_b)``, undefined when both signals vanish.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .opa import GainParameter, _as_gain
from .photostats import (
    ImperfectionModel,
    PhotonCountDistribution,
    marginal_cutoff,
    mixture_weights,
    mode_marginals,
)
from .qstate import MeasurementBasis, Qubit, basis_from_label, singlet_partner, singlet_project

__all__ = [
    "DetectorModel",
    "TrialRecord",
    "ExperimentDataset",
    "FringeFit",
    "sample_counts",
    "thin",
    "run_conditional",
    "run_nonconditional",
    "fit_fringe",
    "CSV_HEADER",
]

CSV_HEADER = ["trial", "alice_basis", "alice_outcome", "injected", "bob_basis", "n_a", "n_b", "I_a", "I_b", "N"]
SAMPLING_TOL = 1e-10
_STREAMS = {"conditional": 0, "xor": 1, "severed": 2}


@dataclass(frozen=True)
class DetectorModel:
    eta: float = 0.13
    bs_transmission: float = 0.5
    gain_noise_sigma: float = 0.0

    def __post_init__(self):
        for name in ("eta", "bs_transmission"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)
        if not self.gain_noise_sigma >= 0.0:
            raise ValueError("gain_noise_sigma must be >= 0")

    @property
    def arm_efficiency(self) -> float:
        return self.eta * self.bs_transmission


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    alice_basis: str
    alice_outcome: int | None
    injected: bool
    bob_basis: str
    n_a: int
    n_b: int
    I_a: float
    I_b: float
    n_stat: float | None

    @property
    def delta(self) -> float:
        return self.I_a - self.I_b

    def csv_row(self) -> list[str]:
        return [
            str(self.trial),
            self.alice_basis,
            "" if self.alice_outcome is None else str(self.alice_outcome),
            "1" if self.injected else "0",
            self.bob_basis,
            str(self.n_a),
            str(self.n_b),
            _fmt(self.I_a),
            _fmt(self.I_b),
            "" if self.n_stat is None else _fmt(self.n_stat),
        ]

    @classmethod
    def from_csv_row(cls, row: dict) -> TrialRecord:
        return cls(
            trial=int(row["trial"]),
            alice_basis=row["alice_basis"],
            alice_outcome=None if row["alice_outcome"] == "" else int(row["alice_outcome"]),
            injected=row["injected"] == "1",
            bob_basis=row["bob_basis"],
            n_a=int(row["n_a"]),
            n_b=int(row["n_b"]),
            I_a=float(row["I_a"]),
            I_b=float(row["I_b"]),
            n_stat=None if row["N"] == "" else float(row["N"]),
        )


def _fmt(x: float) -> str:
    return format(x, ".9g")


@dataclass
class ExperimentDataset:
    config: dict
    records: list[TrialRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def select(self, alice_basis: str | None = None, bob_basis: str | None = None) -> ExperimentDataset:
        recs = [
            r
            for r in self.records
            if (alice_basis is None or r.alice_basis == alice_basis)
            and (bob_basis is None or r.bob_basis == bob_basis)
        ]
        return ExperimentDataset(self.config, recs)

    def labels(self, key: str) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(getattr(r, key), None)
        return list(seen)

    def column(self, name: str) -> np.ndarray:
        """Per-shot values; ``N`` and ``abs_N`` are NaN where undefined."""
        if name in ("N", "n_stat"):
            return np.array([np.nan if r.n_stat is None else r.n_stat for r in self.records])
        if name == "abs_N":
            return np.abs(self.column("N"))
        if name == "delta":
            return np.array([r.delta for r in self.records])
        if name == "abs_delta":
            return np.abs(self.column("delta"))
        if name == "x":
            return np.array([r.n_a - r.n_b for r in self.records], dtype=float)
        return np.array([getattr(r, name) for r in self.records])

    def summary(self) -> list[dict]:
        """Per ``(alice_basis, bob_basis)`` means with standard errors and exclusion counts."""
        out = []
        for a in self.labels("alice_basis"):
            for b in self.labels("bob_basis"):
                sub = self.select(a, b)
                if not len(sub):
                    continue
                delta = sub.column("delta")
                n = sub.column("N")
                defined = n[~np.isnan(n)]
                out.append(
                    {
                        "alice_basis": a,
                        "bob_basis": b,
                        "shots": len(sub),
                        "injected": int(sum(r.injected for r in sub.records)),
                        "mean_I_a": float(sub.column("I_a").mean()),
                        "mean_I_b": float(sub.column("I_b").mean()),
                        "mean_delta": float(delta.mean()),
                        "sem_delta": _sem(delta),
                        "mean_N": float(defined.mean()) if defined.size else None,
                        "mean_abs_N": float(np.abs(defined).mean()) if defined.size else None,
                        "sem_abs_N": _sem(np.abs(defined)),
                        "excluded": int(n.size - defined.size),
                    }
                )
        return out

    def write_csv(self, target) -> None:
        """Write to a path or text stream; LF line endings, 9 significant digits."""
        if isinstance(target, (str, Path)):
            with open(target, "w", encoding="utf-8", newline="") as fh:
                self.write_csv(fh)
            return
        writer = csv.writer(target, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.records:
            writer.writerow(r.csv_row())

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    @classmethod
    def read_csv(cls, source, config: dict | None = None) -> ExperimentDataset:
        if isinstance(source, (str, Path)):
            with open(source, encoding="utf-8", newline="") as fh:
                return cls.read_csv(fh, config)
        reader = csv.DictReader(source)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return cls(dict(config or {}), [TrialRecord.from_csv_row(row) for row in reader])


def _sem(values: np.ndarray) -> float | None:
    if values.size < 2:
        return None
    return float(values.std(ddof=1) / math.sqrt(values.size))


def sample_counts(dist: PhotonCountDistribution, rng: np.random.Generator, size: int | None = None):
    """Inverse-CDF draws from a (joint) count distribution."""
    mass = dist.total_mass
    if mass < 1.0 - 1e-6:
        raise ValueError(f"distribution carries only {mass:.9g} of the probability; raise the cutoff")
    cdf = np.cumsum(dist.probs)
    u = rng.random(size) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    if size is None:
        value = dist.support[idx]
        return tuple(int(v) for v in value) if dist.is_joint else int(value)
    return dist.support[idx]


def thin(n: int, prob: float, rng: np.random.Generator) -> int:
    """Keep each of ``n`` photons independently with probability ``prob``."""
    if n < 0:
        raise ValueError("count must be >= 0")
    return int(rng.binomial(n, prob))


class _ShotModel:
    """Per-shot sampler sharing the marginal CDFs of one gain."""

    def __init__(self, gain: GainParameter, imp: ImperfectionModel, det: DetectorModel):
        self.gain = gain
        self.imp = imp
        self.det = det
        self._seeded = ImperfectionModel(v_in=imp.v_in, p_inject=1.0)
        n = marginal_cutoff(gain, SAMPLING_TOL)
        vac, one = mode_marginals(gain, n)
        self._cdf_vac = np.cumsum(vac)
        self._cdf_one = np.cumsum(one)

    @staticmethod
    def _draw(cdf: np.ndarray, rng: np.random.Generator) -> int:
        u = rng.random() * cdf[-1]
        return int(min(np.searchsorted(cdf, u, side="right"), cdf.size - 1))

    def shot(self, rng: np.random.Generator, bob_qubit: Qubit | None, bob_basis: MeasurementBasis):
        """Counts and signals for one trigger; ``bob_qubit=None`` is an unseeded shot."""
        if bob_qubit is None:
            injected = False
        else:
            injected = bool(rng.random() < self.imp.p_inject)
        if injected:
            w_a, w_b, _ = mixture_weights(abs(bob_basis.plus.inner(bob_qubit)) ** 2, self._seeded)
            seeded_first = bool(rng.random() < w_a)
            cdf_a = self._cdf_one if seeded_first else self._cdf_vac
            cdf_b = self._cdf_vac if seeded_first else self._cdf_one
        else:
            cdf_a = cdf_b = self._cdf_vac
        n_a = self._draw(cdf_a, rng)
        n_b = self._draw(cdf_b, rng)
        eff = self.det.arm_efficiency
        d_a = thin(n_a, eff, rng)
        d_b = thin(n_b, eff, rng)
        sigma = self.det.gain_noise_sigma
        if sigma > 0:
            I_a = d_a * max(0.0, 1.0 + sigma * rng.standard_normal())
            I_b = d_b * max(0.0, 1.0 + sigma * rng.standard_normal())
        else:
            I_a, I_b = float(d_a), float(d_b)
        total = I_a + I_b
        n_stat = (I_a - I_b) / total if total > 0 else None
        return injected, d_a, d_b, I_a, I_b, n_stat


def _trial_rng(seed: int, stream: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream, trial])


def _as_basis(b) -> MeasurementBasis:
    return basis_from_label(b) if isinstance(b, str) else b


def _as_list(bases) -> list[MeasurementBasis]:
    if isinstance(bases, (MeasurementBasis, str)):
        bases = [bases]
    out = [_as_basis(b) for b in bases]
    if not out:
        raise ValueError("at least one basis is required")
    return out


def _check_bob_bases(bases: Sequence[MeasurementBasis]) -> None:
    # the per-mode squeezer factorization only holds for equatorial analysis modes
    for b in bases:
        if b.phase is None:
            raise ValueError(f"Bob's analysis basis {b.label!r} is not equatorial")


def _layout(n_bob: int, trials: int, trial: int) -> tuple[int, int]:
    block = trial // trials
    return block // n_bob, block % n_bob


def _config(gain, imp, det, trials, seed, **extra) -> dict:
    cfg = {
        "gain": gain.g,
        "v_in": imp.v_in,
        "p_inject": imp.p_inject,
        "eta": det.eta,
        "bs_transmission": det.bs_transmission,
        "gain_noise_sigma": det.gain_noise_sigma,
        "trials": trials,
        "seed": seed,
    }
    cfg.update(extra)
    return cfg


def run_conditional(
    gain,
    imp: ImperfectionModel,
    det: DetectorModel,
    alice_basis,
    bob_basis,
    trials: int,
    seed: int,
    trigger_outcome: int | None = None,
    order: Sequence[int] | None = None,
) -> ExperimentDataset:
    """Bob's statistics gated on Alice's individual outcome.

    ``alice_basis`` and ``bob_basis`` may be single bases or lists; ``trials``
    shots are run for every (Alice, Bob) pair. With ``trigger_outcome`` set,
    only that detector of Alice's triggers, so Bob always receives the state
    orthogonal to ``alice_basis[trigger_outcome]`` (outcome 1 sends Bob
    ``alice_basis.plus``). ``order`` permutes the simulation order; the
    records come back sorted by trial index either way.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if trigger_outcome not in (None, 0, 1):
        raise ValueError("trigger_outcome must be 0, 1 or None")
    gain = _as_gain(gain)
    alice = _as_list(alice_basis)
    bob = _as_list(bob_basis)
    _check_bob_bases(bob)
    model = _ShotModel(gain, imp, det)
    stream = _STREAMS["conditional"]

    def one(i: int) -> TrialRecord:
        ai, bi = _layout(len(bob), trials, i)
        rng = _trial_rng(seed, stream, i)
        if trigger_outcome is None:
            outcome, bob_q = singlet_project(alice[ai], rng)
        else:
            outcome, bob_q = trigger_outcome, singlet_partner(alice[ai][trigger_outcome])
        injected, d_a, d_b, I_a, I_b, n_stat = model.shot(rng, bob_q, bob[bi])
        return TrialRecord(i, alice[ai].label, outcome, injected, bob[bi].label, d_a, d_b, I_a, I_b, n_stat)

    records = _run(one, trials * len(alice) * len(bob), order)
    cfg = _config(
        gain, imp, det, trials, seed,
        mode="conditional",
        alice_bases=[b.label for b in alice],
        bob_bases=[b.label for b in bob],
        trigger_outcome=trigger_outcome,
    )
    return ExperimentDataset(cfg, records)


def run_nonconditional(
    gain,
    imp: ImperfectionModel,
    det: DetectorModel,
    alice_bases,
    bob_bases,
    trials: int,
    seed: int,
    trigger_mode: str = "xor",
    background_fraction: float = 0.0,
    order: Sequence[int] | None = None,
) -> ExperimentDataset:
    """Bob's statistics with Alice's outcome unavailable.

    ``xor``: every shot is triggered by either of Alice's detectors and the
    outcome is discarded. ``severed``: no trigger reaches Bob, so on top of
    that a fraction ``background_fraction`` of Bob's registrations are
    unseeded amplifier noise. Records keep Alice's basis label for the
    invariance analysis only.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if trigger_mode not in ("xor", "severed"):
        raise ValueError(f"trigger_mode must be 'xor' or 'severed', got {trigger_mode!r}")
    if not 0.0 <= background_fraction <= 1.0:
        raise ValueError("background_fraction must lie in [0, 1]")
    if trigger_mode == "xor" and background_fraction:
        raise ValueError("the xor trigger admits no untriggered background")
    gain = _as_gain(gain)
    alice = _as_list(alice_bases)
    if len(alice) < 2:
        raise ValueError("a non-conditional comparison needs at least two Alice bases")
    bob = _as_list(bob_bases)
    _check_bob_bases(bob)
    model = _ShotModel(gain, imp, det)
    stream = _STREAMS[trigger_mode]

    def one(i: int) -> TrialRecord:
        ai, bi = _layout(len(bob), trials, i)
        rng = _trial_rng(seed, stream, i)
        _, bob_q = singlet_project(alice[ai], rng)
        if background_fraction and rng.random() < background_fraction:
            bob_q = None
        injected, d_a, d_b, I_a, I_b, n_stat = model.shot(rng, bob_q, bob[bi])
        return TrialRecord(i, alice[ai].label, None, injected, bob[bi].label, d_a, d_b, I_a, I_b, n_stat)

    records = _run(one, trials * len(alice) * len(bob), order)
    cfg = _config(
        gain, imp, det, trials, seed,
        mode=trigger_mode,
        alice_bases=[b.label for b in alice],
        bob_bases=[b.label for b in bob],
        background_fraction=background_fraction,
    )
    return ExperimentDataset(cfg, records)


def _run(one, total: int, order: Sequence[int] | None) -> list[TrialRecord]:
    indices = range(total) if order is None else order
    records = {i: one(i) for i in indices}
    if len(records) != total:
        raise ValueError("order must be a permutation of the trial indices")
    return [records[i] for i in range(total)]


@dataclass(frozen=True)
class FringeFit:
    offset: float
    amplitude: float
    phase: float
    amplitude_se: float
    visibility: float
    visibility_se: float


def fit_fringe(phases, means, sems) -> FringeFit:
    """Weighted least squares of ``a + b cos(phi) + c sin(phi)``.

    The visibility is ``sqrt(b^2 + c^2)/a`` with a delta-method error.
    """
    phases = np.asarray(phases, dtype=float)
    y = np.asarray(means, dtype=float)
    s = np.asarray(sems, dtype=float)
    X = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    w = 1.0 / s**2
    cov = np.linalg.inv(X.T @ (X * w[:, None]))
    a, b, c = cov @ (X.T @ (w * y))
    amp = math.hypot(b, c)
    # gradients of amp and amp/a with respect to (a, b, c)
    g_amp = np.array([0.0, b / amp, c / amp]) if amp > 0 else np.array([0.0, 1.0, 0.0])
    g_vis = np.array([-amp / a**2, g_amp[1] / a, g_amp[2] / a])
    return FringeFit(
        offset=float(a),
        amplitude=float(amp),
        phase=float(math.atan2(c, b)),
        amplitude_se=float(math.sqrt(g_amp @ cov @ g_amp)),
        visibility=float(amp / a),
        visibility_se=float(math.sqrt(g_vis @ cov @ g_vis)),
    )
