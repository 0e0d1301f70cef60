import math

import numpy as np
import pytest

from flashsim.nosignal import (
    DensityMatrix,
    InsufficientPhotonsError,
    InvarianceReport,
    clone_correlation_distance,
    distribution_sum_invariance,
    flatness_test,
    homogeneity_test,
    mi_bin_sensitivity,
    mutual_information,
    partial_product,
    rho_bob,
    trace_distance,
    two_clone_density,
)
from flashsim.opa import amplify_analytic, amplify_numeric
from flashsim.protocol import ExperimentDataset, TrialRecord
from flashsim.qstate import HV, PM, RL, MeasurementBasis, Qubit, linear_basis, time_reversal

# self-derived regression value: D(rho_pair, rho_single x rho_single), g=0.5, |+> injected
CLONE_DISTANCE_G05 = 0.31426783330213975


def random_basis(rng) -> MeasurementBasis:
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    q = Qubit.normalized(*v)
    return MeasurementBasis(q, time_reversal(q), "random")


def test_rho_bob_unamplified_is_half_identity():
    for basis in (PM, RL, HV, linear_basis(0.3)):
        r = rho_bob(basis, 0.0)
        dense = r.embed([(1, 0), (0, 1)])
        assert np.allclose(dense, 0.5 * np.eye(2), atol=1e-15)


def test_rho_bob_pm_equals_rl():
    assert trace_distance(rho_bob(PM, 0.5), rho_bob(RL, 0.5)) < 1e-10


def test_rho_bob_vs_pure_component_is_half():
    mixed = rho_bob(PM, 0.5)
    s = amplify_numeric(PM.plus, 0.5, n_max=None, tol=1e-10)
    a, b = np.nonzero(s.amplitudes)
    pure = DensityMatrix(tuple(zip(a.tolist(), b.tolist())), vectors=[s.amplitudes[a, b]], weights=[1.0])
    assert trace_distance(mixed, pure) == pytest.approx(0.5, abs=1e-9)


@pytest.mark.parametrize("g", [0.2, 0.5, 1.0])
def test_rho_bob_random_basis_pairs(g):
    rng = np.random.default_rng(int(g * 10))
    for _ in range(8):
        assert trace_distance(rho_bob(random_basis(rng), g), rho_bob(random_basis(rng), g)) < 1e-10


def test_rho_bob_properties():
    r = rho_bob(linear_basis(0.2), 0.6, tol=1e-10)
    assert r.trace == pytest.approx(1.0, abs=1e-10)
    assert np.min(r.eigenvalues()) > -1e-12
    dense = DensityMatrix(r.labels, r.matrix)
    assert dense.hermiticity_error() < 1e-15
    other = rho_bob(PM, 0.6, tol=1e-10)
    assert trace_distance(dense, DensityMatrix(other.labels, other.matrix)) == pytest.approx(
        trace_distance(r, other), abs=1e-12
    )


def test_rho_bob_analytic_backend():
    a = rho_bob(PM, 1.0, backend="analytic")
    b = rho_bob(RL, 1.0, backend="analytic")
    assert trace_distance(a, b) < 1e-10
    with pytest.raises(ValueError):
        rho_bob(HV, 1.0, backend="analytic")
    with pytest.raises(ValueError):
        rho_bob(PM, 1.0, backend="other")


def test_density_matrix_requires_one_form():
    with pytest.raises(ValueError):
        DensityMatrix([0], None)
    with pytest.raises(ValueError):
        DensityMatrix([0], vectors=[[1.0]], weights=[0.5, 0.5])


def test_sum_invariance_examples():
    assert distribution_sum_invariance(0.0, 0.9).value == 0.0
    assert distribution_sum_invariance(math.pi / 2, math.asinh(1.0)).value < 1e-12
    rng = np.random.default_rng(4)
    for phi in rng.uniform(0, 2 * math.pi, 16):
        r = distribution_sum_invariance(phi, 4.45)
        assert r.passed and r.value < 1e-12


def test_report_serialization_order():
    r = InvarianceReport("m", 0.5, 0.1, {"g": 1})
    d = r.to_dict()
    assert list(d) == ["metric", "value", "threshold", "pass", "config"]
    assert d["pass"] is False


def _synthetic(values, labels) -> ExperimentDataset:
    recs = [
        TrialRecord(i, lab, None, True, "pm", 0, 0, 0.0, 0.0, float(v))
        for i, (v, lab) in enumerate(zip(values, labels))
    ]
    return ExperimentDataset({}, recs)


def test_mi_identical_split_is_zero():
    rng = np.random.default_rng(0)
    v = rng.uniform(-1, 1, 4000)
    labels = rng.permutation(["a"] * 2000 + ["b"] * 2000)
    mi = mutual_information(_synthetic(v, labels), statistic="N")
    assert abs(mi.bits) < 3 * mi.se + 1e-3
    assert mi.shots == 4000 and mi.excluded == 0


def test_mi_separable_binary_is_one_bit():
    labels = ["a"] * 1000 + ["b"] * 1000
    v = [0.9] * 1000 + [-0.9] * 1000
    mi = mutual_information(_synthetic(v, labels), statistic="N")
    assert mi.bits == pytest.approx(1.0, abs=1e-3)


def test_mi_calibration_on_label_independent_data():
    rng = np.random.default_rng(99)
    within = 0
    for rep in range(100):
        v = np.abs(rng.uniform(-1, 1, 2000))
        labels = rng.choice(["a", "b"], 2000)
        mi = mutual_information(_synthetic(v, labels), statistic="abs_N", seed=rep)
        within += mi.bits < 3 * mi.se
    assert within >= 95


def test_mi_excludes_undefined_and_reports_bins():
    ds = _synthetic([0.1, 0.2, 0.3, 0.4], ["a", "b", "a", "b"])
    ds.records.append(TrialRecord(4, "a", None, False, "pm", 0, 0, 0.0, 0.0, None))
    mi = mutual_information(ds, statistic="abs_N", n_boot=10)
    assert mi.excluded == 1 and mi.shots == 4
    sens = mi_bin_sensitivity(ds, bins=(16, 64), statistic="abs_N", n_boot=5)
    assert sorted(sens) == [16, 64]
    with pytest.raises(ValueError):
        mutual_information(_synthetic([0.1, 0.2], ["a", "a"]), statistic="N")


def test_flatness_and_homogeneity_detect_differences():
    rng = np.random.default_rng(1)
    v = np.concatenate([rng.normal(0.0, 0.1, 500), rng.normal(0.2, 0.1, 500)])
    labels = ["a"] * 500 + ["b"] * 500
    assert flatness_test(_synthetic(v, labels), "N") < 1e-6

    def counts(mean, n):
        recs = [TrialRecord(i, "a", None, True, "pm", int(k), 3, 0.0, 0.0, None) for i, k in enumerate(rng.poisson(mean, n))]
        return ExperimentDataset({}, recs)

    assert homogeneity_test(counts(5, 2000), counts(6, 2000)) < 1e-6
    assert homogeneity_test(counts(5, 2000), counts(5, 2000)) > 1e-3


def test_clone_single_fidelity():
    g = 0.5
    m = math.sinh(g) ** 2
    s = amplify_analytic(PM.plus, g, tol=1e-13)
    pair, single = two_clone_density(s)
    assert single.matrix[0, 0].real == pytest.approx((3 * m + 1) / (4 * m + 1), abs=1e-9)
    assert single.trace == pytest.approx(1.0, abs=1e-12)
    assert pair.trace == pytest.approx(1.0, abs=1e-12)


def test_clone_correlation_regression():
    s = amplify_analytic(PM.plus, 0.5, tol=1e-13)
    d = clone_correlation_distance(s)
    assert d > 0.01
    assert d == pytest.approx(CLONE_DISTANCE_G05, abs=1e-9)


@pytest.mark.parametrize("phi", [0.0, 1.3])
def test_clone_pair_exchange_symmetry(phi):
    from flashsim.qstate import equatorial

    pair, _ = two_clone_density(amplify_analytic(equatorial(phi), 0.7, tol=1e-12))
    swap = np.zeros((4, 4))
    for k in range(2):
        for l in range(2):
            swap[2 * l + k, 2 * k + l] = 1
    assert np.max(np.abs(swap @ pair.matrix @ swap.T - pair.matrix)) < 1e-12


def test_partial_product_labels_match_pair():
    pair, single = two_clone_density(amplify_analytic(PM.plus, 0.5))
    assert partial_product(single).labels == pair.labels


def test_clone_density_rejects_single_photon():
    with pytest.raises(InsufficientPhotonsError):
        two_clone_density(amplify_analytic(PM.plus, 0.0))
