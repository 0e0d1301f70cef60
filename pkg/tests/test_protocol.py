import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flashsim.nosignal import flatness_test, homogeneity_test
from flashsim.photostats import ImperfectionModel, delta_distribution, joint_distribution
from flashsim.protocol import (
    CSV_HEADER,
    DetectorModel,
    ExperimentDataset,
    TrialRecord,
    fit_fringe,
    run_conditional,
    run_nonconditional,
    sample_counts,
    thin,
)
from flashsim.qstate import HV, PM, equatorial_basis, linear_basis

IDEAL = ImperfectionModel()
LAB = ImperfectionModel(v_in=0.85, p_inject=0.4)
PERFECT = DetectorModel(eta=1.0, bs_transmission=1.0)
MBAR_ONE = math.asinh(1.0)


def test_detector_model_validates():
    with pytest.raises(ValueError):
        DetectorModel(eta=1.5)
    with pytest.raises(ValueError):
        DetectorModel(gain_noise_sigma=-1)
    assert DetectorModel().arm_efficiency == pytest.approx(0.065)


def test_sample_point_mass():
    d = joint_distribution(0.0, 0.0, n_max=3)
    rng = np.random.default_rng(0)
    assert all(sample_counts(d, rng) == (1, 0) for _ in range(50))


def test_sample_rejects_truncated_distribution():
    d = joint_distribution(0.0, 2.0, n_max=5)
    with pytest.raises(ValueError):
        sample_counts(d, np.random.default_rng(0))


def test_sample_moments():
    d = joint_distribution(0.0, MBAR_ONE, tol=1e-12)
    n = 100_000
    draws = sample_counts(d, np.random.default_rng(1), size=n)
    x = draws[:, 0] - draws[:, 1]
    exact = delta_distribution(0.0, MBAR_ONE, tol=1e-12)
    m1, m2, m4 = (exact.moment(k) for k in (1, 2, 4))
    assert abs(x.mean() - 3.0) < 5 * math.sqrt((m2 - m1**2) / n)
    assert abs((x.astype(float) ** 2).mean() - 25.0) < 5 * math.sqrt((m4 - m2**2) / n)


def test_thin_examples():
    rng = np.random.default_rng(2)
    assert thin(37, 1.0, rng) == 37
    assert thin(37, 0.0, rng) == 0
    n = 100_000
    mean = np.mean([thin(100, 0.13, rng) for _ in range(n)])
    assert abs(mean - 13) < 5 * math.sqrt(100 * 0.13 * 0.87 / n)
    with pytest.raises(ValueError):
        thin(-1, 0.5, rng)


def _phases(k=9):
    return [equatorial_basis(p) for p in np.linspace(0, 2 * math.pi, k)[:-1]]


def test_determinism_and_order_independence():
    args = (0.7, LAB, DetectorModel(), _phases(3), [PM], 50, 123)
    a = run_conditional(*args)
    b = run_conditional(*args)
    assert a.records == b.records
    order = list(np.random.default_rng(0).permutation(100))
    c = run_conditional(*args, order=order)
    assert c.records == a.records
    d = run_conditional(0.7, LAB, DetectorModel(), _phases(3), [PM], 50, 124)
    assert d.records != a.records


def test_bad_order_rejected():
    with pytest.raises(ValueError):
        run_conditional(0.5, IDEAL, PERFECT, PM, PM, 3, 0, order=[0, 1, 1])


def test_csv_round_trip(tmp_path):
    ds = run_nonconditional(0.9, LAB, DetectorModel(), ["pm", "rl"], ["pm", "rl"], 40, 5, trigger_mode="xor")
    text = ds.to_csv()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert "\r" not in text
    back = ExperimentDataset.read_csv(io.StringIO(text))
    assert back.records == ds.records
    path = tmp_path / "d.csv"
    ds.write_csv(path)
    assert path.read_bytes() == text.encode()
    assert ExperimentDataset.read_csv(path).to_csv() == text


def test_csv_round_trip_with_analog_noise():
    det = DetectorModel(gain_noise_sigma=0.2)
    ds = run_conditional(0.9, LAB, det, PM, PM, 60, 9)
    text = ds.to_csv()
    again = ExperimentDataset.read_csv(io.StringIO(text))
    assert again.to_csv() == text
    for r, s in zip(ds.records, again.records):
        assert s.I_a == pytest.approx(r.I_a, rel=1e-8)


@settings(max_examples=30)
@given(
    st.integers(0, 10**6),
    st.sampled_from(["pm", "rl", "phi:0.5"]),
    st.one_of(st.none(), st.integers(0, 1)),
    st.booleans(),
    st.integers(0, 10**5),
    st.integers(0, 10**5),
)
def test_record_csv_row_round_trip(trial, basis, outcome, injected, na, nb):
    n_stat = None if na + nb == 0 else (na - nb) / (na + nb)
    r = TrialRecord(trial, basis, outcome, injected, "pm", na, nb, float(na), float(nb), n_stat)
    row = dict(zip(CSV_HEADER, r.csv_row()))
    back = TrialRecord.from_csv_row(row)
    assert back.csv_row() == r.csv_row()
    assert back.n_a == na and back.alice_outcome == outcome and back.injected == injected


def test_read_csv_rejects_foreign_header():
    with pytest.raises(ValueError):
        ExperimentDataset.read_csv(io.StringIO("a,b\n1,2\n"))


def test_conditional_fringe_shape():
    phases = [0.0, math.pi / 2, math.pi, 3 * math.pi / 2]
    alice = [equatorial_basis(p) for p in phases]
    ds = run_conditional(0.9, IDEAL, PERFECT, alice, PM, 2000, 3, trigger_outcome=1)
    rows = {r["alice_basis"]: r for r in ds.summary()}
    d = [rows[b.label]["mean_delta"] for b in alice]
    se = [rows[b.label]["sem_delta"] for b in alice]
    assert d[0] > 5 * se[0] and d[2] < -5 * se[2]
    assert abs(d[1]) < 5 * se[1] and abs(d[3]) < 5 * se[3]


def test_conditional_abs_n_is_flat():
    ds = run_conditional(0.9, LAB, DetectorModel(), _phases(), PM, 2500, 17, trigger_outcome=1)
    assert flatness_test(ds, "abs_N") > 0.01


def test_conditional_second_moment_law():
    g = 0.9
    m = math.sinh(g) ** 2
    ds = run_conditional(g, IDEAL, PERFECT, _phases(5), PM, 5000, 21)
    x = ds.column("x")
    exact = delta_distribution(0.0, g, tol=1e-12)
    m2, m4 = exact.moment(2), exact.moment(4)
    assert abs(np.mean(x**2) - (12 * m * m + 12 * m + 1)) < 5 * math.sqrt((m4 - m2**2) / x.size)


def test_detected_mean_per_arm():
    g = 0.9
    det = DetectorModel(eta=0.13, bs_transmission=0.5)
    m = math.sinh(g) ** 2
    ds = run_conditional(g, IDEAL, det, PM, PM, 100_000, 4, trigger_outcome=1)
    # Bob receives |+>: exact means are 3m+1 and m
    for col, exact in (("n_a", 3 * m + 1), ("n_b", m)):
        v = ds.column(col).astype(float)
        assert abs(v.mean() - det.arm_efficiency * exact) < 5 * v.std(ddof=1) / math.sqrt(v.size)


def test_nonconditional_flat_for_equatorial_and_linear_bases():
    eq = run_nonconditional(4.45, LAB, DetectorModel(), _phases(5), PM, 2500, 8, trigger_mode="xor")
    assert flatness_test(eq, "abs_N") > 0.01
    lin = [linear_basis(t) for t in np.linspace(0, math.pi, 5)[:-1]]
    sev = run_nonconditional(4.45, LAB, DetectorModel(), lin, PM, 2500, 8, trigger_mode="severed")
    assert flatness_test(sev, "abs_N") > 0.01


def test_xor_and_severed_agree():
    args = (0.9, LAB, DetectorModel(), ["pm", "rl"], ["pm"], 20_000, 6)
    xor = run_nonconditional(*args, trigger_mode="xor")
    sev = run_nonconditional(*args, trigger_mode="severed")
    assert homogeneity_test(xor, sev) > 0.01


def test_joint_counts_homogeneous_across_alice_bases():
    ds = run_nonconditional(0.9, LAB, DetectorModel(), ["pm", "theta:0.4"], ["pm"], 100_000, 12)
    p = homogeneity_test(ds.select(alice_basis="pm"), ds.select(alice_basis="theta:0.4"))
    assert p > 0.01


def test_zero_signal_shots_excluded_and_counted():
    ds = run_conditional(0.0, IDEAL, DetectorModel(eta=0.2), PM, PM, 500, 0)
    zero = sum(r.I_a + r.I_b == 0 for r in ds.records)
    assert zero > 0
    assert all(r.n_stat is None for r in ds.records if r.I_a + r.I_b == 0)
    assert ds.summary()[0]["excluded"] == zero


def test_argument_validation():
    with pytest.raises(ValueError):
        run_conditional(0.5, IDEAL, PERFECT, PM, HV, 3, 0)
    with pytest.raises(ValueError):
        run_nonconditional(0.5, IDEAL, PERFECT, ["pm", "rl"], PM, 3, 0, trigger_mode="xor", background_fraction=0.1)
    with pytest.raises(ValueError):
        run_nonconditional(0.5, IDEAL, PERFECT, ["pm"], PM, 3, 0)
    with pytest.raises(ValueError):
        run_nonconditional(0.5, IDEAL, PERFECT, ["pm", "rl"], PM, 3, 0, trigger_mode="both")


def test_severed_background_changes_injection_rate():
    ds = run_nonconditional(0.5, IDEAL, DetectorModel(), ["pm", "rl"], PM, 2000, 3, trigger_mode="severed", background_fraction=0.5)
    frac = np.mean([r.injected for r in ds.records])
    assert abs(frac - 0.5) < 5 * math.sqrt(0.25 / 4000)


def test_fit_fringe_recovers_exact_sinusoid():
    phi = np.linspace(0, 2 * math.pi, 13)
    y = 10 + 3 * np.cos(phi - 0.4)
    fit = fit_fringe(phi, y, np.full(phi.size, 0.1))
    assert fit.offset == pytest.approx(10)
    assert fit.amplitude == pytest.approx(3)
    assert fit.phase == pytest.approx(0.4)
    assert fit.visibility == pytest.approx(0.3)
    assert fit.visibility_se > 0
