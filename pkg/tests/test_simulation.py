import logging

import numpy as np
import pytest

from estimators.cic import ChangesInChanges
from estimators.did import MeanShiftDiD
from simulation.dgp import SimulationDesign, draw_dgp
from simulation.monte_carlo import (
    RANDOM_COLUMNS,
    REPORT_COLUMNS,
    SELECTIVE_COLUMNS,
    calculate_bias_rmse,
    report_columns,
    run_monte_carlo,
)
from simulation.oracle import MIN_ORACLE_DRAWS, true_effects_oracle
from utils.errors import InvalidConfig


@pytest.fixture(scope="module")
def identity_truth():
    return true_effects_oracle(SimulationDesign(link="identity"), MIN_ORACLE_DRAWS)


@pytest.mark.parametrize(
    "kwargs",
    [{"link": "cubic"}, {"assignment": "lottery"}, {"n": 50}, {"reps": 0}, {"seed": -3}, {"coefficients": (1.0, 1.0)}],
)
def test_design_validation(kwargs):
    with pytest.raises(InvalidConfig):
        SimulationDesign(**kwargs)


def test_link_aliases():
    assert SimulationDesign(link="exp").link == "exponential"
    assert SimulationDesign(link="linear").link == "identity"


def test_draws_are_reproducible():
    design = SimulationDesign(n=500, seed=3)
    a, b, c = draw_dgp(design, 0), draw_dgp(design, 0), draw_dgp(design, 1)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.d, b.d)
    assert not np.array_equal(a.y, c.y)
    assert not a.is_panel


def test_random_design_marginals():
    data = draw_dgp(SimulationDesign(n=20000, seed=4), 0)
    assert data.d.mean() == pytest.approx(0.5, abs=0.02)
    assert data.t.mean() == pytest.approx(0.5, abs=0.02)
    before = data.y[data.t == 0]
    assert before.min() >= -1.0 and before.max() <= 1.0


def test_exponential_period_zero_support():
    data = draw_dgp(SimulationDesign(link="exponential", n=2000, seed=4), 0)
    before = data.y[data.t == 0]
    assert before.min() >= np.exp(-1.0) and before.max() <= np.exp(1.0)


def test_selective_assignment_ties_treatment_to_outcome_noise():
    data = draw_dgp(SimulationDesign(assignment="selective", n=20000, seed=6), 0)
    before = data.t == 0
    # period-0 outcomes equal U, which drives selective treatment
    assert data.y[before & (data.d == 1)].mean() > data.y[before & (data.d == 0)].mean() + 0.2


def test_identity_oracle_is_exact(identity_truth):
    expected = {
        "theta_n": 1.0, "theta_a": 2.0, "Delta_c": 3.0, "theta_c_1": 2.0,
        "theta_c_0": 1.0, "delta_c_1": 2.0, "delta_c_0": 1.0,
    }
    for tag, value in expected.items():
        assert identity_truth[tag] == value
    assert sum(identity_truth.shares.values()) == pytest.approx(1.0)


def test_oracle_needs_enough_draws():
    with pytest.raises(InvalidConfig):
        true_effects_oracle(SimulationDesign(), 1000)


def test_exponential_oracle_matches_reference_values():
    truth = true_effects_oracle(SimulationDesign(link="exponential"), MIN_ORACLE_DRAWS)
    reference = {
        "theta_n": 3.49, "theta_a": 68.09, "Delta_c": 52.42, "theta_c_1": 47.70,
        "theta_c_0": 4.72, "delta_c_1": 47.70, "delta_c_0": 4.72,
    }
    for tag, value in reference.items():
        assert truth[tag] == pytest.approx(value, rel=0.01), tag
    assert truth["Delta_c"] == pytest.approx(truth["theta_c_1"] + truth["delta_c_0"], rel=1e-12)


def test_selective_oracle_cell_effects():
    truth = true_effects_oracle(SimulationDesign(link="exponential", assignment="selective"), MIN_ORACLE_DRAWS)
    assert truth["theta_10_1"] == pytest.approx(4.41, rel=0.02)
    assert truth["theta_01_0"] == pytest.approx(54.19, rel=0.02)


def test_bias_rmse_identity():
    estimates = np.array([0.8, 1.1, 1.4, 0.9])
    mean, bias, sd, rmse = calculate_bias_rmse(estimates, 1.0)
    assert mean == pytest.approx(1.05)
    assert bias == pytest.approx(0.05)
    assert rmse ** 2 == pytest.approx(bias ** 2 + sd ** 2)
    assert rmse == pytest.approx(np.sqrt(np.mean((estimates - 1.0) ** 2)))


def test_report_columns_follow_assignment():
    assert report_columns(SimulationDesign()) == RANDOM_COLUMNS
    assert report_columns(SimulationDesign(assignment="selective")) == SELECTIVE_COLUMNS


def test_small_monte_carlo_run(identity_truth):
    design = SimulationDesign(n=1000, reps=12, seed=8)
    report = run_monte_carlo(design, truth=identity_truth)
    frame = report.to_frame()
    assert list(frame.columns) == REPORT_COLUMNS
    assert len(frame) == 2 * len(RANDOM_COLUMNS)
    row = report.row("cic", "Delta_c")
    assert row.true == 3.0
    assert row.reps == 12
    assert row.relr == pytest.approx(row.rmse / 3.0)
    assert row.rmse ** 2 == pytest.approx(row.bias ** 2 + row.sd ** 2)
    with pytest.raises(KeyError):
        report.row("cic", "theta_d")


def test_monte_carlo_does_not_depend_on_workers(identity_truth):
    design = SimulationDesign(n=400, reps=6, seed=2)
    serial = run_monte_carlo(design, truth=identity_truth, chunk_size=2).to_frame()
    parallel = run_monte_carlo(design, truth=identity_truth, n_jobs=2, chunk_size=4).to_frame()
    assert serial.equals(parallel)


def test_single_repetition_warns(identity_truth, caplog):
    design = SimulationDesign(n=400, reps=1, seed=2)
    with caplog.at_level(logging.WARNING):
        report = run_monte_carlo(design, suite={"cic": ChangesInChanges}, truth=identity_truth)
    assert "single repetition" in caplog.text
    assert all(r.sd == 0.0 for r in report.rows if r.failed == 0)


# Monte Carlo reference values at n=4000, keyed like RANDOM_COLUMNS
LINEAR_SD = {
    "theta_n": 0.06, "theta_a": 0.04, "Delta_c": 0.12, "theta_c_1": 0.05,
    "theta_c_0": 0.07, "delta_c_1": 0.14, "delta_c_0": 0.14,
}
EXPONENTIAL_RELR = {
    "theta_n": 0.07, "theta_a": 0.04, "Delta_c": 0.08, "theta_c_1": 0.07,
    "theta_c_0": 0.14, "delta_c_1": 0.09, "delta_c_0": 0.43,
}


@pytest.mark.slow
def test_identity_design_is_unbiased(identity_truth):
    design = SimulationDesign(n=4000, reps=1000, seed=1)
    report = run_monte_carlo(design, suite={"cic": ChangesInChanges}, truth=identity_truth, n_jobs=-1)
    for tag in RANDOM_COLUMNS:
        row = report.row("cic", tag)
        assert row.failed == 0
        assert abs(row.bias) <= 0.02, tag
        assert row.sd == pytest.approx(LINEAR_SD[tag], rel=0.3), tag


@pytest.mark.slow
def test_exponential_oracle_at_full_precision():
    truth = true_effects_oracle(SimulationDesign(link="exponential"), 10_000_000)
    reference = {"theta_n": 3.49, "theta_a": 68.09, "Delta_c": 52.4, "theta_c_1": 47.7, "theta_c_0": 4.72}
    for tag, value in reference.items():
        assert truth[tag] == pytest.approx(value, rel=0.005), tag


@pytest.mark.slow
def test_exponential_design_relative_rmse():
    design = SimulationDesign(link="exponential", n=4000, reps=1000, seed=1)
    report = run_monte_carlo(design, n_jobs=-1)
    for tag, relr in EXPONENTIAL_RELR.items():
        assert report.row("cic", tag).relr == pytest.approx(relr, rel=0.5), tag
    for tag in ("theta_n", "theta_a"):
        assert abs(report.row("cic", tag).bias) < abs(report.row("did", tag).bias), tag


@pytest.mark.slow
def test_mean_shift_bias_does_not_vanish_with_sample_size():
    truth = true_effects_oracle(SimulationDesign(link="exponential"), 10_000_000)
    bias = {}
    for n in (1000, 4000):
        design = SimulationDesign(link="exponential", n=n, reps=1000, seed=2)
        report = run_monte_carlo(design, suite={"did": MeanShiftDiD}, truth=truth, n_jobs=-1)
        bias[n] = report.row("did", "Delta_c").bias
        assert 10.0 <= bias[n] <= 20.0, n
    assert bias[4000] >= 0.8 * bias[1000]


@pytest.mark.slow
def test_selective_assignment_biases_complier_effects_only():
    truth = true_effects_oracle(SimulationDesign(link="exponential", assignment="selective"), 10_000_000)
    bias = {}
    for n in (1000, 4000):
        design = SimulationDesign(link="exponential", assignment="selective", n=n, reps=1000, seed=3)
        report = run_monte_carlo(design, suite={"cic": ChangesInChanges}, truth=truth, n_jobs=-1)
        bias[n] = report.row("cic", "Delta_c").bias
        assert 37.0 <= bias[n] <= 57.0, n
    assert abs(bias[4000] - bias[1000]) < 5.0
    for tag in ("theta_10_1", "theta_01_0"):
        assert abs(report.row("cic", tag).bias) <= 0.2, tag
