import logging

import numpy as np
import pytest

from estimators.cic import ChangesInChanges
from estimators.did import MeanShiftDiD
from estimators.inference import (
    SUMMARY_COLUMNS,
    BootstrapConfig,
    BootstrapResult,
    ClusterIndex,
    EstimandProcedure,
    cluster_bootstrap,
    normal_p_value,
    summarize_bootstrap,
)
from simulation.dgp import SimulationDesign, draw_dgp
from utils.dataio import load_dataset
from utils.errors import InvalidConfig, TooManyFailedReplicates, WeakCompliers


@pytest.mark.parametrize(
    "kwargs",
    [
        {"replications": 1},
        {"cluster_mode": "household"},
        {"seed": -1},
        {"max_failure_share": 1.0},
        {"ci_level": 1.0},
    ],
)
def test_bootstrap_config_validation(kwargs):
    with pytest.raises(InvalidConfig):
        BootstrapConfig(**kwargs)


def test_normal_p_value():
    assert normal_p_value(0.0, 0.0) == 1.0
    assert normal_p_value(0.3, 0.0) == 0.0
    assert normal_p_value(1.959964, 1.0) == pytest.approx(0.05, abs=1e-6)
    assert normal_p_value(-1.959964, 1.0) == pytest.approx(0.05, abs=1e-6)
    assert np.isnan(normal_p_value(float("nan"), 1.0))


def test_constant_outcomes_have_zero_standard_errors(make_random_dataset):
    data = make_random_dataset(0, n=600)
    data = data.with_outcome(np.full(data.n, 2.0))
    procedure = EstimandProcedure(ChangesInChanges, tags=("theta_n", "Delta_c", "ATE"))
    results = cluster_bootstrap(data, procedure, BootstrapConfig(replications=30, seed=4))
    assert results["theta_n"].se == 0.0
    assert results["theta_n"].p_value == 1.0
    assert results["ATE"].se == 0.0
    assert results["Delta_c"].point == pytest.approx(0.0, abs=1e-12)
    assert results["Delta_c"].se == pytest.approx(0.0, abs=1e-12)


def test_draws_do_not_depend_on_worker_count(make_random_dataset):
    data = make_random_dataset(1, n=400)
    procedure = EstimandProcedure(MeanShiftDiD, tags=("theta_n", "ATE"))
    serial = cluster_bootstrap(data, procedure, BootstrapConfig(replications=24, seed=9, chunk_size=5))
    parallel = cluster_bootstrap(
        data, procedure, BootstrapConfig(replications=24, seed=9, chunk_size=7, n_jobs=2)
    )
    for tag in ("theta_n", "ATE"):
        np.testing.assert_array_equal(serial[tag].draws, parallel[tag].draws)
        assert serial[tag].se == parallel[tag].se


def test_seed_controls_draws(make_random_dataset):
    data = make_random_dataset(2, n=400)
    procedure = EstimandProcedure(MeanShiftDiD, tags=("ATE",))
    a = cluster_bootstrap(data, procedure, BootstrapConfig(replications=10, seed=1))["ATE"]
    b = cluster_bootstrap(data, procedure, BootstrapConfig(replications=10, seed=1))["ATE"]
    c = cluster_bootstrap(data, procedure, BootstrapConfig(replications=10, seed=2))["ATE"]
    np.testing.assert_array_equal(a.draws, b.draws)
    assert not np.array_equal(a.draws, c.draws)
    assert a.replications == 10
    assert a.ci_low <= a.ci_high


def test_cluster_resampling_keeps_clusters_whole(write_csv, panel_csv_text):
    data = load_dataset(write_csv(panel_csv_text))
    index = ClusterIndex.build(data)
    assert index.n_clusters == 8
    rng = np.random.default_rng(0)
    for _ in range(50):
        rows = index.resample(rng)
        _, counts = np.unique(data.cluster[rows], return_counts=True)
        assert np.all(counts % 2 == 0)
        assert rows.size == data.n


def test_record_resampling_on_panel(write_csv, panel_csv_text):
    data = load_dataset(write_csv(panel_csv_text))
    index = ClusterIndex.build(data, mode="record")
    assert index.n_clusters == data.n
    assert index.resample(np.random.default_rng(3)).size == data.n


class _FlakyEstimator:
    """Returns a constant, failing on every ``fail_every``-th replicate call."""

    def __init__(self, fail_every: int):
        self.fail_every = fail_every
        self.calls = 0

    def __call__(self, data):
        call = self.calls
        self.calls += 1
        if call and call % self.fail_every == 0:
            raise WeakCompliers(0.0, 0.01)
        return {"ATE": float(np.mean(data.y))}


def test_too_many_failed_replicates(make_random_dataset):
    data = make_random_dataset(5)
    with pytest.raises(TooManyFailedReplicates) as err:
        cluster_bootstrap(data, _FlakyEstimator(fail_every=2), BootstrapConfig(replications=20))
    assert err.value.exit_code == 3


def test_partial_failures_are_dropped_and_counted(make_random_dataset):
    data = make_random_dataset(6)
    results = cluster_bootstrap(data, _FlakyEstimator(fail_every=20), BootstrapConfig(replications=40))
    assert results["ATE"].failed == 2
    assert results["ATE"].replications == 38


class _PartlyUndefinedEstimator:
    """Second value is NaN on every third replicate call."""

    def __init__(self):
        self.calls = 0

    def __call__(self, data):
        call = self.calls
        self.calls += 1
        ratio = float("nan") if call and call % 3 == 0 else float(np.median(data.y))
        return {"ATE": float(np.mean(data.y)), "LATE_iv": ratio}


def test_non_finite_draws_are_counted_per_estimand(make_random_dataset, caplog):
    data = make_random_dataset(6)
    with caplog.at_level(logging.WARNING):
        results = cluster_bootstrap(data, _PartlyUndefinedEstimator(), BootstrapConfig(replications=30))
    assert results["ATE"].failed == 0
    assert results["ATE"].replications == 30
    assert results["LATE_iv"].failed == 10
    assert results["LATE_iv"].replications == 20
    assert "LATE_iv: 10 replicates" in caplog.text
    assert summarize_bootstrap(results)["failed"].tolist() == [0, 10]


def _result(tag, point=1.0):
    draws = np.array([0.5, 1.5])
    return BootstrapResult(tag=tag, point=point, se=0.7, p_value=0.15, draws=draws)


def test_summary_is_in_canonical_order():
    frame = summarize_bootstrap([_result("ATE"), _result("theta_n@0.5"), _result("custom"), _result("theta_n")])
    assert list(frame.columns) == SUMMARY_COLUMNS
    assert list(frame["estimand"]) == ["theta_n", "theta_n@0.5", "ATE", "custom"]
    assert list(frame["replications"]) == [2, 2, 2, 2]


def test_summary_of_nothing():
    frame = summarize_bootstrap({})
    assert frame.empty
    assert list(frame.columns) == SUMMARY_COLUMNS


def test_bootstrap_se_matches_difference_in_means(make_random_dataset):
    data = make_random_dataset(7, n=1000)
    procedure = EstimandProcedure(ChangesInChanges, tags=("ATE",))
    result = cluster_bootstrap(data, procedure, BootstrapConfig(replications=299, seed=3))["ATE"]
    treated = data.y[(data.t == 1) & (data.d == 1)]
    control = data.y[(data.t == 1) & (data.d == 0)]
    analytic = np.sqrt(treated.var(ddof=1) / treated.size + control.var(ddof=1) / control.size)
    assert result.se == pytest.approx(analytic, rel=0.2)


@pytest.mark.slow
def test_bootstrap_se_of_never_taker_effect_matches_sampling_sd():
    data = draw_dgp(SimulationDesign(link="identity", n=1000, reps=1, seed=31), 0)
    procedure = EstimandProcedure(ChangesInChanges, tags=("theta_n",))
    result = cluster_bootstrap(data, procedure, BootstrapConfig(replications=999, seed=5, n_jobs=-1))["theta_n"]
    assert result.se == pytest.approx(0.11, rel=0.3)


@pytest.mark.slow
def test_normal_intervals_cover_never_taker_effect():
    design = SimulationDesign(link="identity", n=1000, reps=200, seed=32)
    procedure = EstimandProcedure(ChangesInChanges, tags=("theta_n",))
    cfg = BootstrapConfig(replications=199, seed=6, n_jobs=-1)
    covered = []
    for rep in range(design.reps):
        result = cluster_bootstrap(draw_dgp(design, rep), procedure, cfg)["theta_n"]
        covered.append(abs(result.point - 1.0) <= 1.959964 * result.se)
    assert 0.90 <= np.mean(covered) <= 0.98
