import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Type

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from estimators.base_estimator import DEFAULT_MIN_SHARE, BaseEstimator
from estimators.cic import ChangesInChanges
from estimators.did import MeanShiftDiD
from simulation.dgp import SimulationDesign, draw_dgp
from simulation.oracle import TruthTable, true_effects_oracle
from utils.dataio import partition_cells
from utils.errors import CicError
from utils.progress_tracker import ProgressTracker

logger = logging.getLogger(__name__)

DEFAULT_SUITE: Dict[str, Type[BaseEstimator]] = {"cic": ChangesInChanges, "did": MeanShiftDiD}

RANDOM_COLUMNS: Tuple[str, ...] = (
    "theta_n", "theta_a", "Delta_c", "theta_c_1", "theta_c_0", "delta_c_1", "delta_c_0",
)
# Under selective assignment strata effects on never- and always-takers are
# not identified; never-takers with D=1 and always-takers with D=0 take their place.
SELECTIVE_COLUMNS: Tuple[str, ...] = (
    "theta_10_1", "theta_01_0", "Delta_c", "theta_c_1", "theta_c_0", "delta_c_1", "delta_c_0",
)
REPORT_COLUMNS = ["estimator", "estimand", "n", "bias", "sd", "rmse", "true", "relr", "mean", "failed", "reps"]


def report_columns(design: SimulationDesign) -> Tuple[str, ...]:
    return SELECTIVE_COLUMNS if design.selective else RANDOM_COLUMNS


@dataclass(frozen=True)
class MonteCarloRow:
    estimator: str
    estimand: str
    n: int
    bias: float
    sd: float
    rmse: float
    true: float
    relr: float
    mean: float
    failed: int
    reps: int


def calculate_bias_rmse(estimates: np.ndarray, true_value: float) -> Tuple[float, float, float, float]:
    """
    Bias, standard deviation and root mean squared error of estimates.

    The standard deviation divides by the number of estimates, so that
    rmse**2 == bias**2 + sd**2.

    Returns:
        (mean, bias, sd, rmse)
    """
    est = np.asarray(estimates, dtype=float)
    mean = float(np.mean(est))
    bias = mean - true_value
    sd = float(np.std(est, ddof=0))
    rmse = float(np.sqrt(bias ** 2 + sd ** 2))
    return mean, bias, sd, rmse


@dataclass(frozen=True)
class MonteCarloReport:
    design: SimulationDesign
    truth: TruthTable
    rows: Tuple[MonteCarloRow, ...]

    def row(self, estimator: str, estimand: str) -> MonteCarloRow:
        for r in self.rows:
            if r.estimator == estimator and r.estimand == estimand:
                return r
        raise KeyError(f"No row for {estimator}/{estimand}")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.rows], columns=REPORT_COLUMNS)


def _simulate_chunk(
    design: SimulationDesign,
    rep_indices: Sequence[int],
    suite: Mapping[str, Type[BaseEstimator]],
    tags: Sequence[str],
    min_share: float,
) -> List[Dict[str, Dict[str, float]]]:
    results = []
    for rep in rep_indices:
        try:
            part = partition_cells(draw_dgp(design, rep), warn_ties=False)
        except CicError as e:
            logger.debug(f"Repetition {rep} unusable: {e.message}")
            results.append({name: {tag: float("nan") for tag in tags} for name in suite})
            continue
        results.append(
            {name: cls(part, quantiles=(), min_share=min_share).averages(tags) for name, cls in suite.items()}
        )
    return results


def run_monte_carlo(
    design: SimulationDesign,
    suite: Optional[Mapping[str, Type[BaseEstimator]]] = None,
    truth: Optional[TruthTable] = None,
    n_jobs: int = 1,
    chunk_size: int = 25,
    min_share: float = DEFAULT_MIN_SHARE,
) -> MonteCarloReport:
    """
    Run every estimator of the suite on ``design.reps`` simulated datasets.

    All estimators see the same datasets. Estimates that fail on a dataset
    are counted per estimand and left out of its statistics.

    Args:
        design: Simulation setting.
        suite: Estimator classes by name; defaults to CiC and DiD.
        truth: Precomputed oracle; computed from the design when omitted.
        n_jobs: joblib workers; results do not depend on it.
        chunk_size: Repetitions per joblib task.
        min_share: Smallest complier/always-taker share accepted.

    Returns:
        MonteCarloReport with one row per estimator and estimand.
    """
    suite = dict(suite or DEFAULT_SUITE)
    truth = truth or true_effects_oracle(design, design.oracle_draws)
    tags = report_columns(design)
    if design.reps == 1:
        logger.warning("Monte Carlo with a single repetition: every sd is 0")

    logger.info(
        f"Monte Carlo: link={design.link} assignment={design.assignment} n={design.n} "
        f"reps={design.reps} estimators={list(suite)}"
    )
    chunks = [range(i, min(i + chunk_size, design.reps)) for i in range(0, design.reps, chunk_size)]
    tracker = ProgressTracker(design.reps, label="monte carlo")
    collected: List[Dict[str, Dict[str, float]]] = []
    parallel = Parallel(n_jobs=n_jobs, return_as="generator")
    for chunk in parallel(delayed(_simulate_chunk)(design, list(c), suite, tags, min_share) for c in chunks):
        collected.extend(chunk)
        tracker.update(len(chunk))

    rows = []
    for name in suite:
        for tag in tags:
            estimates = np.array([rep[name][tag] for rep in collected], dtype=float)
            ok = estimates[np.isfinite(estimates)]
            failed = int(estimates.size - ok.size)
            true_value = truth[tag]
            if failed:
                logger.warning(f"{name}/{tag}: {failed} of {design.reps} repetitions failed")
            if ok.size == 0:
                mean = bias = sd = rmse = float("nan")
            else:
                mean, bias, sd, rmse = calculate_bias_rmse(ok, true_value)
            relr = rmse / abs(true_value) if true_value else float("nan")
            rows.append(
                MonteCarloRow(
                    estimator=name,
                    estimand=tag,
                    n=design.n,
                    bias=bias,
                    sd=sd,
                    rmse=rmse,
                    true=true_value,
                    relr=relr,
                    mean=mean,
                    failed=failed,
                    reps=design.reps,
                )
            )
    return MonteCarloReport(design=design, truth=truth, rows=tuple(rows))
