"""Checks of the identifying assumptions that the data can speak to."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import stats

from estimators.base_estimator import CELL_TAGS, DEFAULT_MIN_SHARE, shares_from_partition
from estimators.cic import ChangesInChanges
from estimators.inference import BootstrapConfig, EstimandProcedure, cluster_bootstrap
from utils.dataio import Dataset, partition_cells
from utils.errors import EmptyGroup, NotPanel

logger = logging.getLogger(__name__)

SD_THRESHOLD = 20.0
SIGNIFICANCE = 0.05
ALWAYS_TAKER_CELLS = ("theta_01_0", "theta_11_1")


@dataclass(frozen=True)
class DiagnosticReport:
    name: str
    estimate: float
    p_value: float
    std_diff: Optional[float] = None
    verdict: str = ""
    se: Optional[float] = None

    def __post_init__(self):
        if np.isfinite(self.p_value) and not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")
        if self.std_diff is not None and self.std_diff < 0:
            raise ValueError("Standardized difference must be non-negative")

    @property
    def flagged(self) -> bool:
        if self.std_diff is not None and self.std_diff > SD_THRESHOLD:
            return True
        return bool(np.isfinite(self.p_value) and self.p_value < SIGNIFICANCE)

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "pval": self.p_value,
            "sd": self.std_diff,
            "se": self.se,
            "verdict": self.verdict,
        }


def _groups(y: np.ndarray, d: np.ndarray, period_mask: np.ndarray, period: int):
    treated = y[period_mask & (d == 1)]
    control = y[period_mask & (d == 0)]
    for arm, values in ((1, treated), (0, control)):
        if values.size == 0:
            raise EmptyGroup(period, arm)
    return treated, control


def _compare(name: str, treated: np.ndarray, control: np.ndarray) -> DiagnosticReport:
    """Welch t-test and standardized difference of treated against control outcomes."""
    diff = float(treated.mean() - control.mean())
    var1 = float(treated.var(ddof=1)) if treated.size > 1 else 0.0
    var0 = float(control.var(ddof=1)) if control.size > 1 else 0.0
    pooled = np.sqrt((var1 + var0) / 2.0)

    if var1 == 0.0 and var0 == 0.0:
        # zero variance: equality is exact, any difference is certain
        p_value = 1.0 if diff == 0.0 else 0.0
        std_diff = 0.0 if diff == 0.0 else float("inf")
    else:
        p_value = float(stats.ttest_ind(treated, control, equal_var=False).pvalue)
        std_diff = 100.0 * abs(diff) / pooled

    verdict = "ok"
    if std_diff > SD_THRESHOLD:
        verdict = f"imbalanced: standardized difference above {SD_THRESHOLD:g}"
    elif p_value < SIGNIFICANCE:
        verdict = f"rejected at {SIGNIFICANCE:g}"
    return DiagnosticReport(name=name, estimate=diff, p_value=p_value, std_diff=std_diff, verdict=verdict)


def balance_test(data: Dataset, period: int) -> DiagnosticReport:
    """
    Compare mean outcomes of treated and control units in one period.

    Args:
        data: Validated dataset.
        period: 0 (pre-mediator) or 1 (post-mediator).

    Returns:
        DiagnosticReport with the mean difference, Welch p-value and
        standardized difference; SD above 20 is flagged.
    """
    treated, control = _groups(data.y, data.d, data.t == period, period)
    report = _compare(f"balance_t{period}", treated, control)
    logger.info(f"Balance t={period}: diff={report.estimate:.4f} pval={report.p_value:.3f} SD={report.std_diff:.2f}")
    return report


def pretrend_implication_test(data: Dataset) -> DiagnosticReport:
    """Test equality of period-0 outcome means across treatment arms.

    Under random treatment assignment the period-0 outcome distribution
    cannot depend on D; a rejection speaks against the assumptions that
    make treatment independent of the unobservables.
    """
    treated, control = _groups(data.y, data.d, data.t == 0, 0)
    report = _compare("pretrend_implication", treated, control)
    verdict = "rejected: period-0 outcomes differ by treatment" if report.p_value < SIGNIFICANCE else "not rejected"
    return DiagnosticReport(
        name=report.name,
        estimate=report.estimate,
        p_value=report.p_value,
        std_diff=report.std_diff,
        verdict=verdict,
    )


def attrition_check(data: Dataset) -> DiagnosticReport:
    """Period-0 balance among clusters observed in both periods."""
    if not data.is_panel:
        raise NotPanel()
    seen0 = np.unique(data.cluster[data.t == 0])
    seen1 = np.unique(data.cluster[data.t == 1])
    stayers = np.intersect1d(seen0, seen1, assume_unique=True)
    mask = np.isin(data.cluster, stayers) & (data.t == 0)
    lost = seen0.size - stayers.size
    logger.info(f"Attrition check: {stayers.size} clusters in both periods, {lost} observed only in period 0")
    treated, control = _groups(data.y, data.d, mask, 0)
    return _compare("attrition", treated, control)


def exclusion_restriction_test(
    data: Dataset,
    cfg: Optional[BootstrapConfig] = None,
    estimator_cls=ChangesInChanges,
    min_share: float = DEFAULT_MIN_SHARE,
    residualize: bool = False,
) -> List[DiagnosticReport]:
    """
    Bootstrap tests that each cell-conditional direct effect is zero.

    Without a direct effect of D all four cell-conditional effects vanish.
    Always-taker cells are skipped when the design has no always-takers.

    Returns:
        One DiagnosticReport per testable cell.
    """
    part = partition_cells(data, warn_ties=False)
    tags = list(CELL_TAGS)
    if part.one_sided or shares_from_partition(part).p_a < min_share:
        logger.info("No always-takers: skipping always-taker cell tests")
        tags = [t for t in tags if t not in ALWAYS_TAKER_CELLS]

    procedure = EstimandProcedure(
        estimator_cls=estimator_cls, tags=tuple(tags), min_share=min_share, residualize=residualize
    )
    results = cluster_bootstrap(data, procedure, cfg)
    reports = []
    for tag in tags:
        r = results[tag]
        verdict = "rejected: direct effect in cell" if r.p_value < SIGNIFICANCE else "not rejected"
        reports.append(
            DiagnosticReport(name=f"exclusion_{tag}", estimate=r.point, p_value=r.p_value, se=r.se, verdict=verdict)
        )
    return reports


def describe_outcomes(data: Dataset) -> pd.DataFrame:
    """Outcome descriptives per period, overall and by treatment arm."""
    rows = []
    for period in (0, 1):
        in_period = data.t == period
        treated, control = _groups(data.y, data.d, in_period, period)
        comparison = _compare(f"describe_t{period}", treated, control)
        outcomes = data.y[in_period]
        rows.append(
            {
                "period": period,
                "n": int(outcomes.size),
                "mean": float(outcomes.mean()),
                "sd": float(outcomes.std(ddof=1)) if outcomes.size > 1 else 0.0,
                "n_treated": int(treated.size),
                "mean_treated": float(treated.mean()),
                "n_control": int(control.size),
                "mean_control": float(control.mean()),
                "mean_diff": comparison.estimate,
                "pval": comparison.p_value,
                "SD": comparison.std_diff,
            }
        )
    return pd.DataFrame(rows)
