"""Changes-in-changes estimators of direct and indirect effects.

Period-0 outcomes of one (d, m) cell are mapped into period-1
counterfactuals through the quantile-quantile transform of another cell
with the same mediator value. The functions at the bottom are thin
wrappers for callers that want one estimand at a time.
"""

import logging
from typing import Optional, Sequence, Tuple

from estimators.base_estimator import (
    DEFAULT_MIN_SHARE,
    DEFAULT_QUANTILES,
    BaseEstimator,
    EffectEstimate,
    StrataShares,
    shares_from_partition,
)
from utils.dataio import CellPartition
from utils.edist import EmpiricalDistribution, QQTransform
from utils.errors import WeakCompliers

logger = logging.getLogger(__name__)


class ChangesInChanges(BaseEstimator):
    name = "cic"

    def cell_transform(self, d: int, m: int) -> QQTransform:
        """Quantile-quantile map of cell (d, m) from period 0 to period 1."""
        f0 = EmpiricalDistribution(self._require(d, m, 0), presorted=True)
        f1 = EmpiricalDistribution(self._require(d, m, 1), presorted=True)
        return QQTransform(f0=f0, f1=f1)


def estimate_strata_shares(part: CellPartition, min_share: float = DEFAULT_MIN_SHARE) -> StrataShares:
    """
    Estimate always-taker, complier and never-taker shares.

    Args:
        part: Cell partition; period-1 counts drive the shares.
        min_share: Smallest complier share accepted.

    Returns:
        StrataShares

    Raises:
        WeakCompliers: When the complier share is below ``min_share``.
    """
    shares = shares_from_partition(part)
    if shares.p_c < min_share:
        raise WeakCompliers(shares.p_c, min_share)
    logger.debug(f"Strata shares: p_a={shares.p_a:.4f} p_c={shares.p_c:.4f} p_n={shares.p_n:.4f}")
    return shares


def direct_effect_cell(
    part: CellPartition, d: int, m: int, qgrid: Sequence[float] = DEFAULT_QUANTILES
) -> EffectEstimate:
    return ChangesInChanges(part, quantiles=qgrid).cell_effect(d, m)


def never_taker_effects(part: CellPartition, qgrid: Sequence[float] = DEFAULT_QUANTILES) -> EffectEstimate:
    return ChangesInChanges(part, quantiles=qgrid).never_takers()


def always_taker_effects(
    part: CellPartition,
    qgrid: Sequence[float] = DEFAULT_QUANTILES,
    min_share: float = DEFAULT_MIN_SHARE,
) -> EffectEstimate:
    return ChangesInChanges(part, quantiles=qgrid, min_share=min_share).always_takers()


def complier_direct_effects(
    part: CellPartition,
    shares: Optional[StrataShares] = None,
    qgrid: Sequence[float] = DEFAULT_QUANTILES,
) -> Tuple[EffectEstimate, Optional[EffectEstimate]]:
    """Direct effects on compliers under d=0 and under d=1; the latter is None when one-sided."""
    return ChangesInChanges(part, quantiles=qgrid, shares=shares).complier_direct()


def complier_total_and_indirect(
    part: CellPartition,
    shares: Optional[StrataShares] = None,
    qgrid: Sequence[float] = DEFAULT_QUANTILES,
) -> Tuple[EffectEstimate, Optional[EffectEstimate], EffectEstimate]:
    """Total effect on compliers, then indirect effects under d=0 (None when one-sided) and d=1."""
    return ChangesInChanges(part, quantiles=qgrid, shares=shares).complier_total_and_indirect()


def population_ate_qte(part: CellPartition, qgrid: Sequence[float] = DEFAULT_QUANTILES) -> EffectEstimate:
    return ChangesInChanges(part, quantiles=qgrid).population()


def wald_late(part: CellPartition, min_share: float = DEFAULT_MIN_SHARE) -> EffectEstimate:
    """Population total effect scaled by the complier share."""
    return ChangesInChanges(part, quantiles=(), min_share=min_share).wald_late()
