"""Mean-shift difference-in-differences comparator.

Same estimand algebra as the changes-in-changes suite, with every
quantile-quantile map replaced by the common-trend shift of the cell.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from estimators.base_estimator import (
    ALL_TAGS,
    DEFAULT_QUANTILES,
    BaseEstimator,
    EffectEstimate,
    StrataShares,
)
from utils.dataio import CellPartition
from utils.errors import EmptyCell

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeanShiftTransform:
    shift: float

    def __post_init__(self):
        if not math.isfinite(self.shift):
            raise ValueError(f"Mean shift must be finite, got {self.shift}")

    def __call__(self, y):
        return np.asarray(y, dtype=float) + self.shift


def did_transform(part: CellPartition, d: int, m: int) -> MeanShiftTransform:
    """Shift of cell (d, m) between its period means."""
    before = part.values(d, m, 0)
    after = part.values(d, m, 1)
    for t, values in ((0, before), (1, after)):
        if values.size == 0:
            raise EmptyCell(d, m, t)
    return MeanShiftTransform(shift=float(after.mean() - before.mean()))


class MeanShiftDiD(BaseEstimator):
    name = "did"

    def cell_transform(self, d: int, m: int) -> MeanShiftTransform:
        self._require(d, m, 0)
        self._require(d, m, 1)
        return did_transform(self.part, d, m)


def did_effects(
    part: CellPartition,
    shares: Optional[StrataShares] = None,
    qgrid: Sequence[float] = DEFAULT_QUANTILES,
    tags: Sequence[str] = ALL_TAGS,
) -> Dict[str, EffectEstimate]:
    """Full estimand set under the mean-shift counterfactual.

    Estimands that cannot be formed on this partition (no always-takers in
    a one-sided design) are left out of the result.
    """
    return MeanShiftDiD(part, quantiles=qgrid, shares=shares).estimate_many(tags, skip_unavailable=True)
