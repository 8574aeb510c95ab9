from typing import Dict, Type

from estimators.base_estimator import BaseEstimator, EffectEstimate, StrataShares
from estimators.cic import ChangesInChanges
from estimators.did import MeanShiftDiD

ESTIMATORS: Dict[str, Type[BaseEstimator]] = {
    ChangesInChanges.name: ChangesInChanges,
    MeanShiftDiD.name: MeanShiftDiD,
}

__all__ = ["BaseEstimator", "ChangesInChanges", "EffectEstimate", "ESTIMATORS", "MeanShiftDiD", "StrataShares"]
