import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from utils.dataio import CellPartition
from utils.edist import EmpiricalDistribution, MixtureCdf, build_mixture_cdf, union_grid
from utils.errors import (
    CicError,
    EmptyCell,
    InvalidConfig,
    NoAlwaysTakers,
    WeakCompliers,
)

logger = logging.getLogger(__name__)

DEFAULT_QUANTILES: Tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(1, 10))
DEFAULT_MIN_SHARE = 0.01
SHARE_TOLERANCE = 1e-12

# Canonical report order
EFFECT_TAGS: Tuple[str, ...] = (
    "theta_n",
    "theta_a",
    "Delta_c",
    "theta_c_1",
    "theta_c_0",
    "delta_c_1",
    "delta_c_0",
    "theta_10_1",
    "theta_00_0",
    "theta_01_0",
    "theta_11_1",
    "ATE",
    "LATE_iv",
)
SHARE_TAGS: Tuple[str, ...] = ("p_n", "p_c", "p_a")
ALL_TAGS: Tuple[str, ...] = EFFECT_TAGS + SHARE_TAGS

TAG_DESCRIPTIONS: Dict[str, str] = {
    "theta_n": "direct effect on never-takers",
    "theta_a": "direct effect on always-takers",
    "Delta_c": "total effect on compliers",
    "theta_c_1": "direct effect on compliers under d=1",
    "theta_c_0": "direct effect on compliers under d=0",
    "delta_c_1": "indirect effect on compliers under d=1",
    "delta_c_0": "indirect effect on compliers under d=0",
    "theta_10_1": "direct effect given D=1, M(1)=0",
    "theta_00_0": "direct effect given D=0, M(0)=0",
    "theta_01_0": "direct effect given D=0, M(0)=1",
    "theta_11_1": "direct effect given D=1, M(1)=1",
    "ATE": "total effect on the population",
    "LATE_iv": "Wald estimate with D instrumenting M",
    "p_n": "never-taker share",
    "p_c": "complier share",
    "p_a": "always-taker share",
}

# Complier potential-outcome distributions Y1(d, m) | complier as weighted
# differences of two samples: (positive sample, negative sample,
# positive probability (m|d), negative probability (m|d)). Samples are
# ("obs", d, m) = period-1 outcomes of cell (d, m) and ("cf", d, m) =
# period-0 outcomes of cell (d, m) mapped with the transform of cell (1-d, m).
COMPLIER_MIXTURES: Dict[Tuple[int, int], Tuple[Tuple[str, int, int], Tuple[str, int, int], Tuple[int, int], Tuple[int, int]]] = {
    (1, 0): (("cf", 0, 0), ("obs", 1, 0), (0, 0), (0, 1)),
    (0, 0): (("obs", 0, 0), ("cf", 1, 0), (0, 0), (0, 1)),
    (1, 1): (("obs", 1, 1), ("cf", 0, 1), (1, 1), (1, 0)),
    (0, 1): (("cf", 1, 1), ("obs", 0, 1), (1, 1), (1, 0)),
}

# Complier contrasts as (minuend, subtrahend) potential outcomes (d, m)
COMPLIER_CONTRASTS: Dict[str, Tuple[Tuple[int, int], Tuple[int, int]]] = {
    "theta_c_0": ((1, 0), (0, 0)),
    "theta_c_1": ((1, 1), (0, 1)),
    "Delta_c": ((1, 1), (0, 0)),
    "delta_c_0": ((0, 1), (0, 0)),
    "delta_c_1": ((1, 1), (1, 0)),
}

CELL_TAGS: Dict[str, Tuple[int, int]] = {
    "theta_10_1": (1, 0),
    "theta_00_0": (0, 0),
    "theta_01_0": (0, 1),
    "theta_11_1": (1, 1),
}


def validate_quantiles(quantiles: Sequence[float]) -> Tuple[float, ...]:
    grid = tuple(float(q) for q in quantiles)
    if any(not 0.0 < q < 1.0 for q in grid):
        raise InvalidConfig("Quantile grid must lie strictly inside (0, 1)", quantiles=list(grid))
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidConfig("Quantile grid must be strictly increasing", quantiles=list(grid))
    return grid


@dataclass(frozen=True)
class StrataShares:
    """Principal-strata shares and the conditional mediator probabilities behind them.

    ``p_m_given_d`` is keyed by ``(m, d)``: ``p_m_given_d[(1, 0)]`` is Pr(M=1 | D=0).
    """

    p_a: float
    p_c: float
    p_n: float
    p_m_given_d: Mapping[Tuple[int, int], float]

    def __post_init__(self):
        total = self.p_a + self.p_c + self.p_n
        if abs(total - 1.0) > SHARE_TOLERANCE:
            raise ValueError(f"Strata shares sum to {total}, not 1")

    def p(self, m: int, d: int) -> float:
        return self.p_m_given_d[(m, d)]


@dataclass(frozen=True)
class EffectEstimate:
    """Average effect plus its quantile-effect curve for one estimand."""

    tag: str
    average: float
    quantiles: Tuple[float, ...] = ()
    quantile_effects: Tuple[float, ...] = ()
    estimator: str = ""

    def __post_init__(self):
        validate_quantiles(self.quantiles)
        if len(self.quantiles) != len(self.quantile_effects):
            raise ValueError("Quantile grid and effects differ in length")

    @property
    def quantile_curve(self) -> List[Tuple[float, float]]:
        return list(zip(self.quantiles, self.quantile_effects))

    def flatten(self) -> Dict[str, float]:
        """Average under the tag, quantile effects under ``tag@q``."""
        values = {self.tag: self.average}
        for q, effect in self.quantile_curve:
            values[f"{self.tag}@{q:g}"] = effect
        return values


def shares_from_partition(part: CellPartition) -> StrataShares:
    """Conditional mediator probabilities from period-1 cell counts.

    The complier share pools p(1|1) - p(1|0) and p(0|0) - p(0|1); with
    period-1 counts both are the same number, and using one value for
    every complier denominator keeps the decomposition identities exact.
    """
    counts = part.counts
    probs = {}
    for d in (0, 1):
        arm = counts[(d, 0, 1)] + counts[(d, 1, 1)]
        if arm == 0:
            raise EmptyCell(d, 0, 1)
        for m in (0, 1):
            probs[(m, d)] = counts[(d, m, 1)] / arm
    p_c = ((probs[(1, 1)] - probs[(1, 0)]) + (probs[(0, 0)] - probs[(0, 1)])) / 2.0
    p_a = probs[(1, 0)]
    p_n = probs[(0, 1)]
    return StrataShares(p_a=p_a, p_c=p_c, p_n=p_n, p_m_given_d=probs)


class BaseEstimator(ABC):
    """Direct and indirect effect estimands over one cell partition.

    Subclasses only decide how period-0 outcomes are mapped into period-1
    counterfactuals (quantile-quantile transform, mean shift); the
    weighting algebra that turns cell-level contrasts into strata effects
    is shared. Results are cached per instance, so one instance should be
    used for one partition.
    """

    name = "base"

    def __init__(
        self,
        part: CellPartition,
        quantiles: Sequence[float] = DEFAULT_QUANTILES,
        min_share: float = DEFAULT_MIN_SHARE,
        rearrangement: str = "running_max",
        shares: Optional[StrataShares] = None,
    ):
        self.part = part
        self.quantiles = validate_quantiles(quantiles)
        self.min_share = min_share
        self.rearrangement = rearrangement
        self._samples: Dict[Tuple[str, int, int], EmpiricalDistribution] = {}
        self._mixtures: Dict[Tuple[int, int], Tuple[float, Optional[MixtureCdf]]] = {}
        self._shares: Optional[StrataShares] = shares

    @abstractmethod
    def cell_transform(self, d: int, m: int) -> Callable[[np.ndarray], np.ndarray]:
        """Map period-0 outcomes to period-1 outcomes using cell (d, m)."""

    # Building blocks

    def _require(self, d: int, m: int, t: int) -> np.ndarray:
        values = self.part.values(d, m, t)
        if values.size == 0:
            if self.part.one_sided and (d, m) == (0, 1):
                raise NoAlwaysTakers(0.0, self.min_share)
            raise EmptyCell(d, m, t)
        return values

    def sample(self, kind: str, d: int, m: int) -> EmpiricalDistribution:
        key = (kind, d, m)
        if key not in self._samples:
            if kind == "obs":
                values = self._require(d, m, 1)
            else:
                self._require(1 - d, m, 0)
                self._require(1 - d, m, 1)
                # both maps are nondecreasing, so sorted input stays sorted
                values = np.asarray(self.cell_transform(1 - d, m)(self._require(d, m, 0)), dtype=float)
            self._samples[key] = EmpiricalDistribution(values, presorted=True)
        return self._samples[key]

    def shares(self) -> StrataShares:
        if self._shares is None:
            self._shares = shares_from_partition(self.part)
        return self._shares

    def complier_shares(self) -> StrataShares:
        shares = self.shares()
        if shares.p_c < self.min_share:
            raise WeakCompliers(shares.p_c, self.min_share)
        return shares

    def _curve(self, fn: Callable[[np.ndarray], np.ndarray]) -> Tuple[float, ...]:
        if not self.quantiles:
            return ()
        return tuple(float(v) for v in fn(np.asarray(self.quantiles)))

    def _estimate(self, tag: str, average: float, curve: Tuple[float, ...] = ()) -> EffectEstimate:
        return EffectEstimate(
            tag=tag,
            average=float(average),
            quantiles=self.quantiles if curve else (),
            quantile_effects=curve,
            estimator=self.name,
        )

    # Cell-conditional direct effects

    def cell_effect(self, d: int, m: int) -> EffectEstimate:
        """Direct effect conditional on D=d and M(d)=m.

        Treated cells compare observed period-1 outcomes with mapped
        period-0 outcomes; control cells take the mapped sample as the
        treated potential outcome.
        """
        observed = self.sample("obs", d, m)
        mapped = self.sample("cf", d, m)
        sign = 1.0 if d == 1 else -1.0
        average = sign * (observed.mean() - mapped.mean())
        curve = self._curve(lambda q: sign * (observed.quantile(q) - mapped.quantile(q)))
        return self._estimate(f"theta_{d}{m}_{d}", average, curve)

    def never_takers(self) -> EffectEstimate:
        cell = self.cell_effect(1, 0)
        return self._estimate("theta_n", cell.average, cell.quantile_effects)

    def always_takers(self) -> EffectEstimate:
        shares = self.shares()
        if shares.p_a < self.min_share:
            raise NoAlwaysTakers(shares.p_a, self.min_share)
        cell = self.cell_effect(0, 1)
        return self._estimate("theta_a", cell.average, cell.quantile_effects)

    # Complier effects

    def complier_mixture(self, d: int, m: int) -> Tuple[float, Optional[MixtureCdf]]:
        """Mean and (when quantiles are requested) CDF of Y1(d, m) among compliers."""
        key = (d, m)
        if key not in self._mixtures:
            shares = self.complier_shares()
            pos_sample, neg_sample, pos_prob, neg_prob = COMPLIER_MIXTURES[key]
            w_pos = shares.p(*pos_prob) / shares.p_c
            w_neg = shares.p(*neg_prob) / shares.p_c
            pos = self.sample(*pos_sample)
            mean = w_pos * pos.mean()
            neg = None
            if w_neg > 0:
                neg = self.sample(*neg_sample)
                mean -= w_neg * neg.mean()
            mixture = None
            if self.quantiles:
                samples = [pos.values] if neg is None else [pos.values, neg.values]
                mixture = build_mixture_cdf(
                    pos.cdf,
                    neg.cdf if neg is not None else pos.cdf,
                    w_pos,
                    w_neg,
                    union_grid(*samples),
                    method=self.rearrangement,
                )
            self._mixtures[key] = (mean, mixture)
        return self._mixtures[key]

    def complier_effect(self, tag: str) -> EffectEstimate:
        high, low = COMPLIER_CONTRASTS[tag]
        mean_high, cdf_high = self.complier_mixture(*high)
        mean_low, cdf_low = self.complier_mixture(*low)
        curve = self._curve(lambda q: cdf_high.quantile(q) - cdf_low.quantile(q))
        return self._estimate(tag, mean_high - mean_low, curve)

    def _identified_complier_effect(self, tag: str) -> Optional[EffectEstimate]:
        """Complier contrast, or None when it needs the missing always-taker cell."""
        try:
            return self.complier_effect(tag)
        except NoAlwaysTakers as exc:
            if not self.part.one_sided:
                raise
            logger.info(f"{tag} ({self.name}) not identified: {exc.message}")
            return None

    def complier_direct(self) -> Tuple[EffectEstimate, Optional[EffectEstimate]]:
        """Direct effects on compliers with the mediator at 0, then at 1.

        In one-sided designs the second member is None.
        """
        theta_c_0 = self.complier_effect("theta_c_0")
        return theta_c_0, self._identified_complier_effect("theta_c_1")

    def complier_total_and_indirect(
        self,
    ) -> Tuple[EffectEstimate, Optional[EffectEstimate], EffectEstimate]:
        """Total effect on compliers and the indirect effects under d=0 and d=1.

        In one-sided designs the indirect effect under d=0 is None.
        """
        delta_c = self.complier_effect("Delta_c")
        delta_c_1 = self.complier_effect("delta_c_1")
        return delta_c, self._identified_complier_effect("delta_c_0"), delta_c_1

    # Population-level estimands

    def population(self) -> EffectEstimate:
        treated = EmpiricalDistribution(self.part.period_values(1, 1), presorted=True)
        control = EmpiricalDistribution(self.part.period_values(0, 1), presorted=True)
        curve = self._curve(lambda q: treated.quantile(q) - control.quantile(q))
        return self._estimate("ATE", treated.mean() - control.mean(), curve)

    def wald_late(self) -> EffectEstimate:
        shares = self.complier_shares()
        ate = self.population()
        return self._estimate("LATE_iv", ate.average / shares.p_c)

    def share_estimate(self, tag: str) -> EffectEstimate:
        shares = self.shares()
        return self._estimate(tag, {"p_n": shares.p_n, "p_c": shares.p_c, "p_a": shares.p_a}[tag])

    # Dispatch

    def estimate(self, tag: str) -> EffectEstimate:
        if tag == "theta_n":
            return self.never_takers()
        if tag == "theta_a":
            return self.always_takers()
        if tag in COMPLIER_CONTRASTS:
            return self.complier_effect(tag)
        if tag in CELL_TAGS:
            return self.cell_effect(*CELL_TAGS[tag])
        if tag == "ATE":
            return self.population()
        if tag == "LATE_iv":
            return self.wald_late()
        if tag in SHARE_TAGS:
            return self.share_estimate(tag)
        raise InvalidConfig(f"Unknown estimand '{tag}'", tag=tag, known=list(ALL_TAGS))

    def estimate_many(
        self, tags: Iterable[str] = ALL_TAGS, skip_unavailable: bool = False
    ) -> Dict[str, EffectEstimate]:
        """Estimate several tags; unavailable ones are skipped when requested.

        Returns:
            Mapping tag -> EffectEstimate in the order requested.
        """
        results: Dict[str, EffectEstimate] = {}
        for tag in tags:
            try:
                results[tag] = self.estimate(tag)
            except NoAlwaysTakers as exc:
                if not skip_unavailable:
                    raise
                logger.warning(f"Skipping {tag} ({self.name}): {exc.message}")
        return results

    def averages(self, tags: Iterable[str]) -> Dict[str, float]:
        """Average effects with NaN for estimands that fail on this sample."""
        values: Dict[str, float] = {}
        for tag in tags:
            try:
                values[tag] = self.estimate(tag).average
            except CicError:
                values[tag] = float("nan")
        return values
