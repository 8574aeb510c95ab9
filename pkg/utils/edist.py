"""Empirical distribution machinery: CDFs, quantiles, quantile-quantile
transforms and mixture CDFs with monotone rearrangement.

Conventions: CDFs are right-continuous step functions, quantiles are the
generalized inverse ``inf{y : F(y) >= q}``. All objects are immutable and
all functions are pure, so they can be evaluated from several threads.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from utils.errors import DegenerateCdf, QOutOfRange, WeightIdentityViolated

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Slack for q * n landing a hair above an integer (e.g. 0.3 * 10)
_RANK_EPS = 1e-9
WEIGHT_TOLERANCE = 1e-9
REARRANGEMENT_METHODS = ("running_max", "sort")


class EmpiricalDistribution:
    """Sorted sample supporting CDF and quantile evaluation."""

    __slots__ = ("values",)

    def __init__(self, values, presorted: bool = False):
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("EmpiricalDistribution needs a non-empty 1-d sample")
        if not np.all(np.isfinite(arr)):
            raise ValueError("EmpiricalDistribution values must be finite")
        if not presorted:
            arr = np.sort(arr)
        arr.setflags(write=False)
        self.values = arr

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def cdf(self, y: ArrayLike) -> ArrayLike:
        return ecdf_eval(self, y)

    def quantile(self, q: ArrayLike) -> ArrayLike:
        return quantile_eval(self, q)

    def mean(self) -> float:
        return float(self.values.mean())

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"EmpiricalDistribution(n={self.n})"


def tied_fraction(values: np.ndarray) -> float:
    """Share of observations that duplicate another observation's value."""
    if values.size == 0:
        return 0.0
    return 1.0 - np.unique(values).size / values.size


def ecdf_eval(dist: EmpiricalDistribution, y: ArrayLike) -> ArrayLike:
    """Return (1/n) * #{values <= y}."""
    counts = np.searchsorted(dist.values, y, side="right")
    return counts / dist.n


def quantile_eval(dist: EmpiricalDistribution, q: ArrayLike) -> ArrayLike:
    """Return the order statistic y_(k) with k = max(1, ceil(q * n))."""
    q_arr = np.asarray(q, dtype=float)
    if np.any((q_arr < 0.0) | (q_arr > 1.0)) or np.any(np.isnan(q_arr)):
        bad = q_arr[(q_arr < 0.0) | (q_arr > 1.0) | np.isnan(q_arr)].ravel()[0]
        raise QOutOfRange(float(bad))
    k = np.maximum(1, np.ceil(q_arr * dist.n - _RANK_EPS)).astype(np.int64)
    result = dist.values[np.minimum(k, dist.n) - 1]
    return float(result) if np.ndim(q) == 0 else result


@dataclass(frozen=True)
class QQTransform:
    """Maps period-0 outcomes of a (d, m) cell to period-1 outcomes of equal rank."""

    f0: EmpiricalDistribution
    f1: EmpiricalDistribution

    def __call__(self, y: ArrayLike) -> ArrayLike:
        return qq_transform(self, y)


def qq_transform(t: QQTransform, y: ArrayLike) -> ArrayLike:
    """Evaluate F1^{-1}(F0(y)) with the rank clamped to [1/n0, 1].

    Ranks are kept as integer counts, so c/n0 mapped into the period-1
    sample uses k = ceil(c * n1 / n0) without rounding error.
    """
    n0, n1 = t.f0.n, t.f1.n
    counts = np.maximum(np.searchsorted(t.f0.values, y, side="right"), 1)
    k = -(-(counts.astype(np.int64) * n1) // n0)
    result = t.f1.values[k - 1]
    return float(result) if np.ndim(y) == 0 else result


Cdf = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MixtureCdf:
    """Weighted difference of two CDFs on a grid, repaired into a valid CDF."""

    grid: np.ndarray
    raw: np.ndarray
    rearranged: np.ndarray
    w_pos: float
    w_neg: float

    def cdf(self, y: ArrayLike) -> ArrayLike:
        idx = np.searchsorted(self.grid, y, side="right")
        padded = np.concatenate([[0.0], self.rearranged])
        return padded[idx]

    def quantile(self, q: ArrayLike) -> ArrayLike:
        if np.ndim(q) == 0:
            return invert_cdf(self, float(q))
        return np.array([invert_cdf(self, float(level)) for level in np.asarray(q)], dtype=float)


def rearrange(values: np.ndarray, method: str = "running_max") -> np.ndarray:
    """Clip to [0, 1] and make nondecreasing."""
    if method not in REARRANGEMENT_METHODS:
        raise ValueError(f"Unknown rearrangement method '{method}'")
    clipped = np.clip(values, 0.0, 1.0)
    if method == "sort":
        return np.sort(clipped)
    return np.maximum.accumulate(clipped)


def build_mixture_cdf(
    f_pos: Cdf,
    f_neg: Cdf,
    w_pos: float,
    w_neg: float,
    grid: np.ndarray,
    method: str = "running_max",
) -> MixtureCdf:
    """
    Build w_pos * F_pos - w_neg * F_neg on a grid and rearrange it.

    Args:
        f_pos: CDF entering with the positive weight.
        f_neg: CDF entering with the negative weight.
        w_pos: Positive weight; must exceed w_neg by exactly one.
        w_neg: Non-negative weight.
        grid: Sorted evaluation points; the raw function only jumps at
            sample values, so the union of both samples is sufficient.
        method: ``"running_max"`` or ``"sort"``.

    Returns:
        MixtureCdf with raw and rearranged values.
    """
    if abs((w_pos - w_neg) - 1.0) > WEIGHT_TOLERANCE or w_pos <= 0 or w_neg < 0:
        raise WeightIdentityViolated(w_pos, w_neg)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("Mixture CDF grid must be non-empty")
    raw = w_pos * np.asarray(f_pos(grid), dtype=float)
    if w_neg > 0:
        raw = raw - w_neg * np.asarray(f_neg(grid), dtype=float)
    return MixtureCdf(
        grid=grid,
        raw=raw,
        rearranged=rearrange(raw, method),
        w_pos=float(w_pos),
        w_neg=float(w_neg),
    )


def invert_cdf(m: MixtureCdf, q: float, strict: bool = False) -> float:
    """Smallest grid point whose rearranged CDF value reaches q.

    A CDF that never reaches q is degenerate: the grid maximum is returned
    with a warning, or DegenerateCdf is raised when ``strict`` is set.
    """
    if not 0.0 < q < 1.0:
        raise QOutOfRange(q, "(0, 1)")
    idx = int(np.searchsorted(m.rearranged, q - 1e-12, side="left"))
    if idx >= m.grid.size:
        if strict:
            raise DegenerateCdf(q, float(m.rearranged[-1]))
        logger.warning(
            f"Mixture CDF never reaches {q} (max {m.rearranged[-1]:.4f}); using grid maximum"
        )
        return float(m.grid[-1])
    return float(m.grid[idx])


def union_grid(*samples: np.ndarray) -> np.ndarray:
    return np.unique(np.concatenate([np.asarray(s, dtype=float) for s in samples]))
