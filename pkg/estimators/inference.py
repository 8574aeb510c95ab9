"""Cluster bootstrap standard errors, p-values and percentile intervals.

Each replicate draws from its own Philox stream spawned from the
configured seed, so the replicate draws do not depend on how replicates
are spread over workers.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Type, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import norm

from estimators.base_estimator import ALL_TAGS, DEFAULT_MIN_SHARE, BaseEstimator
from utils.dataio import Dataset, partition_cells, residualize_covariates
from utils.errors import CicError, InvalidConfig, TooManyFailedReplicates
from utils.progress_tracker import ProgressTracker

logger = logging.getLogger(__name__)

CLUSTER_MODES = ("auto", "cluster", "record")
SUMMARY_COLUMNS = ["estimand", "est", "se", "pval", "ci_low", "ci_high", "replications", "failed"]

Estimator = Callable[[Dataset], Mapping[str, float]]


@dataclass(frozen=True)
class BootstrapConfig:
    replications: int = 1999
    seed: int = 0
    cluster_mode: str = "auto"
    n_jobs: int = 1
    max_failure_share: float = 0.10
    chunk_size: int = 50
    ci_level: float = 0.95

    def __post_init__(self):
        if self.replications < 2:
            raise InvalidConfig("Bootstrap needs at least 2 replications", replications=self.replications)
        if self.cluster_mode not in CLUSTER_MODES:
            raise InvalidConfig(f"Unknown cluster mode '{self.cluster_mode}'", allowed=list(CLUSTER_MODES))
        if self.seed < 0:
            raise InvalidConfig("Seed must be non-negative", seed=self.seed)
        if not 0.0 <= self.max_failure_share < 1.0:
            raise InvalidConfig("max_failure_share must lie in [0, 1)", value=self.max_failure_share)
        if not 0.0 < self.ci_level < 1.0:
            raise InvalidConfig("ci_level must lie in (0, 1)", value=self.ci_level)


@dataclass(frozen=True)
class BootstrapResult:
    """Bootstrap summary of one estimand.

    ``se`` is the standard deviation of the successful replicate draws and
    ``p_value`` the two-sided normal-approximation p-value of point/se.
    ``failed`` counts replicates that failed outright plus those that gave
    no finite value for this estimand.
    """

    tag: str
    point: float
    se: float
    p_value: float
    draws: np.ndarray = field(repr=False)
    failed: int = 0
    ci_low: float = float("nan")
    ci_high: float = float("nan")

    @property
    def replications(self) -> int:
        return int(self.draws.shape[0])


def normal_p_value(point: float, se: float) -> float:
    """Two-sided p-value; a zero standard error gives 1 at a zero point and 0 otherwise."""
    if not np.isfinite(point) or not np.isfinite(se):
        return float("nan")
    if se == 0.0:
        return 1.0 if point == 0.0 else 0.0
    return float(min(1.0, 2.0 * norm.sf(abs(point) / se)))


@dataclass(frozen=True)
class EstimandProcedure:
    """Picklable estimation pipeline run on the full sample and on every replicate.

    Residualization and share estimation are redone inside each call, so a
    replicate repeats every data-dependent step of the point estimate.
    """

    estimator_cls: Type[BaseEstimator]
    tags: Tuple[str, ...] = ALL_TAGS
    quantiles: Tuple[float, ...] = ()
    min_share: float = DEFAULT_MIN_SHARE
    rearrangement: str = "running_max"
    residualize: bool = False

    def __call__(self, data: Dataset) -> Dict[str, float]:
        if self.residualize:
            data = residualize_covariates(data)
        estimator = self.estimator_cls(
            partition_cells(data, warn_ties=False),
            quantiles=self.quantiles,
            min_share=self.min_share,
            rearrangement=self.rearrangement,
        )
        values: Dict[str, float] = {}
        for tag in self.tags:
            values.update(estimator.estimate(tag).flatten())
        return values


@dataclass(frozen=True)
class ClusterIndex:
    """Rows grouped by resampling unit: ``order[starts[c]:starts[c] + sizes[c]]``."""

    order: np.ndarray
    starts: np.ndarray
    sizes: np.ndarray

    @property
    def n_clusters(self) -> int:
        return int(self.sizes.shape[0])

    @classmethod
    def build(cls, data: Dataset, mode: str = "auto") -> "ClusterIndex":
        if mode == "auto":
            mode = "cluster" if data.is_panel else "record"
        if mode == "record":
            codes = np.arange(data.n, dtype=np.int64)
        else:
            codes = data.cluster
        order = np.argsort(codes, kind="stable")
        _, starts, sizes = np.unique(codes[order], return_index=True, return_counts=True)
        return cls(order=order, starts=starts, sizes=sizes)

    def resample(self, rng: np.random.Generator) -> np.ndarray:
        """Draw clusters with replacement; every drawn cluster brings all of its rows."""
        picks = rng.integers(0, self.n_clusters, size=self.n_clusters)
        sizes = self.sizes[picks]
        offsets = np.arange(int(sizes.sum())) - np.repeat(np.cumsum(sizes) - sizes, sizes)
        return self.order[np.repeat(self.starts[picks], sizes) + offsets]


def replicate_rng(seed_seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_seq))


def _run_chunk(
    data: Dataset,
    estimator: Estimator,
    index: ClusterIndex,
    seeds: Sequence[np.random.SeedSequence],
) -> List[Optional[Dict[str, float]]]:
    results: List[Optional[Dict[str, float]]] = []
    for seed_seq in seeds:
        rows = index.resample(replicate_rng(seed_seq))
        try:
            results.append(dict(estimator(data.take(rows))))
        except CicError as e:
            logger.debug(f"Replicate dropped: {e.code}: {e.message}")
            results.append(None)
    return results


def cluster_bootstrap(
    data: Dataset,
    estimator: Estimator,
    cfg: Optional[BootstrapConfig] = None,
) -> Dict[str, BootstrapResult]:
    """
    Bootstrap every value the estimator returns.

    Args:
        data: Validated dataset.
        estimator: Callable mapping a Dataset to named point estimates. It
            must be picklable when ``cfg.n_jobs != 1``.
        cfg: Replications, seed, resampling unit and parallelism.

    Returns:
        Mapping from estimand name to BootstrapResult, in the estimator's order.

    Raises:
        TooManyFailedReplicates: When more than ``cfg.max_failure_share`` of
            the replicates fail.
    """
    cfg = cfg or BootstrapConfig()
    point = dict(estimator(data))
    index = ClusterIndex.build(data, cfg.cluster_mode)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.replications)
    chunks = [seeds[i:i + cfg.chunk_size] for i in range(0, cfg.replications, cfg.chunk_size)]
    logger.info(
        f"Bootstrapping {len(point)} estimands: {cfg.replications} replications over "
        f"{index.n_clusters} resampling units (n_jobs={cfg.n_jobs})"
    )

    tracker = ProgressTracker(cfg.replications, label="bootstrap")
    outcomes: List[Optional[Dict[str, float]]] = []
    parallel = Parallel(n_jobs=cfg.n_jobs, return_as="generator")
    for chunk_result in parallel(delayed(_run_chunk)(data, estimator, index, chunk) for chunk in chunks):
        outcomes.extend(chunk_result)
        tracker.update(len(chunk_result), failed=sum(r is None for r in chunk_result))

    successes = [r for r in outcomes if r is not None]
    failed = len(outcomes) - len(successes)
    if failed > cfg.max_failure_share * cfg.replications or len(successes) < 2:
        raise TooManyFailedReplicates(failed, cfg.replications, cfg.max_failure_share)
    if failed:
        logger.warning(f"{failed} of {cfg.replications} bootstrap replicates failed and were dropped")

    alpha = (1.0 - cfg.ci_level) / 2.0
    results: Dict[str, BootstrapResult] = {}
    for tag, estimate in point.items():
        draws = np.array([r.get(tag, np.nan) for r in successes], dtype=float)
        finite = np.isfinite(draws)
        missing = int(draws.size - finite.sum())
        if missing:
            logger.warning(f"{tag}: {missing} replicates gave no finite value and were dropped")
        draws = draws[finite]
        if draws.size < 2:
            se = low = high = float("nan")
        else:
            se = float(np.std(draws, ddof=1))
            low, high = (float(v) for v in np.percentile(draws, [100 * alpha, 100 * (1 - alpha)]))
        draws.setflags(write=False)
        results[tag] = BootstrapResult(
            tag=tag,
            point=float(estimate),
            se=se,
            p_value=normal_p_value(float(estimate), se),
            draws=draws,
            failed=failed + missing,
            ci_low=low,
            ci_high=high,
        )
    return results


def _sort_key(name: str) -> Tuple[int, float, str]:
    tag, _, q = name.partition("@")
    rank = ALL_TAGS.index(tag) if tag in ALL_TAGS else len(ALL_TAGS)
    return rank, float(q) if q else -1.0, tag


def summarize_bootstrap(
    results: Union[Mapping[str, BootstrapResult], Iterable[BootstrapResult]],
) -> pd.DataFrame:
    """One est/se/pval row per estimand in canonical order, quantile rows after their average."""
    items = list(results.values()) if isinstance(results, Mapping) else list(results)
    rows = [
        {
            "estimand": r.tag,
            "est": r.point,
            "se": r.se,
            "pval": r.p_value,
            "ci_low": r.ci_low,
            "ci_high": r.ci_high,
            "replications": r.replications,
            "failed": r.failed,
        }
        for r in sorted(items, key=lambda r: _sort_key(r.tag))
    ]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
