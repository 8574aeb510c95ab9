"""Loading, validation and cell partitioning of two-period treatment/mediator data."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.edist import tied_fraction
from utils.errors import (
    EmptyCell,
    InconsistentPanel,
    InvalidConfig,
    MalformedValue,
    MissingColumn,
    NonBinaryCode,
    RankDeficientDesign,
)

logger = logging.getLogger(__name__)

Cell = Tuple[int, int, int]

# (d, m, t) in lexical order; every report and check walks cells in this order
CELLS: Tuple[Cell, ...] = tuple((d, m, t) for d in (0, 1) for m in (0, 1) for t in (0, 1))

PANEL = "panel"
REPEATED = "repeated"
DESIGNS = (PANEL, REPEATED)

TIE_WARNING_FRACTION = 0.10


@dataclass(frozen=True)
class ColumnSchema:
    """Maps the roles of the estimator to column names in the input file."""

    cluster: str = "id"
    outcome: str = "y"
    treatment: str = "d"
    mediator: str = "m"
    time: str = "t"
    covariates: Tuple[str, ...] = ()

    @property
    def required(self) -> Tuple[str, ...]:
        return (self.cluster, self.outcome, self.treatment, self.mediator, self.time)


@dataclass(frozen=True)
class ObservationRecord:
    """One unit observed in one period."""

    cluster_id: Any
    y: float
    d: int
    m: int
    t: int
    covariates: Tuple[float, ...] = ()

    def __post_init__(self):
        for name in ("d", "m", "t"):
            value = getattr(self, name)
            if value not in (0, 1):
                raise NonBinaryCode(name, -1, value)
        if not np.isfinite(self.y):
            raise MalformedValue("y", -1, self.y)


@dataclass(frozen=True)
class Dataset:
    """Column-oriented, validated collection of observation records.

    Arrays are marked read-only on construction so a Dataset can be shared
    between bootstrap workers without copying.
    """

    cluster: np.ndarray
    y: np.ndarray
    d: np.ndarray
    m: np.ndarray
    t: np.ndarray
    covariates: np.ndarray
    design: str = REPEATED
    cluster_labels: np.ndarray = field(default_factory=lambda: np.array([], dtype=object))
    covariate_names: Tuple[str, ...] = ()
    dropped_rows: int = 0
    one_sided: bool = False

    def __post_init__(self):
        for name in ("cluster", "y", "d", "m", "t", "covariates"):
            getattr(self, name).setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def is_panel(self) -> bool:
        return self.design == PANEL

    def records(self) -> Iterator[ObservationRecord]:
        labels = self.cluster_labels
        for i in range(self.n):
            code = int(self.cluster[i])
            yield ObservationRecord(
                cluster_id=labels[code] if code < len(labels) else code,
                y=float(self.y[i]),
                d=int(self.d[i]),
                m=int(self.m[i]),
                t=int(self.t[i]),
                covariates=tuple(float(x) for x in self.covariates[i]),
            )

    def cell_counts(self) -> Dict[Cell, int]:
        key = self.d * 4 + self.m * 2 + self.t
        counts = np.bincount(key, minlength=8)
        return {cell: int(counts[i]) for i, cell in enumerate(CELLS)}

    def take(self, rows: np.ndarray) -> "Dataset":
        """Subset (or resample) rows, keeping cluster codes of the source rows."""
        subset = Dataset(
            cluster=self.cluster[rows],
            y=self.y[rows],
            d=self.d[rows],
            m=self.m[rows],
            t=self.t[rows],
            covariates=self.covariates[rows],
            design=self.design,
            cluster_labels=self.cluster_labels,
            covariate_names=self.covariate_names,
            dropped_rows=0,
            one_sided=self.one_sided,
        )
        check_cells(subset.cell_counts(), allow_one_sided=self.one_sided)
        return subset

    def with_outcome(self, y: np.ndarray) -> "Dataset":
        return Dataset(
            cluster=self.cluster,
            y=np.asarray(y, dtype=float),
            d=self.d,
            m=self.m,
            t=self.t,
            covariates=self.covariates,
            design=self.design,
            cluster_labels=self.cluster_labels,
            covariate_names=self.covariate_names,
            dropped_rows=self.dropped_rows,
            one_sided=self.one_sided,
        )

    @classmethod
    def from_arrays(
        cls,
        y: Sequence[float],
        d: Sequence[int],
        m: Sequence[int],
        t: Sequence[int],
        cluster: Optional[Sequence[Any]] = None,
        covariates: Optional[np.ndarray] = None,
        design: str = "auto",
        covariate_names: Sequence[str] = (),
        dropped_rows: int = 0,
    ) -> "Dataset":
        """Validate in-memory columns and build a Dataset.

        Args:
            y: Outcomes.
            d, m, t: Treatment, mediator and period codes (0/1).
            cluster: Cluster identifiers; defaults to one cluster per row.
            covariates: Optional ``(n, k)`` matrix.
            design: ``"panel"``, ``"repeated"`` or ``"auto"``.
            covariate_names: Names of the covariate columns.
            dropped_rows: Rows removed upstream for missing values.

        Returns:
            Validated Dataset.
        """
        y_arr = np.asarray(y, dtype=float)
        n = y_arr.shape[0]
        codes = {}
        for name, values in (("d", d), ("m", m), ("t", t)):
            arr = np.asarray(values)
            bad = ~np.isin(arr, (0, 1))
            if bad.any():
                row = int(np.argmax(bad))
                raise NonBinaryCode(name, row, arr[row])
            codes[name] = arr.astype(np.int8)
        if not np.all(np.isfinite(y_arr)):
            row = int(np.argmax(~np.isfinite(y_arr)))
            raise MalformedValue("y", row, y_arr[row])

        if cluster is None:
            cluster_codes = np.arange(n, dtype=np.int64)
            labels = cluster_codes.astype(object)
        else:
            cluster_codes, labels = pd.factorize(pd.Series(list(cluster)), sort=True)
            cluster_codes = cluster_codes.astype(np.int64)
            labels = np.asarray(labels, dtype=object)

        if covariates is None:
            cov = np.empty((n, 0), dtype=float)
        else:
            cov = np.asarray(covariates, dtype=float).reshape(n, -1)

        resolved = _resolve_design(design, cluster_codes, codes["t"])
        if resolved == PANEL:
            _check_panel(cluster_codes, labels, codes["d"], codes["m"])

        counts = np.bincount(codes["d"] * 4 + codes["m"] * 2 + codes["t"], minlength=8)
        one_sided = check_cells({cell: int(counts[i]) for i, cell in enumerate(CELLS)})

        return cls(
            cluster=cluster_codes,
            y=y_arr,
            d=codes["d"],
            m=codes["m"],
            t=codes["t"],
            covariates=cov,
            design=resolved,
            cluster_labels=labels,
            covariate_names=tuple(covariate_names),
            dropped_rows=dropped_rows,
            one_sided=one_sided,
        )


@dataclass(frozen=True)
class CellPartition:
    """Sorted outcome vectors for the eight (d, m, t) cells."""

    cells: Mapping[Cell, np.ndarray]
    one_sided: bool = False

    @property
    def counts(self) -> Dict[Cell, int]:
        return {cell: int(values.shape[0]) for cell, values in self.cells.items()}

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def values(self, d: int, m: int, t: int) -> np.ndarray:
        return self.cells[(d, m, t)]

    def period_values(self, d: int, t: int) -> np.ndarray:
        """Outcomes of treatment arm ``d`` in period ``t``, pooled over the mediator."""
        return np.sort(np.concatenate([self.cells[(d, 0, t)], self.cells[(d, 1, t)]]))


def check_cells(counts: Mapping[Cell, int], allow_one_sided: bool = True) -> bool:
    """Reject empty cells; return True for a one-sided non-compliance layout.

    One-sided layouts have both (d=0, m=1) cells empty and everything else
    populated: the control arm has no access to the mediator.
    """
    one_sided = counts[(0, 1, 0)] == 0 and counts[(0, 1, 1)] == 0
    for cell in CELLS:
        if counts[cell] > 0:
            continue
        if allow_one_sided and one_sided and cell[:2] == (0, 1):
            continue
        raise EmptyCell(*cell)
    if one_sided:
        logger.info("One-sided non-compliance: no observations with d=0, m=1")
    return one_sided


def _resolve_design(design: str, cluster: np.ndarray, t: np.ndarray) -> str:
    if design in DESIGNS:
        return design
    if design != "auto":
        raise InvalidConfig(f"Unknown design '{design}'", design=design)
    in_both = np.intersect1d(cluster[t == 0], cluster[t == 1])
    return PANEL if in_both.size > 0 else REPEATED


def _check_panel(cluster: np.ndarray, labels: np.ndarray, d: np.ndarray, m: np.ndarray):
    status = pd.DataFrame({"cluster": cluster, "dm": d * 2 + m})
    varying = status.groupby("cluster")["dm"].nunique()
    bad = varying[varying > 1]
    if not bad.empty:
        raise InconsistentPanel(labels[int(bad.index[0])])


def load_dataset(
    path,
    schema: Optional[ColumnSchema] = None,
    design: str = "auto",
) -> Dataset:
    """
    Read a CSV file and validate it into a Dataset.

    Rows with a missing outcome, treatment, mediator, period, cluster id or
    covariate are dropped and counted. Any other malformed field is a hard
    error that names the offending line of the file (the header is line 1).

    Args:
        path: CSV file with a header row, UTF-8 encoded.
        schema: Column-name mapping; defaults to id,y,d,m,t.
        design: ``"panel"``, ``"repeated"`` or ``"auto"`` (panel when some
            cluster id appears in both periods).

    Returns:
        A validated Dataset.
    """
    schema = schema or ColumnSchema()
    path = Path(path)
    if not path.exists():
        raise InvalidConfig(f"Input file not found: {path}", path=str(path))

    frame = pd.read_csv(path, dtype=str, encoding="utf-8", skipinitialspace=True)
    for column in schema.required + tuple(schema.covariates):
        if column not in frame.columns:
            raise MissingColumn(column, frame.columns)

    line = pd.Series(np.arange(len(frame)) + 2, index=frame.index)
    numeric_columns = (schema.outcome, schema.treatment, schema.mediator, schema.time) + tuple(
        schema.covariates
    )
    parsed: Dict[str, pd.Series] = {}
    for column in numeric_columns:
        raw = frame[column].str.strip().replace("", np.nan)
        values = pd.to_numeric(raw, errors="coerce")
        malformed = raw.notna() & (values.isna() | ~np.isfinite(values.fillna(0.0)))
        if malformed.any():
            first = malformed.idxmax()
            raise MalformedValue(column, int(line[first]), raw[first])
        parsed[column] = values

    cluster_raw = frame[schema.cluster].str.strip().replace("", np.nan)
    missing = cluster_raw.isna()
    for values in parsed.values():
        missing |= values.isna()
    dropped = int(missing.sum())
    if dropped:
        logger.info(f"Dropped {dropped} rows with missing values")

    keep = ~missing
    for column in (schema.treatment, schema.mediator, schema.time):
        values = parsed[column][keep]
        bad = ~values.isin((0, 1))
        if bad.any():
            first = bad.idxmax()
            raise NonBinaryCode(column, int(line[first]), frame[column][first])

    covariates = None
    if schema.covariates:
        covariates = np.column_stack([parsed[c][keep].to_numpy(dtype=float) for c in schema.covariates])

    data = Dataset.from_arrays(
        y=parsed[schema.outcome][keep].to_numpy(dtype=float),
        d=parsed[schema.treatment][keep].to_numpy().astype(int),
        m=parsed[schema.mediator][keep].to_numpy().astype(int),
        t=parsed[schema.time][keep].to_numpy().astype(int),
        cluster=cluster_raw[keep].tolist(),
        covariates=covariates,
        design=design,
        covariate_names=schema.covariates,
        dropped_rows=dropped,
    )
    logger.info(f"Loaded {data.n} observations from {path} ({data.design} design)")
    return data


def residualize_covariates(data: Dataset) -> Dataset:
    """Purge the linear association between covariates and the outcome.

    A single pooled least-squares fit (both periods, all cells) of y on an
    intercept and the covariates; outcomes become grand mean + residual.
    """
    k = data.covariates.shape[1]
    if k == 0:
        raise InvalidConfig("Residualization requested but no covariates are present")
    design = np.column_stack([np.ones(data.n), data.covariates])
    rank = int(np.linalg.matrix_rank(design))
    if rank < design.shape[1]:
        raise RankDeficientDesign(rank, design.shape[1])
    beta, *_ = np.linalg.lstsq(design, data.y, rcond=None)
    residuals = data.y - design @ beta
    logger.debug(f"Covariate coefficients: {beta[1:]}")
    return data.with_outcome(data.y.mean() + residuals)


def partition_cells(data: Dataset, warn_ties: bool = True) -> CellPartition:
    """Split outcomes into the eight (d, m, t) cells, each sorted ascending."""
    key = data.d.astype(np.int64) * 4 + data.m * 2 + data.t
    order = np.lexsort((data.y, key))
    sorted_y = data.y[order]
    bounds = np.concatenate([[0], np.cumsum(np.bincount(key, minlength=8))])
    cells = {}
    for i, cell in enumerate(CELLS):
        values = sorted_y[bounds[i]:bounds[i + 1]]
        values.setflags(write=False)
        cells[cell] = values
        if warn_ties and values.size and tied_fraction(values) > TIE_WARNING_FRACTION:
            logger.warning(
                f"Cell {cell}: {tied_fraction(values):.0%} of outcomes are ties; "
                "continuity of the outcome is doubtful"
            )
    return CellPartition(cells=cells, one_sided=data.one_sided)
