"""Exception hierarchy shared by the estimation pipeline and the CLI."""

from typing import Any, Dict, Optional


class CicError(Exception):
    """Base class for every error raised by the library.

    The class name doubles as the machine-readable ``code`` the CLI prints
    in JSON mode, and ``context`` carries the offending row, cell or column.
    """

    exit_code = 1

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = context or {}

    @property
    def code(self) -> str:
        return self.__class__.__name__

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": self.message, "context": self.context}


class ValidationError(CicError):
    """Input or configuration does not satisfy a precondition."""

    exit_code = 2


class EstimationError(CicError):
    """Input was valid but an estimand cannot be computed from it."""

    exit_code = 3


# Validation family

class MissingColumn(ValidationError):
    def __init__(self, column: str, available=()):
        super().__init__(
            f"Required column '{column}' not found in input",
            {"column": column, "available": list(available)},
        )


class NonBinaryCode(ValidationError):
    def __init__(self, column: str, row: int, value: Any):
        super().__init__(
            f"Column '{column}' must be coded 0/1, got {value!r} at row {row}",
            {"column": column, "row": row, "value": str(value)},
        )


class MalformedValue(ValidationError):
    def __init__(self, column: str, row: int, value: Any):
        super().__init__(
            f"Malformed numeric value {value!r} in column '{column}' at row {row}",
            {"column": column, "row": row, "value": str(value)},
        )


class EmptyCell(ValidationError):
    def __init__(self, d: int, m: int, t: int):
        super().__init__(
            f"No observations in cell (d={d}, m={m}, t={t})",
            {"d": d, "m": m, "t": t},
        )
        self.cell = (d, m, t)


class InconsistentPanel(ValidationError):
    def __init__(self, cluster_id: Any):
        super().__init__(
            f"Cluster {cluster_id} changes treatment or mediator status across periods",
            {"cluster_id": str(cluster_id)},
        )
        self.cluster_id = cluster_id


class RankDeficientDesign(ValidationError):
    def __init__(self, rank: int, columns: int):
        super().__init__(
            f"Covariate design matrix is rank deficient (rank {rank} < {columns} columns)",
            {"rank": rank, "columns": columns},
        )


class QOutOfRange(ValidationError):
    def __init__(self, q: float, bounds: str = "[0, 1]"):
        super().__init__(f"Probability {q} outside {bounds}", {"q": q, "bounds": bounds})


class WeightIdentityViolated(ValidationError):
    def __init__(self, w_pos: float, w_neg: float):
        super().__init__(
            f"Mixture weights must satisfy w_pos - w_neg = 1, got {w_pos} - {w_neg}",
            {"w_pos": w_pos, "w_neg": w_neg},
        )


class InvalidConfig(ValidationError):
    def __init__(self, message: str, **context: Any):
        super().__init__(message, context)


class NotPanel(ValidationError):
    def __init__(self):
        super().__init__("Attrition check requires panel data", {})


class EmptyGroup(ValidationError):
    def __init__(self, period: int, d: int):
        super().__init__(
            f"No observations with d={d} in period {period}", {"period": period, "d": d}
        )


# Estimation family

class WeakCompliers(EstimationError):
    def __init__(self, p_c: float, threshold: float):
        super().__init__(
            f"Complier share {p_c:.4f} below threshold {threshold}",
            {"p_c": p_c, "threshold": threshold},
        )


class NoAlwaysTakers(EstimationError):
    def __init__(self, p_a: float, threshold: float):
        super().__init__(
            f"no always-takers (share {p_a:.4f} below {threshold})",
            {"p_a": p_a, "threshold": threshold},
        )


class DegenerateCdf(EstimationError):
    def __init__(self, q: float, max_value: float):
        super().__init__(
            f"Rearranged CDF never reaches {q} (max {max_value:.4f})",
            {"q": q, "max_value": max_value},
        )


class TooManyFailedReplicates(EstimationError):
    def __init__(self, failed: int, total: int, threshold: float):
        super().__init__(
            f"{failed} of {total} bootstrap replicates failed (limit {threshold:.0%})",
            {"failed": failed, "total": total, "threshold": threshold},
        )
