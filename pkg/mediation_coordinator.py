#!/usr/bin/env python3
"""Mediation Coordinator - runs the estimate, simulate and diagnose pipelines."""

import logging
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from estimators import ESTIMATORS
from estimators.base_estimator import ALL_TAGS, TAG_DESCRIPTIONS, validate_quantiles
from estimators.diagnostics import (
    attrition_check,
    balance_test,
    describe_outcomes,
    exclusion_restriction_test,
    pretrend_implication_test,
)
from estimators.inference import BootstrapConfig, EstimandProcedure, cluster_bootstrap
from simulation.dgp import SimulationDesign
from simulation.monte_carlo import DEFAULT_SUITE, run_monte_carlo
from utils.dataio import CELLS, ColumnSchema, Dataset, load_dataset, partition_cells, residualize_covariates
from utils.edist import REARRANGEMENT_METHODS
from utils.errors import InvalidConfig
from utils.report_writer import FORMATS

logger = logging.getLogger(__name__)

COMMANDS = ("estimate", "simulate", "diagnose")
DESIGNS = ("auto", "panel", "repeated")
SKIPPED_NO_ALWAYS_TAKERS = "skipped: no always-takers"


def _as_list(value: Any) -> List[str]:
    if value is None:
        return []
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return [str(v) for v in value]


def _as_int(name: str, value: Any) -> int:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise InvalidConfig(f"Setting '{name}' must be an integer, got {value!r}", setting=name)
    if not number.is_integer():
        raise InvalidConfig(f"Setting '{name}' must be an integer, got {value!r}", setting=name)
    return int(number)


def _as_float(name: str, value: Any) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise InvalidConfig(f"Setting '{name}' must be a number, got {value!r}", setting=name)


def _as_bool(name: str, value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise InvalidConfig(f"Setting '{name}' must be a boolean, got {value!r}", setting=name)


def _choice(name: str, value: Any, allowed: Sequence[str]) -> str:
    text = str(value)
    if text not in allowed:
        raise InvalidConfig(f"Setting '{name}' must be one of {list(allowed)}, got {text!r}", setting=name)
    return text


class RunConfig:
    """Validated settings for one command, built from the merged settings dict."""

    def __init__(self, command: str, settings: Mapping[str, Any]):
        self.command = _choice("command", command, COMMANDS)
        self.input_path: Optional[str] = settings.get("input")
        self.output: Optional[str] = settings.get("output")
        self.format = _choice("format", settings.get("format", "tsv"), FORMATS)
        self.log_level = str(settings.get("log_level", "INFO")).upper()

        self.schema = ColumnSchema(
            cluster=str(settings["cluster"]),
            outcome=str(settings["outcome"]),
            treatment=str(settings["treatment"]),
            mediator=str(settings["mediator"]),
            time=str(settings["time"]),
            covariates=tuple(_as_list(settings.get("covariates"))),
        )
        self.design = _choice("design", settings.get("design", "auto"), DESIGNS)

        effects = _as_list(settings.get("effects", "all"))
        if not effects or effects == ["all"]:
            effects = list(ALL_TAGS)
        unknown = [tag for tag in effects if tag not in ALL_TAGS]
        if unknown:
            raise InvalidConfig(f"Unknown estimands {unknown}", known=list(ALL_TAGS))
        self.effects: Tuple[str, ...] = tuple(effects)
        self.quantiles = validate_quantiles([_as_float("quantiles", q) for q in _as_list(settings.get("quantiles"))])
        self.min_share = _as_float("min_share", settings.get("min_share", 0.01))
        self.rearrangement = _choice("rearrangement", settings.get("rearrangement", "running_max"), REARRANGEMENT_METHODS)
        self.include_did = _as_bool("did", settings.get("did", False))

        self.seed = _as_int("seed", settings.get("seed", 1))
        self.jobs = _as_int("jobs", settings.get("jobs", 1))
        self.replications = _as_int("bootstrap", settings.get("bootstrap", 1999))
        if self.replications == 0:
            self.bootstrap: Optional[BootstrapConfig] = None
        else:
            self.bootstrap = BootstrapConfig(replications=self.replications, seed=self.seed, n_jobs=self.jobs)

        self.simulation: Optional[SimulationDesign] = None
        if self.command == "simulate":
            self.simulation = SimulationDesign(
                link=str(settings.get("link", "identity")),
                assignment=str(settings.get("assignment", "random")),
                n=_as_int("n", settings.get("n", 4000)),
                reps=_as_int("reps", settings.get("reps", 1000)),
                seed=self.seed,
                oracle_draws=_as_int("oracle_draws", settings.get("oracle_draws", 10_000_000)),
            )
        elif not self.input_path:
            raise InvalidConfig(f"'{self.command}' needs --input", setting="input")

    def estimator_names(self) -> List[str]:
        return ["cic", "did"] if self.include_did else ["cic"]

    def to_dict(self) -> Dict[str, Any]:
        """Settings echoed into JSON reports; excludes anything machine-specific like --jobs."""
        echo: Dict[str, Any] = {
            "command": self.command,
            "effects": list(self.effects),
            "quantiles": list(self.quantiles),
            "bootstrap": self.replications,
            "seed": self.seed,
            "did": self.include_did,
            "min_share": self.min_share,
            "rearrangement": self.rearrangement,
        }
        if self.simulation is not None:
            sim = self.simulation
            echo.update({"link": sim.link, "assignment": sim.assignment, "n": sim.n, "reps": sim.reps,
                         "oracle_draws": sim.oracle_draws})
        else:
            echo.update({
                "columns": {
                    "cluster": self.schema.cluster,
                    "outcome": self.schema.outcome,
                    "treatment": self.schema.treatment,
                    "mediator": self.schema.mediator,
                    "time": self.schema.time,
                },
                "covariates": list(self.schema.covariates),
                "design": self.design,
            })
        return echo


class MediationCoordinator:
    """Coordinates data loading, estimation, inference and reporting for one run."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.data: Optional[Dataset] = None

    def load_data(self) -> Dataset:
        if self.data is None:
            self.data = load_dataset(self.config.input_path, self.config.schema, design=self.config.design)
        return self.data

    def _data_summary(self, data: Dataset) -> Dict[str, Any]:
        return {
            "n": data.n,
            "design": data.design,
            "dropped_rows": data.dropped_rows,
            "one_sided": data.one_sided,
            "covariates": list(data.covariate_names),
            "cell_counts": [
                {"d": d, "m": m, "t": t, "count": data.cell_counts()[(d, m, t)]} for d, m, t in CELLS
            ],
        }

    def _procedure(self, name: str, tags: Sequence[str], data: Dataset) -> EstimandProcedure:
        return EstimandProcedure(
            estimator_cls=ESTIMATORS[name],
            tags=tuple(tags),
            quantiles=self.config.quantiles,
            min_share=self.config.min_share,
            rearrangement=self.config.rearrangement,
            residualize=bool(data.covariate_names),
        )

    def estimate_with(self, name: str, data: Dataset) -> Tuple[List[Dict], List[Dict], Dict[str, float]]:
        """
        Point estimates, bootstrap statistics and quantile curves of one estimator.

        Returns:
            (estimate rows, quantile curve rows, strata shares)
        """
        cfg = self.config
        working = residualize_covariates(data) if data.covariate_names else data
        estimator = ESTIMATORS[name](
            partition_cells(working),
            quantiles=cfg.quantiles,
            min_share=cfg.min_share,
            rearrangement=cfg.rearrangement,
        )
        estimates = estimator.estimate_many(cfg.effects, skip_unavailable=True)
        shares = estimator.shares()

        stats: Dict[str, Any] = {}
        if cfg.bootstrap is not None and estimates:
            logger.info(f"Bootstrapping {name} estimands ({cfg.bootstrap.replications} replications)")
            stats = cluster_bootstrap(data, self._procedure(name, list(estimates), data), cfg.bootstrap)

        rows: List[Dict] = []
        curves: List[Dict] = []
        for tag in cfg.effects:
            if tag not in estimates:
                rows.append({"estimator": name, "estimand": tag, "est": None, "se": None, "pval": None,
                             "ci_low": None, "ci_high": None, "status": SKIPPED_NO_ALWAYS_TAKERS})
                continue
            result = stats.get(tag)
            rows.append({
                "estimator": name,
                "estimand": tag,
                "est": estimates[tag].average,
                "se": result.se if result else None,
                "pval": result.p_value if result else None,
                "ci_low": result.ci_low if result else None,
                "ci_high": result.ci_high if result else None,
                "status": "ok",
            })
            for q, effect in estimates[tag].quantile_curve:
                point = stats.get(f"{tag}@{q:g}")
                curves.append({
                    "estimator": name,
                    "estimand": tag,
                    "q": q,
                    "effect": effect,
                    "se": point.se if point else None,
                    "pval": point.p_value if point else None,
                })
        share_values = {"p_n": shares.p_n, "p_c": shares.p_c, "p_a": shares.p_a}
        return rows, curves, share_values

    def run_estimate(self) -> Dict[str, Any]:
        data = self.load_data()
        rows: List[Dict] = []
        curves: List[Dict] = []
        shares: Dict[str, float] = {}
        for name in self.config.estimator_names():
            est_rows, est_curves, shares = self.estimate_with(name, data)
            rows.extend(est_rows)
            curves.extend(est_curves)
        return {
            "command": "estimate",
            "config": self.config.to_dict(),
            "data": self._data_summary(data),
            "shares": shares,
            "estimates": rows,
            "quantile_curves": curves,
            "descriptions": {tag: TAG_DESCRIPTIONS[tag] for tag in self.config.effects},
        }

    def run_simulate(self) -> Dict[str, Any]:
        design = self.config.simulation
        report = run_monte_carlo(design, suite=DEFAULT_SUITE, n_jobs=self.config.jobs, min_share=self.config.min_share)
        return {
            "command": "simulate",
            "config": self.config.to_dict(),
            "truth": dict(report.truth.values),
            "oracle_shares": dict(report.truth.shares),
            "monte_carlo": report.to_frame().to_dict(orient="records"),
        }

    def run_diagnose(self) -> Dict[str, Any]:
        data = self.load_data()
        rows = [balance_test(data, 0).to_dict(), balance_test(data, 1).to_dict(),
                pretrend_implication_test(data).to_dict()]
        if data.is_panel:
            rows.append(attrition_check(data).to_dict())
        else:
            rows.append({"name": "attrition", "estimate": None, "pval": None, "sd": None, "se": None,
                         "verdict": "n/a"})

        if self.config.bootstrap is None:
            logger.warning("Bootstrap disabled: exclusion-restriction tests skipped")
        else:
            for report in exclusion_restriction_test(
                data, self.config.bootstrap, min_share=self.config.min_share, residualize=bool(data.covariate_names)
            ):
                rows.append(report.to_dict())
        return {
            "command": "diagnose",
            "config": self.config.to_dict(),
            "data": self._data_summary(data),
            "diagnostics": rows,
            "descriptives": describe_outcomes(data).to_dict(orient="records"),
        }

    def run(self) -> Dict[str, Any]:
        runners = {"estimate": self.run_estimate, "simulate": self.run_simulate, "diagnose": self.run_diagnose}
        logger.info(f"Running {self.config.command}")
        return runners[self.config.command]()


def tsv_sections(payload: Mapping[str, Any]) -> Dict[str, List[Dict]]:
    """Tables of a report payload, in the order they are printed."""
    command = payload["command"]
    if command == "estimate":
        return {
            "estimates": payload["estimates"],
            "quantile_curves": payload["quantile_curves"],
            "shares": [{"share": k, "value": v} for k, v in payload["shares"].items()],
        }
    if command == "simulate":
        return {"monte_carlo": payload["monte_carlo"]}
    return {"diagnostics": payload["diagnostics"], "descriptives": payload["descriptives"]}
