"""Brute-force true effects of a simulation design.

Units are classified by their mediator response: always-takers take the
mediator regardless of treatment (U + V > 0), never-takers never do
(1 + U + V <= 0), compliers take it only when treated. True effects are
averages of potential-outcome contrasts within these strata.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from simulation.dgp import SimulationDesign, draw_units
from utils.errors import InvalidConfig

logger = logging.getLogger(__name__)

MIN_ORACLE_DRAWS = 1_000_000
ORACLE_CHUNK = 1_000_000
ORACLE_STREAM = 2 ** 40

PO = Tuple[int, int]
POTENTIAL_OUTCOMES: Tuple[PO, ...] = ((0, 0), (0, 1), (1, 0), (1, 1))

# tag -> (group, treated potential outcome, comparison potential outcome)
CONTRASTS: Dict[str, Tuple[str, PO, PO]] = {
    "theta_n": ("n", (1, 0), (0, 0)),
    "theta_a": ("a", (1, 1), (0, 1)),
    "Delta_c": ("c", (1, 1), (0, 0)),
    "theta_c_1": ("c", (1, 1), (0, 1)),
    "theta_c_0": ("c", (1, 0), (0, 0)),
    "delta_c_1": ("c", (1, 1), (1, 0)),
    "delta_c_0": ("c", (0, 1), (0, 0)),
    "theta_10_1": ("d1_m0", (1, 0), (0, 0)),
    "theta_00_0": ("d0_m0", (1, 0), (0, 0)),
    "theta_01_0": ("d0_m1", (1, 1), (0, 1)),
    "theta_11_1": ("d1_m1", (1, 1), (0, 1)),
}


def _groups(d: np.ndarray, u: np.ndarray, v: np.ndarray) -> Dict[str, np.ndarray]:
    always = u + v > 0
    never = 1 + u + v <= 0
    complier = ~always & ~never
    m0 = always
    m1 = ~never
    return {
        "a": always,
        "c": complier,
        "n": never,
        "d1_m0": (d == 1) & ~m1,
        "d0_m0": (d == 0) & ~m0,
        "d0_m1": (d == 0) & m0,
        "d1_m1": (d == 1) & m1,
    }


@dataclass(frozen=True)
class TruthTable:
    values: Mapping[str, float]
    shares: Mapping[str, float]
    draws: int
    group_sizes: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        total = self.values["Delta_c"]
        tolerance = 1e-9 * max(1.0, abs(total))
        for a, b in (("theta_c_1", "delta_c_0"), ("theta_c_0", "delta_c_1")):
            if abs(self.values[a] + self.values[b] - total) > tolerance:
                raise ValueError(f"Oracle decomposition broken: {a} + {b} != Delta_c")

    def __getitem__(self, tag: str) -> float:
        return self.values[tag]


def true_effects_oracle(design: SimulationDesign, draws: int = MIN_ORACLE_DRAWS) -> TruthTable:
    """
    Average potential-outcome contrasts within strata over simulated units.

    Period-1 potential outcomes are link(index(d, m) + U). Group sums of
    each potential outcome are accumulated chunk by chunk, and every
    contrast is a difference of two group means, so the decompositions of
    the complier total effect hold exactly. Under the identity link the
    contrasts are constants and are returned exactly.

    Args:
        design: Simulation setting; its seed fixes the oracle draws.
        draws: Number of simulated units, at least one million.

    Returns:
        TruthTable with true effects and strata shares.
    """
    if draws < MIN_ORACLE_DRAWS:
        raise InvalidConfig(f"Oracle needs at least {MIN_ORACLE_DRAWS} draws", draws=draws)

    rng = design.rng(ORACLE_STREAM)
    sums: Dict[Tuple[str, PO], float] = {}
    counts: Dict[str, int] = {}
    remaining = draws
    while remaining > 0:
        size = min(ORACLE_CHUNK, remaining)
        remaining -= size
        d, u, v, _ = draw_units(design, rng, size)
        groups = _groups(d, u, v)
        outcomes = {po: design.link_fn(design.index(*po) + u) for po in POTENTIAL_OUTCOMES}
        for name, mask in groups.items():
            counts[name] = counts.get(name, 0) + int(mask.sum())
            for po, y in outcomes.items():
                sums[(name, po)] = sums.get((name, po), 0.0) + float(y[mask].sum())

    values: Dict[str, float] = {}
    for tag, (group, treated, comparison) in CONTRASTS.items():
        if design.link == "identity":
            values[tag] = float(design.index(*treated) - design.index(*comparison))
            continue
        n = counts[group]
        if n == 0:
            values[tag] = float("nan")
            continue
        values[tag] = sums[(group, treated)] / n - sums[(group, comparison)] / n

    shares = {f"p_{s}": counts[s] / draws for s in ("a", "c", "n")}
    logger.info(
        f"Oracle ({design.link}, {design.assignment}, {draws} draws): "
        + ", ".join(f"{k}={v:.4f}" for k, v in values.items())
    )
    return TruthTable(values=values, shares=shares, draws=draws, group_sizes=counts)
