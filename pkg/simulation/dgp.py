"""Two-period data-generating processes with a binary treatment and mediator.

Every unit draws its period T, treatment D, unobservables U ~ Unif(-1, 1)
and V ~ N(0, 1), takes the mediator M = I{D + U + V > 0} and shows

    Y = link((c0 + cd*D + cm*M + cdm*D*M) * T + U)

Under selective assignment D = I{U + Q > 0} with Q ~ N(0, 1) instead of a
fair coin, so treatment depends on the outcome unobservable.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from typing_extensions import Literal

from utils.dataio import REPEATED, Dataset
from utils.errors import InvalidConfig

logger = logging.getLogger(__name__)

Link = Literal["identity", "exponential"]
Assignment = Literal["random", "selective"]

LINKS = ("identity", "exponential")
LINK_ALIASES = {"exp": "exponential", "linear": "identity"}
ASSIGNMENTS = ("random", "selective")
DEFAULT_COEFFICIENTS: Tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
MIN_SAMPLE_SIZE = 100


@dataclass(frozen=True)
class SimulationDesign:
    """One simulation setting.

    ``coefficients`` are (c0, cd, cm, cdm) of the structural index; zeroing
    some of them gives the modified designs used to check test size.
    """

    link: Link = "identity"
    assignment: Assignment = "random"
    n: int = 4000
    reps: int = 1000
    seed: int = 1
    coefficients: Tuple[float, float, float, float] = DEFAULT_COEFFICIENTS
    oracle_draws: int = 10_000_000

    def __post_init__(self):
        object.__setattr__(self, "link", LINK_ALIASES.get(self.link, self.link))
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.link not in LINKS:
            raise InvalidConfig(f"Unknown link '{self.link}'", allowed=list(LINKS))
        if self.assignment not in ASSIGNMENTS:
            raise InvalidConfig(f"Unknown assignment '{self.assignment}'", allowed=list(ASSIGNMENTS))
        if self.n < MIN_SAMPLE_SIZE:
            raise InvalidConfig(f"Sample size must be at least {MIN_SAMPLE_SIZE}", n=self.n)
        if self.reps < 1:
            raise InvalidConfig("Need at least one Monte Carlo repetition", reps=self.reps)
        if self.seed < 0:
            raise InvalidConfig("Seed must be non-negative", seed=self.seed)
        if len(self.coefficients) != 4:
            raise InvalidConfig("Expected four structural coefficients", coefficients=list(self.coefficients))

    @property
    def selective(self) -> bool:
        return self.assignment == "selective"

    @property
    def link_fn(self) -> Callable[[np.ndarray], np.ndarray]:
        return np.exp if self.link == "exponential" else (lambda x: x)

    def index(self, d, m):
        """Structural index c0 + cd*d + cm*m + cdm*d*m (period-1 shift)."""
        c0, cd, cm, cdm = self.coefficients
        return c0 + cd * d + cm * m + cdm * d * m

    def rng(self, stream: int) -> np.random.Generator:
        """Independent Philox stream for one repetition (or the oracle)."""
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=(stream,))))


def draw_units(design: SimulationDesign, rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Draw (D, U, V, T) for n units in a fixed order."""
    t = rng.integers(0, 2, size=n, dtype=np.int8)
    u = rng.uniform(-1.0, 1.0, size=n)
    v = rng.standard_normal(n)
    if design.selective:
        q = rng.standard_normal(n)
        d = (u + q > 0).astype(np.int8)
    else:
        d = rng.integers(0, 2, size=n, dtype=np.int8)
    return d, u, v, t


def draw_dgp(design: SimulationDesign, rep_index: int) -> Dataset:
    """
    Draw one repeated cross-section of ``design.n`` units.

    Args:
        design: Simulation setting.
        rep_index: Repetition number; together with the seed it fixes the draw.

    Returns:
        Dataset with one row per unit observed in its drawn period.
    """
    d, u, v, t = draw_units(design, design.rng(rep_index), design.n)
    m = (d + u + v > 0).astype(np.int8)
    y = design.link_fn(design.index(d, m) * t + u)
    return Dataset.from_arrays(y=y, d=d, m=m, t=t, design=REPEATED)
