import numpy as np
import pytest

from simulation.dgp import SimulationDesign, draw_dgp
from utils.dataio import CELLS, Dataset


def random_dataset(seed: int, n: int = 160, ties: bool = False, one_sided: bool = False) -> Dataset:
    """Repeated cross-section with cell-specific outcome distributions.

    One guaranteed row per cell keeps every cell non-empty; the mediator
    depends strongly on treatment so the complier share stays well above
    any threshold.
    """
    rng = np.random.default_rng(seed)
    d = rng.integers(0, 2, n)
    t = rng.integers(0, 2, n)
    m = (rng.random(n) < 0.2 + 0.6 * d).astype(int)
    cells = [c for c in CELLS if not (one_sided and c[:2] == (0, 1))]
    d = np.concatenate([d, [c[0] for c in cells]])
    m = np.concatenate([m, [c[1] for c in cells]])
    t = np.concatenate([t, [c[2] for c in cells]])
    if one_sided:
        m[d == 0] = 0
    loc = rng.normal(0, 2, 8)
    scale = rng.uniform(0.5, 3.0, 8)
    key = d * 4 + m * 2 + t
    y = loc[key] + scale[key] * rng.standard_normal(key.size)
    if ties:
        y = np.round(y)
    return Dataset.from_arrays(y=y, d=d, m=m, t=t, design="repeated")


@pytest.fixture
def make_random_dataset():
    return random_dataset


@pytest.fixture(scope="session")
def linear_data() -> Dataset:
    return draw_dgp(SimulationDesign(link="identity", n=20000, reps=1, seed=11), 0)


@pytest.fixture
def write_csv(tmp_path):
    def _write(text: str, name: str = "data.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture
def panel_csv_text() -> str:
    """Two clusters per (d, m) combination, each observed in both periods."""
    lines = ["id,y,d,m,t,x"]
    cluster = 0
    for d in (0, 1):
        for m in (0, 1):
            for rep in range(2):
                cluster += 1
                for t in (0, 1):
                    y = 1.0 + d + 2 * m + 0.5 * t + 0.1 * rep
                    lines.append(f"c{cluster},{y},{d},{m},{t},{0.3 * cluster}")
    return "\n".join(lines) + "\n"
