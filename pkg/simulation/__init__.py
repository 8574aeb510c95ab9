from simulation.dgp import SimulationDesign, draw_dgp
from simulation.monte_carlo import MonteCarloReport, run_monte_carlo
from simulation.oracle import TruthTable, true_effects_oracle

__all__ = ["MonteCarloReport", "SimulationDesign", "TruthTable", "draw_dgp", "run_monte_carlo", "true_effects_oracle"]
