"""Compartmentalized reservoir modelling: well clustering, multi-tank
material balance with inter-tank flow, ensemble history matching and
constrained forecasting."""

__version__ = "0.1.0"

from .aquifer import AquiferParams  # noqa: E402
from .forecast import ForecastProblem, run_forecast  # noqa: E402
from .history import HistoryProblem, SolverConfig, run_history  # noqa: E402
from .pvt import PvtTable  # noqa: E402
from .relperm import RelPermCurves  # noqa: E402
from .reservoir import Block, ForecastSchedule, HistorySchedule, ReservoirNetwork  # noqa: E402

__all__ = [
    "AquiferParams", "Block", "ForecastProblem", "ForecastSchedule", "HistoryProblem",
    "HistorySchedule", "PvtTable", "RelPermCurves", "ReservoirNetwork", "SolverConfig",
    "run_forecast", "run_history", "__version__",
]
