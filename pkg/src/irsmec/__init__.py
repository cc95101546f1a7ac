"""Energy-minimal binary offloading for IRS-aided mobile edge computing.

Modules
-------
model
    Device and system constants, energy/rate formulas, solution checks.
channel
    Fading channels, path loss and IRS phase design.
solvers
    Time allocation, greedy, penalty/BCD and enumeration solvers.
scenario
    Geometry, device placement and channel draws.
experiments
    Monte Carlo trials, sweeps and result tables.
cli
    The ``irsmec`` command.
"""

from .channel import ChannelSet, EffectiveLink, PathLossParams
from .model import DeviceParams, OffloadSolution, SystemParams, evaluate_solution
from .scenario import Geometry, ScenarioConfig
from .solvers import enumerate_solve, greedy_solve, penalty_solve, solve_time_allocation

__all__ = [
    "ChannelSet",
    "DeviceParams",
    "EffectiveLink",
    "Geometry",
    "OffloadSolution",
    "PathLossParams",
    "ScenarioConfig",
    "SystemParams",
    "enumerate_solve",
    "evaluate_solution",
    "greedy_solve",
    "penalty_solve",
    "solve_time_allocation",
]

__version__ = "0.1.0"
