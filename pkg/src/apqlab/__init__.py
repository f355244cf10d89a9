"""Multi-class single-server priority queues in heavy traffic and overload."""

from .analytic import (EquilibriumResult, WaitReport, ap_expected_waits, ap_heavy_traffic_limits,
                       ap_queue_fractions, joining_equilibrium, sp_expected_waits, total_queue_heavy_traffic)
from .core import (Accumulating, ClassSpec, HybridLex, ScaledAccumulating, ScenarioSpec, Static, SystemSpec,
                   ValidationError, validate)
from .des import SimStats, epsilon_sweep, replicate, run
from .fluid import FluidState, FluidTrajectory, ap_fluid_trajectory, ap_growth_rates, sp_fluid_trajectory

__version__ = "0.1.0"
