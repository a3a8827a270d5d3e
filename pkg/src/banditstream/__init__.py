"""Top-k bandit policies, synthetic environments and an experiment harness."""
from .core import (ArmStats, Environment, ObservationProcess, Policy, RoundLog, Trajectory, top_k)
from .numerics import derive_seed, make_rng

__version__ = "0.1.0"

__all__ = ["ArmStats", "Environment", "ObservationProcess", "Policy", "RoundLog", "Trajectory",
           "top_k", "derive_seed", "make_rng", "__version__"]
