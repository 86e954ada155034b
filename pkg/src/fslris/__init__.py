"""Federated spectrum learning over RIS-aided uplinks: simulator and oracles."""
from .association import Matching, algorithm1_one_to_one, algorithm2_one_to_many, associate
from .bandwidth import Allocation, allocate_bandwidth, solve_bandwidth
from .channel import ChannelSet, generate_channels, rate, snr
from .flsim import RoundReport, run_experiment, run_round
from .kernels import BACKEND
from .ris import PhaseConfig, optimal_phases, phases_for_matching
from .scenario import Scenario, load_scenario

__all__ = [
    "Allocation", "BACKEND", "ChannelSet", "Matching", "PhaseConfig", "RoundReport", "Scenario",
    "algorithm1_one_to_one", "algorithm2_one_to_many", "allocate_bandwidth", "associate",
    "generate_channels", "load_scenario", "optimal_phases", "phases_for_matching", "rate",
    "run_experiment", "run_round", "snr", "solve_bandwidth",
]
