"""Goodput and energy-efficiency model of 802.11a DCF links, with a
frame-level simulator for joint rate adaptation and transmit power control."""

__version__ = "0.1.0"

from .phy import ChannelModel, PhyMode, mode_by_rate, mode_table, path_loss, per, snr_from_txp
from .dcf import TxSetup, expected_delay, goodput, optimal_goodput
from .energy import DeviceProfile, builtin_profiles, efficiency, expected_energy, fit_profile, get_profile
from .analysis import SweepGrid, efficiency_vs_optimal_goodput, envelope_sweep, sensitivity_scan
from .algorithms import ALGORITHMS, Decision, TxFeedback, make_controller
from .sim import ScenarioConfig, conservativeness_index, run_scenario, summarize_runs

__all__ = [
    "ChannelModel", "PhyMode", "mode_by_rate", "mode_table", "path_loss", "per", "snr_from_txp",
    "TxSetup", "expected_delay", "goodput", "optimal_goodput",
    "DeviceProfile", "builtin_profiles", "efficiency", "expected_energy", "fit_profile", "get_profile",
    "SweepGrid", "efficiency_vs_optimal_goodput", "envelope_sweep", "sensitivity_scan",
    "ALGORITHMS", "Decision", "TxFeedback", "make_controller",
    "ScenarioConfig", "conservativeness_index", "run_scenario", "summarize_runs",
]
