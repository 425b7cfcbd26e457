"""Simulation of an IM-DD link equalized by a time-delayed complex perceptron (optical FIR filter)."""
from .channel import FiberSpec, NoiseSpec, add_noise, cd_penalty_analytic, cd_penalty_measured, propagate
from .detection import ElectricalTrace, align, find_alignment, photodetect, receiver_chain
from .metrics import ber, level_stats, loss_l1, loss_l2, thresholds
from .pnn import PnnLayout, PnnWeights, ideal_phases, perturb_delays, required_taps
from .scenario import Link, Scenario, ScenarioError, load_scenario
from .waveform import ComplexEnvelope, SymbolSequence, generate_prbs, map_pam, modulate

__version__ = "0.1.0"
