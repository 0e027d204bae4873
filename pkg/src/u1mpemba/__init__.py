"""Replica tensor-network and exact simulations of charge-conserving random circuits
with long-range gates, for the Renyi-2 entanglement asymmetry."""

__version__ = "0.1.0"

from .channel import (PairDistribution, build_averaged_two_site_channel,
                      monte_carlo_channel_check, sample_layer_pairs)
from .states import InitialStateSpec, build_initial_state
from .mps import ReplicaMPS, TruncationPolicy, apply_long_range_channel, evolve_layers
from .blockmps import BlockMPS
from .asymmetry import (AsymmetryTrace, build_dephased_boundary, build_swap_boundary,
                        purities)
from .analysis import find_mpemba_time, fit_power_law, z_theory
