"""Swap-based gossip peer-sampler: simulator, oracle, and analysis toolkit."""

from .analysis import (BoundsInput, Histogram, KsResult, bound_ip_mixing,
                       bound_rw_mixing, bound_sample_convergence, ecdf,
                       frequency_counts, ks_uniform_test, repetitions_needed,
                       tv_distance)
from .clocks import (ClockEnsemble, PrngState, SharedClock, build_ensemble,
                     exponential_draw, shared_clock_init)
from .errors import InvariantError, ParameterError, StateSpaceTooLarge
from .experiments import (EquivalenceReport, ExperimentConfig, Report,
                          equivalence_check, run_experiment)
from .ideal import IdealRun, SwapRecord, final_permutations
from .interchange import (TransientDistribution, empirical_tv_to_uniform,
                          exact_transient, ip_apply, ip_simulate, rw_simulate,
                          transpose)
from .lockswap import LockedNetwork, Message, PeerActor, throughput
from .netsim import DelayModel, EventQueue, SimStats
from .topology import (Permutation, Topology, generate_regular, load_topology,
                       permuted_edge_set, save_topology, search_by_gap,
                       spectral_gap)

__version__ = "0.1.0"
