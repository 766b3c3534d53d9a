"""codemin: minimize network-coding links for a target multicast rate."""

from .chromosome import (BIT, BLOCK, Fitness, INFEASIBLE, Layout, all_one,
                         chromosome_from_str, chromosome_to_str, count_coding_links,
                         layout_of, sample_chromosome, search_space_size)
from .errors import (CodeminError, CyclicGraphError, InfeasibleError, ProtocolError,
                     TopologyError)
from .evaluators import (AlgebraicEvaluator, DecompositionEvaluator,
                         evaluate_algebraic, evaluate_decomposition,
                         evaluate_population)
from .ga import GAParams, RunStats, evolve, greedy_sweep
from .baselines import minimal1, minimal2
from .distsim import distributed_evaluate, run_distributed
from .topology import (MulticastInstance, decompose, generate_random_instance,
                       load_topology, make_acyclic_subgraph, max_flow, merging_nodes,
                       multicast_subgraph, parse_topology, topological_order)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
