"""Near-field (P2P) data layout laboratory.

Trees and E2 neighbourhoods, indexing / redundant / pattern-table layouts,
compiled kernels with memory-trace twins, a trace-driven LRU cache simulator
and an analytical speedup model.
"""

from .cachesim import CacheConfig, MemoryTrace, locality_report, simulate_cache
from .execution import (PairKernel, brute_force_oracle, measure_phases, reduce_partials,
                        run_p2p_indexing, run_p2p_redundant)
from .layouts import pack_indexing, pack_redundant
from .neighbors import classify_interactions, e2_neighbors
from .particles import ParticleSet, generate
from .tree import build_adaptive_tree, build_uniform_tree

__version__ = "0.1.0"

__all__ = ["CacheConfig", "MemoryTrace", "locality_report", "simulate_cache", "PairKernel",
           "brute_force_oracle", "measure_phases", "reduce_partials", "run_p2p_indexing",
           "run_p2p_redundant", "pack_indexing", "pack_redundant", "classify_interactions",
           "e2_neighbors", "ParticleSet", "generate", "build_adaptive_tree", "build_uniform_tree"]
