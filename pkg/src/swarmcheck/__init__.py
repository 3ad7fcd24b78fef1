"""Swarm exploration toolkit for networks of labelled transition systems.

A finite "driver" subsystem of the network is preprocessed into a weighted
LTS whose maximal traces are numbered 0..tc(init)-1.  A coordinator (the
hive) hands out trace numbers to workers over TCP; each worker runs a
bounded breadth-first search of the full product restricted to its trace
and reports back which driver actions it actually observed, letting the
coordinator prune whole ranges of unrealizable trace numbers.  The union
of the worker searches covers the entire reachable product state space.
"""

from .lts import (
    Label,
    Lts,
    Network,
    SyncRule,
    check_network,
    load_lts,
    load_network,
    product_next,
    relabel,
    sync_result_set,
)
from .counting import WeightedLts, count_traces, load_weighted, save_weighted
from .codec import SubTrace, SwarmTrace, decode, encode, prefix_range, to_swarm
from .ranges import LeaseTable, TraceRangeList, pick_unexplored
from .search import (
    FeedbackVector,
    IssResult,
    RestrictionSet,
    run_full_bfs,
    run_iss,
    run_swarm_dfs,
)

__version__ = "0.1.0"
