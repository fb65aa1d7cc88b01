"""Optimal planning for finite-horizon DEC-POMDPs by best-first search over policy vectors."""

from .evaluation import Completion, completion_value, evaluate, reachable_distribution, stitch
from .heuristics import HeuristicTable, heuristic_H, mdp_values, recursive_values
from .model import DecPomdp, ModelError, builtin, parse_model, serialize, validate
from .policy import ExpansionCursor, PolicyTree, PolicyVector, action_at, expand_child, num_children, root_vectors
from .search import Options, SearchResult, SearchStats, anytime_run, brute_force, maa_star

__version__ = "0.1.0"
