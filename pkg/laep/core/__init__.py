from .types import ModelStructure, ExpertTokenCounts, LoadSnapshot, LoadStats
from .stats import load_stats, window_aggregate, spearman
from .validation import validate_trace, check_conservation
from .structures import STRUCTURES, load_structure, structure_from_dict
from .reroute import reroute_pruned, reroute_rows
