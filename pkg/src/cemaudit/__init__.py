"""Individual discrimination auditing via sequential coarsened exact matching
and Gower-distance k-NN scoring, with bias simulation and repair evaluation."""

__version__ = "0.1.0"

from .data import Attribute, Schema, Dataset, SplitPair, load_csv, split, positive_rate
from .cem import CoarseningSpec, CemScoreVector, coarsen, stratify, matched_units, sequential_pass, repeated_cem
from .knn import GowerConfig, KnnScoreVector, gower_distance, knn_within_group, delta_eq1, delta_prime_eq2, score_all_knn, flag_discriminated
from .tree import TreeParams, TreeModel, fit_tree, prune
from .scenario import remove_discrimination, inject_discrimination, add_correlated_variable
from .evaluation import repair, classification_rates, compare_cem_knn, qq_data, scatter_pairs
