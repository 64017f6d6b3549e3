"""Tree tensor network density estimation from samples via sketched
linear systems, with Chow-Liu topology discovery and exact sampling."""

from .chow_liu import chow_liu_model, chow_liu_tree, empirical_mi, mi_matrix
from .data import DiscreteSamples
from .estimator import (
    CdeSystem,
    FitResult,
    SketchSet,
    cde_oracle,
    estimate_ranks,
    fit_from_sketches,
    fit_ttns,
    sketch_exact,
    sketch_from_samples,
    solve_cores,
    system_forming,
)
from .metrics import MetricReport, kl_divergence, nll, pairwise_mi, rel_l2_error
from .models import (
    ModelPreset,
    PairwiseMRF,
    mrf_full_tensor,
    mrf_sample,
    preset_model,
    tree_gm_to_ttns,
)
from .sketches import (
    SketchFunction,
    eval_sketch_on_sample,
    l_markov_sketch,
    markov_sketch,
    perturbative_series_oracle,
    perturbative_sketch,
)
from .tree import RootedTree, build_rooted_tree, path_tree, tree_relations
from .ttns import TTNS, draw_samples, inner_product, subgraph_function

__all__ = [
    "CdeSystem",
    "DiscreteSamples",
    "FitResult",
    "MetricReport",
    "ModelPreset",
    "PairwiseMRF",
    "RootedTree",
    "SketchFunction",
    "SketchSet",
    "TTNS",
    "build_rooted_tree",
    "cde_oracle",
    "chow_liu_model",
    "chow_liu_tree",
    "draw_samples",
    "empirical_mi",
    "estimate_ranks",
    "eval_sketch_on_sample",
    "fit_from_sketches",
    "fit_ttns",
    "inner_product",
    "kl_divergence",
    "l_markov_sketch",
    "markov_sketch",
    "mi_matrix",
    "mrf_full_tensor",
    "mrf_sample",
    "nll",
    "pairwise_mi",
    "perturbative_series_oracle",
    "perturbative_sketch",
    "preset_model",
    "path_tree",
    "rel_l2_error",
    "sketch_exact",
    "sketch_from_samples",
    "solve_cores",
    "subgraph_function",
    "system_forming",
    "tree_gm_to_ttns",
    "tree_relations",
]

__version__ = "0.1.0"
