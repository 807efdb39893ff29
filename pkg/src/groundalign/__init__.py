"""Instruction following with two levels of alignment.

Sentences align monotonically to the steps of an action path; within an
aligned pair, dependency-tree tokens align to grounding-graph vertices.
"""
from .core import (
    ActionStep,
    Demonstration,
    DependencyTree,
    Edge,
    FeatureIndex,
    GroundingGraph,
    InstructionSequence,
    Label,
    LabelSet,
    ParamVector,
    Path,
    SeqAlignment,
    reverse_topological_order,
    validate_dependency_tree,
    validate_grounding_graph,
)
from .features import FeatureTemplateConfig, join_features, levenshtein, sparse_dot
from .learn import (
    TrainConfig,
    TrainedModel,
    build_candidate_sets,
    contrastive_objective,
    finite_difference_gradcheck,
    optimize_theta,
    train_icm,
)
from .plan import PlanConfig, beam_search_plan, exhaustive_plan, icm_infer
from .seqmodel import (
    Scorer,
    brute_force_alignment,
    path_log_potential,
    viterbi_sequence_alignment,
)
from .structalign import (
    best_structure_alignment,
    brute_force_pair_score,
    pair_log_score,
    pair_score_gradient,
)

__version__ = "0.1.0"

__all__ = [
    "ActionStep", "Demonstration", "DependencyTree", "Edge", "FeatureIndex", "GroundingGraph",
    "InstructionSequence", "Label", "LabelSet", "ParamVector", "Path", "SeqAlignment",
    "reverse_topological_order", "validate_dependency_tree", "validate_grounding_graph",
    "FeatureTemplateConfig", "join_features", "levenshtein", "sparse_dot",
    "TrainConfig", "TrainedModel", "build_candidate_sets", "contrastive_objective",
    "finite_difference_gradcheck", "optimize_theta", "train_icm",
    "PlanConfig", "beam_search_plan", "exhaustive_plan", "icm_infer",
    "Scorer", "brute_force_alignment", "path_log_potential", "viterbi_sequence_alignment",
    "best_structure_alignment", "brute_force_pair_score", "pair_log_score", "pair_score_gradient",
]
