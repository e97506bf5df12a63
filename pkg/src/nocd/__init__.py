"""Overlapping community detection via the Bernoulli-Poisson edge model.

Affiliations are produced either by a small graph convolutional network
(or MLP) trained with a balanced, subsampled negative log-likelihood,
or by direct projected-gradient optimization. Includes a synthetic
generator and overlapping-cover metrics for closed-loop validation.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .bp import (
    AffiliationMatrix,
    PairBatch,
    edge_probability,
    full_balanced_loss,
    generate_bp_graph,
    loss_gradient_wrt_f,
    sample_pair_batch,
    stochastic_balanced_loss,
)
from .graph import (
    FeatureMatrix,
    GroundTruth,
    NormalizedAdjacency,
    SparseGraph,
    adjacency_as_features,
    induced_subgraph,
    load_communities,
    load_edge_list,
    load_features,
    normalize_adjacency,
    row_normalize,
    save_communities,
    save_edge_list,
)
from .metrics import CoverError, nmi_from_affiliations, overlapping_nmi, symmetric_agreement
from .models import (
    CommunityAssignment,
    FreeVariableModel,
    ModelVariant,
    assign_communities,
    free_variable_init,
    free_variable_step,
    gcn_forward,
    mlp_forward,
    parse_variant,
)
from .nn import ParameterSet, TrainConfig, adam_step, init_parameters
from .training import (
    InductiveSplit,
    TrainTrace,
    convergence_experiment,
    inductive_evaluate,
    select_by_loss,
    train,
    train_full_batch,
)

__version__ = "0.1.0"

__all__ = [
    "AffiliationMatrix",
    "CommunityAssignment",
    "CoverError",
    "FeatureMatrix",
    "FreeVariableModel",
    "GroundTruth",
    "InductiveSplit",
    "KERNEL_BACKEND",
    "ModelVariant",
    "NormalizedAdjacency",
    "PairBatch",
    "ParameterSet",
    "SparseGraph",
    "TrainConfig",
    "TrainTrace",
    "adam_step",
    "adjacency_as_features",
    "assign_communities",
    "convergence_experiment",
    "edge_probability",
    "free_variable_init",
    "free_variable_step",
    "full_balanced_loss",
    "gcn_forward",
    "generate_bp_graph",
    "induced_subgraph",
    "inductive_evaluate",
    "init_parameters",
    "load_communities",
    "load_edge_list",
    "load_features",
    "loss_gradient_wrt_f",
    "mlp_forward",
    "nmi_from_affiliations",
    "normalize_adjacency",
    "overlapping_nmi",
    "parse_variant",
    "row_normalize",
    "sample_pair_batch",
    "save_communities",
    "save_edge_list",
    "select_by_loss",
    "stochastic_balanced_loss",
    "symmetric_agreement",
    "train",
    "train_full_batch",
    "__version__",
]
