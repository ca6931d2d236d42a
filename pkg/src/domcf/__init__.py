"""Domain counterfactuals with invertible latent-domain causal models.

A model combines one shared invertible observation function with one
invertible triangular affine mechanism per domain over standard-normal
exogenous noise.  The package covers construction, seeded sampling, exact
likelihoods, deterministic domain-counterfactual generation, canonicalization
(moving the intervened coordinates to the tail while preserving
counterfactuals and distributions), sparsity-constrained maximum-likelihood
estimation, and a reproducible simulated-experiment harness.
"""
from .canonical import (
    CanonicalizationReport,
    PreconditionViolated,
    TriangularityBroken,
    canonicalize,
    is_canonical,
    swap_indices,
)
from .datagen import (
    GroundTruthSpec,
    MultiDomainDataset,
    Split,
    generate_ground_truth,
    oracle_counterfactual_error,
    sample_dataset,
)
from .experiment import ExperimentConfig, VariantSpec, run_experiment
from .ild import (
    DomainSample,
    ILDModel,
    as_sample_arrays,
    check_counterfactual_equiv,
    check_distribution_equiv,
    construct_equivalent,
    dc_distance,
    ground_truth_bound_term,
)
from .mixing import (
    AffineDense,
    Layer,
    LayerChain,
    LeakyRelu,
    Permute,
    Triangular,
    spectral_norm,
)
from .scm import (
    DEFAULT_INTERVENTION_TOL,
    AffineSCM,
    DimensionMismatch,
    InterventionSet,
    NonPositiveDiagonal,
    NotLowerTriangular,
    compose,
    intervention_set,
)
from .train import (
    Adam,
    ParamSet,
    TrainConfig,
    TrainableILD,
    adam_step,
    dataset_nll,
    nll_gradient,
    nll_loss,
    train,
)

__all__ = [
    "AffineDense",
    "AffineSCM",
    "Adam",
    "CanonicalizationReport",
    "DEFAULT_INTERVENTION_TOL",
    "DimensionMismatch",
    "DomainSample",
    "ExperimentConfig",
    "GroundTruthSpec",
    "ILDModel",
    "InterventionSet",
    "Layer",
    "LayerChain",
    "LeakyRelu",
    "MultiDomainDataset",
    "NonPositiveDiagonal",
    "NotLowerTriangular",
    "ParamSet",
    "Permute",
    "PreconditionViolated",
    "Split",
    "TrainConfig",
    "TrainableILD",
    "Triangular",
    "TriangularityBroken",
    "VariantSpec",
    "adam_step",
    "as_sample_arrays",
    "canonicalize",
    "check_counterfactual_equiv",
    "check_distribution_equiv",
    "compose",
    "construct_equivalent",
    "dataset_nll",
    "dc_distance",
    "generate_ground_truth",
    "ground_truth_bound_term",
    "intervention_set",
    "is_canonical",
    "nll_gradient",
    "nll_loss",
    "oracle_counterfactual_error",
    "run_experiment",
    "sample_dataset",
    "spectral_norm",
    "swap_indices",
    "train",
]
