"""Bayesian nonparametric causal mediation for cluster-randomized trials."""

from .data import ClusterDataset, ClusterRecord, DesignSpec, flatten
from .gcomp import EstimandDraws, GcompConfig, SensitivitySpec
from .gibbs import CaEdpState, McmcConfig, PosteriorSample, run_chain
from .model import ConcentrationParams, StickWeights, TruncationLevels

__version__ = "0.1.0"

__all__ = [
    "ClusterDataset", "ClusterRecord", "DesignSpec", "flatten",
    "EstimandDraws", "GcompConfig", "SensitivitySpec",
    "CaEdpState", "McmcConfig", "PosteriorSample", "run_chain",
    "ConcentrationParams", "StickWeights", "TruncationLevels",
    "__version__",
]
