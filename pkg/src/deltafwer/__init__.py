"""Spatially relaxed inference on structured high-dimensional designs.

Clustered and ensembled-clustered desparsified Lasso (CluDL / EnCluDL),
with a Monte-Carlo harness estimating the delta-family-wise error rate.
"""
from .cluster import Clustering, compress, transformation_matrix, ward_constrained, ward_partitions
from .datagen import ScenarioConfig, make_scenario
from .dlasso import InferenceBackendConfig, cluster_pvalues, desparsified_lasso
from .grid import SpatialDomain, WeightMap, delta_null_region
from .lasso import lasso_cd
from .metrics import RunOutcome, delta_fwer_estimate, summarize, tpr
from .pipeline import EnsembleConfig, PValueFamily, cludl, encludl, quantile_aggregate, select

__version__ = "0.1.0"

__all__ = [
    "Clustering", "EnsembleConfig", "InferenceBackendConfig", "PValueFamily", "RunOutcome",
    "ScenarioConfig", "SpatialDomain", "WeightMap", "cludl", "cluster_pvalues", "compress",
    "delta_fwer_estimate", "delta_null_region", "desparsified_lasso", "encludl", "lasso_cd",
    "make_scenario", "quantile_aggregate", "select", "summarize", "tpr", "transformation_matrix",
    "ward_constrained", "ward_partitions",
]
