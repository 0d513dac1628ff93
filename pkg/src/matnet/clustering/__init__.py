"""Spatial, temporal and spatio-temporal well clustering."""

from .dtw import accumulated_cost, dtw, dtw_matrix, dtw_normalized, local_cost
from .elbow import ElbowResult, elbow_from_costs, elbow_select
from .features import WellFeatureEncoder, fuse_labels
from .kprototypes import KPrototypes, kprototypes_distance, mixed_cost
from .temporal import TemporalKMeans, adaptive_split, internal_variation, normalize_series, resample
from .zoning import SVMZoneMapper

__all__ = [
    "dtw", "dtw_normalized", "dtw_matrix", "local_cost", "accumulated_cost",
    "ElbowResult", "elbow_from_costs", "elbow_select",
    "WellFeatureEncoder", "fuse_labels",
    "KPrototypes", "kprototypes_distance", "mixed_cost",
    "TemporalKMeans", "adaptive_split", "internal_variation", "normalize_series", "resample",
    "SVMZoneMapper",
]
