"""Trajectory metrics, mode matching, and latent-space analysis."""

from .metrics import AnalysisError, ade, apd, fpd
from .matching import Matching, T_EVAL, few_step_fidelity, hungarian_match
from .latent import KMeansResult, interpolate_latents, kmeans_latents
from .io import METRICS_HEADER, export_latents, read_metrics_csv, write_metrics_csv

__all__ = [
    "AnalysisError",
    "ade",
    "apd",
    "fpd",
    "Matching",
    "T_EVAL",
    "few_step_fidelity",
    "hungarian_match",
    "KMeansResult",
    "interpolate_latents",
    "kmeans_latents",
    "METRICS_HEADER",
    "export_latents",
    "read_metrics_csv", "write_metrics_csv",
]
