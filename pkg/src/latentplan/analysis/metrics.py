"""Trajectory displacement and diversity metrics.

All metrics operate on position sequences in meters.  Inputs may carry extra
state channels (heading, etc.); only the first two columns are read.
"""

from __future__ import annotations

import numpy as np


class AnalysisError(ValueError):
    """Raised on malformed metric inputs."""


def _positions(traj: np.ndarray) -> np.ndarray:
    arr = np.asarray(traj, dtype=np.float64)
    if arr.ndim < 2 or arr.shape[-1] < 2:
        raise AnalysisError(f"trajectory must be (..., steps, >=2), got {arr.shape}")
    return arr[..., :2]


def ade(traj_hat: np.ndarray, traj: np.ndarray) -> float:
    """Average displacement error: mean per-step Euclidean distance in meters."""
    a = _positions(traj_hat)
    b = _positions(traj)
    if a.shape != b.shape:
        raise AnalysisError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b, axis=-1).mean())


def _mode_positions(mode_set: np.ndarray) -> np.ndarray:
    arr = _positions(np.asarray(mode_set))
    if arr.ndim != 3:
        raise AnalysisError(f"mode set must be (K, steps, >=2), got {np.asarray(mode_set).shape}")
    if arr.shape[0] < 2:
        raise AnalysisError(f"pairwise metrics need at least 2 modes, got {arr.shape[0]}")
    return arr


def apd(mode_set: np.ndarray) -> float:
    """Average pairwise distance: mean over mode pairs of time-averaged distance."""
    p = _mode_positions(mode_set)
    k = p.shape[0]
    # (K, K, steps) pairwise per-step distances; average upper triangle.
    d = np.linalg.norm(p[:, None] - p[None, :], axis=-1).mean(axis=-1)
    i, j = np.triu_indices(k, k=1)
    return float(d[i, j].mean())


def fpd(mode_set: np.ndarray) -> float:
    """Final pairwise distance: mean over mode pairs of endpoint distance."""
    p = _mode_positions(mode_set)[:, -1]
    k = p.shape[0]
    d = np.linalg.norm(p[:, None] - p[None, :], axis=-1)
    i, j = np.triu_indices(k, k=1)
    return float(d[i, j].mean())
