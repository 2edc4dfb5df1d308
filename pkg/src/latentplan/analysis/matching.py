"""Mode alignment between sample sets and few-step fidelity metrics.

Two sets of latent codes are aligned with an optimal bipartite matching under
Euclidean cost; fidelity is then reported as the mean L1 latent discrepancy
and the mean Euclidean error of the matched decoded trajectories over the
first second of motion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .metrics import AnalysisError

T_EVAL = 10


@dataclass(frozen=True)
class Matching:
    """Bijection ``i -> permutation[i]`` with its total Euclidean cost."""

    permutation: np.ndarray
    cost: float

    def __post_init__(self) -> None:
        perm = np.asarray(self.permutation)
        if sorted(perm.tolist()) != list(range(perm.size)):
            raise AnalysisError("matching permutation must be a bijection")


def _latents(z: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(z, dtype=np.float64)
    if arr.ndim != 2:
        raise AnalysisError(f"{name} must be (B, L), got {arr.shape}")
    return arr


def hungarian_match(z_a: np.ndarray, z_b: np.ndarray) -> Matching:
    """Optimal assignment of z_a rows to z_b rows minimizing total L2 distance."""
    a = _latents(z_a, "z_a")
    b = _latents(z_b, "z_b")
    if a.shape != b.shape:
        raise AnalysisError(f"set size mismatch: {a.shape} vs {b.shape}")
    cost = np.linalg.norm(a[:, None] - b[None, :], axis=-1)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(a.shape[0], dtype=np.int64)
    perm[rows] = cols
    return Matching(permutation=perm, cost=float(cost[rows, cols].sum()))


def few_step_fidelity(
    z_s: np.ndarray,
    z_ref: np.ndarray,
    x_s: np.ndarray,
    x_ref: np.ndarray,
    *,
    per_dimension: bool = True,
    t_eval: int = T_EVAL,
) -> tuple[float, float]:
    """(L_z, L_x) between a few-step sample set and a reference set.

    Sets are matched on latents; L_z is the mean L1 latent distance of the
    matched pairs (divided by latent dimension when ``per_dimension``), and
    L_x is the mean per-step Euclidean error of the matched trajectories over
    the first ``t_eval`` timesteps after the initial state.
    """
    a = _latents(z_s, "z_s")
    b = _latents(z_ref, "z_ref")
    xa = np.asarray(x_s, dtype=np.float64)
    xb = np.asarray(x_ref, dtype=np.float64)
    if xa.shape != xb.shape or xa.ndim != 3:
        raise AnalysisError(f"trajectory sets must match: {xa.shape} vs {xb.shape}")
    if xa.shape[0] != a.shape[0]:
        raise AnalysisError("latent and trajectory set sizes differ")
    if xa.shape[1] < t_eval + 1:
        raise AnalysisError(f"need at least {t_eval + 1} trajectory steps, got {xa.shape[1]}")

    match = hungarian_match(a, b)
    b_m = b[match.permutation]
    l_z = float(np.abs(a - b_m).sum(axis=-1).mean())
    if per_dimension:
        l_z /= a.shape[-1]

    xb_m = xb[match.permutation]
    window = slice(1, t_eval + 1)
    l_x = float(
        np.linalg.norm(xa[:, window, :2] - xb_m[:, window, :2], axis=-1).mean())
    return l_z, l_x
