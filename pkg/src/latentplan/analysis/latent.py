"""Latent-space exploration: linear interpolation and k-means clustering.

Codes may cover the full scene ((1+M)*L flattened) or the ego agent alone
(L); ego-only codes are decoded with the neighbor latents held at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import AnalysisError


def _decode_ego(vae, codes: np.ndarray, stats=None) -> np.ndarray:
    """Decode (B, L) or (B, (1+M)*L) codes and return ego trajectories (B, 1+T, 4)."""
    from ..scenario.normalize import denormalize_array

    n_agents = vae.n_agents
    lat = vae.config.latent_dim
    codes = np.asarray(codes, dtype=np.float64)
    if codes.shape[-1] == n_agents * lat:
        z = codes.reshape(codes.shape[0], n_agents, lat)
    elif codes.shape[-1] == lat:
        z = np.zeros((codes.shape[0], n_agents, lat))
        z[:, 0] = codes
    else:
        raise AnalysisError(
            f"latent width {codes.shape[-1]} matches neither {lat} nor {n_agents * lat}")
    recon = vae.decode(z).data[:, 0]
    if stats is not None:
        recon = denormalize_array(recon, stats)
    return recon


def interpolate_latents(z_a: np.ndarray, z_b: np.ndarray, b: int, vae,
                        stats=None) -> tuple[np.ndarray, np.ndarray]:
    """Decode B codes linearly spaced from z_a to z_b.

    Returns (codes (B, L), ego trajectories (B, 1+T, 4)); the endpoints decode
    z_a and z_b exactly.
    """
    if b < 2:
        raise AnalysisError(f"interpolation needs at least 2 points, got {b}")
    z_a = np.asarray(z_a, dtype=np.float64).ravel()
    z_b = np.asarray(z_b, dtype=np.float64).ravel()
    if z_a.shape != z_b.shape:
        raise AnalysisError(f"endpoint shape mismatch: {z_a.shape} vs {z_b.shape}")
    coeff = np.linspace(0.0, 1.0, b)[:, None]
    codes = (1.0 - coeff) * z_a + coeff * z_b
    return codes, _decode_ego(vae, codes, stats)


@dataclass(frozen=True)
class KMeansResult:
    centers: np.ndarray       # (k, L)
    assignments: np.ndarray   # (N,) int
    inertia: float
    n_iter: int
    prototypes: np.ndarray | None  # (k, 1+T, 4) decoded ego trajectories


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[i:] = centers[0]
            break
        probs = d2 / total
        centers[i] = x[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((x - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans_latents(latents: np.ndarray, k: int, seed: int, vae=None, stats=None,
                   shift_tol: float = 1e-6, max_iter: int = 100) -> KMeansResult:
    """Lloyd's k-means with k-means++ seeding over latent codes.

    Iterates until the largest center shift is below ``shift_tol`` or
    ``max_iter`` passes; when a decoder is supplied the centers are also
    decoded to ego trajectory prototypes.
    """
    x = np.asarray(latents, dtype=np.float64)
    if x.ndim != 2:
        raise AnalysisError(f"latents must be (N, L), got {x.shape}")
    if k < 1 or x.shape[0] < k:
        raise AnalysisError(f"need N >= k >= 1, got N={x.shape[0]}, k={k}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(x, k, rng)

    assignments = np.zeros(x.shape[0], dtype=np.int64)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = ((x[:, None] - centers[None]) ** 2).sum(axis=-1)
        assignments = d2.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = x[assignments == j]
            if members.shape[0]:
                new_centers[j] = members.mean(axis=0)
        shift = float(np.linalg.norm(new_centers - centers, axis=1).max())
        centers = new_centers
        if shift < shift_tol:
            break

    d2 = ((x[:, None] - centers[None]) ** 2).sum(axis=-1)
    assignments = d2.argmin(axis=1)
    inertia = float(d2[np.arange(x.shape[0]), assignments].sum())
    prototypes = _decode_ego(vae, centers, stats) if vae is not None else None
    return KMeansResult(centers=centers, assignments=assignments,
                        inertia=inertia, n_iter=n_iter, prototypes=prototypes)
