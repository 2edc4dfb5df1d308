"""Artifact layout under the run output directory, plus dataset and
checkpoint (de)serialization for the pipeline stages."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..numerics.checkpoint import load_checkpoint, save_checkpoint
from ..numerics.rng import make_rng
from ..planner.train import PlannerBundle
from ..scenario.features import SceneCondition, SceneLayout, TrajectoryTensor
from ..scenario.normalize import NormStats
from ..trajvae.model import TrajectoryVae


class ArtifactError(FileNotFoundError):
    """A required upstream artifact is missing."""


class Workspace:
    """Well-known artifact paths under one output directory."""

    def __init__(self, out: Path):
        self.out = Path(out)
        self.resolved_config = self.out / "resolved_config.yaml"
        self.dataset = self.out / "dataset.npz"
        self.norm_stats = self.out / "norm_stats.txt"
        self.vae_ckpt = self.out / "vae.ckpt"
        self.teacher_ckpt = self.out / "teacher.ckpt"
        self.planner_ckpt = self.out / "planner.ckpt"
        self.vae_log = self.out / "vae_train.csv"
        self.teacher_log = self.out / "teacher_train.csv"
        self.planner_log = self.out / "planner_train.csv"
        self.plans_csv = self.out / "plans.csv"
        self.rollouts = self.out / "rollouts"
        self.scores = self.out / "score_report.txt"
        self.metrics_csv = self.out / "metrics.csv"
        self.latents_ckpt = self.out / "latents.ckpt"
        self.bench_csv = self.out / "bench.csv"

    def ensure(self) -> "Workspace":
        self.out.mkdir(parents=True, exist_ok=True)
        return self

    def require(self, path: Path, hint: str) -> Path:
        if not path.exists():
            raise ArtifactError(
                f"missing artifact {path} — run `{hint}` first")
        return path


_COND_FIELDS = ("neighbor_history", "neighbor_mask", "lanes", "lane_mask",
                "static_obstacle", "static_mask", "route", "route_mask",
                "ego_speed")


def save_dataset(path, samples: list[tuple[TrajectoryTensor, SceneCondition]],
                 layout: SceneLayout) -> None:
    arrays = {
        "states": np.stack([t.states for t, _ in samples]),
        "valid_mask": np.stack([t.valid_mask for t, _ in samples]),
        "layout": np.array([layout.n_neighbors, layout.horizon, layout.history,
                            layout.n_lanes, layout.points_per_lane,
                            layout.n_route_lanes]),
        "dt": np.array(layout.dt),
    }
    for name in _COND_FIELDS:
        arrays["cond_" + name] = np.stack(
            [np.asarray(getattr(c, name)) for _, c in samples])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, **arrays)


def load_dataset(path) -> tuple[list[tuple[TrajectoryTensor, SceneCondition]],
                                SceneLayout]:
    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files}
    lay = arrays["layout"]
    layout = SceneLayout(n_neighbors=int(lay[0]), horizon=int(lay[1]),
                         history=int(lay[2]), n_lanes=int(lay[3]),
                         points_per_lane=int(lay[4]), n_route_lanes=int(lay[5]),
                         dt=float(arrays["dt"]))
    samples = []
    for i in range(arrays["states"].shape[0]):
        traj = TrajectoryTensor(arrays["states"][i], arrays["valid_mask"][i])
        cond = SceneCondition(*[
            arrays["cond_" + name][i] if name not in ("static_mask", "ego_speed")
            else arrays["cond_" + name][i].item()
            for name in _COND_FIELDS])
        samples.append((traj, cond))
    return samples, layout


def save_vae(path, vae: TrajectoryVae) -> None:
    state = vae.state()
    state["meta.n_agents"] = np.array(vae.n_agents)
    state["meta.n_waypoints"] = np.array(vae.n_waypoints)
    save_checkpoint(path, state)


def load_vae(path, config) -> TrajectoryVae:
    state = load_checkpoint(path)
    n_agents = int(state.pop("meta.n_agents"))
    n_waypoints = int(state.pop("meta.n_waypoints"))
    vae = TrajectoryVae(config, n_agents, n_waypoints, make_rng(0, stream=1))
    vae.load_state(state)
    return vae


def save_bundle(path, bundle: PlannerBundle) -> None:
    state = bundle.state()
    state["meta.d_in"] = np.array(bundle.denoiser.d_in)
    state["meta.d_pixel"] = np.array(bundle.pixel_head.mlp.layers[-1].weight.shape[1])
    save_checkpoint(path, state)


def load_bundle(path, config, layout: SceneLayout) -> PlannerBundle:
    state = load_checkpoint(path)
    d_in = int(state.pop("meta.d_in"))
    d_pixel = int(state.pop("meta.d_pixel"))
    bundle = PlannerBundle(config, layout, d_in, d_pixel, make_rng(0, stream=11))
    bundle.load_state(state)
    return bundle


def load_stats(ws: Workspace) -> NormStats:
    ws.require(ws.norm_stats, "gen-data")
    return NormStats.load(ws.norm_stats)
