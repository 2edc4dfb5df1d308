"""Deterministic synthetic scenario generation.

A scenario is a lane graph plus logged states for the ego expert and up to M
neighbor vehicles. All vehicles follow arc-length corridors (lane chains)
with IDM car-following; crossing traffic at intersections is held at a red
light so logged scenarios stay collision-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..numerics.rng import make_rng
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from ..simulator.idm import IdmParams
from .maps import (
    LANE_WIDTH,
    Lane,
    LaneGraph,
    MAP_BUILDERS,
    Path,
)

CAR_DIMS = (4.8, 2.0, 0)  # length, width, type index

MAP_FAMILIES = ("straight", "curve", "intersection", "lane-change")


class ScenarioError(ValueError):
    """Unsatisfiable scenario configuration."""


@dataclass
class ScenarioConfig:
    map_family: str = "straight"
    n_neighbors: int = 3
    duration: float = 13.0
    dt: float = 0.1
    min_gap: float = 25.0  # initial longitudinal spacing within a corridor
    max_retries: int = 10


@dataclass
class ScenarioRecord:
    scenario_id: str
    map_family: str
    seed: int
    dt: float
    duration: float
    lanes: list[Lane]
    agent_logs: np.ndarray  # (n_agents, n_steps, 5): x, y, sin, cos, speed
    agent_dims: np.ndarray  # (n_agents, 3): length, width, type index
    ego_log: np.ndarray     # (n_steps, 5)
    ego_dims: np.ndarray    # (3,)
    route_lane_ids: list[int] = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return self.ego_log.shape[0]

    def graph(self) -> LaneGraph:
        return LaneGraph(self.lanes)

    def route_path(self) -> Path:
        return Path(self.graph().chain_centerline(self.route_lane_ids))


@dataclass
class _Mover:
    path: Path
    s: float
    v: float
    v0: float
    corridor: int
    stop_s: float | None = None  # red light / end-of-queue virtual stop


def _simulate(movers: list[_Mover], n_steps: int, dt: float,
              idm: "IdmParams", car_len: float) -> np.ndarray:
    """Roll all movers forward; returns (n_movers, n_steps, 5) logs."""
    # imported here to keep scenario importable without the simulator package
    from ..simulator.idm import idm_accel
    logs = np.zeros((len(movers), n_steps, 5))
    for step in range(n_steps):
        for i, m in enumerate(movers):
            pos = m.path.position(m.s)
            hd = m.path.heading(m.s)[0]
            logs[i, step] = (pos[0], pos[1], hd[0], hd[1], m.v)
        # advance with IDM against the nearest leader in the same corridor
        accels = []
        for m in movers:
            gap = np.inf
            dv = 0.0
            for other in movers:
                if other is m or other.corridor != m.corridor:
                    continue
                ds = other.s - m.s
                if 0.0 < ds - car_len < gap:
                    gap = ds - car_len
                    dv = m.v - other.v
            if m.stop_s is not None:
                ds = m.stop_s - m.s
                if 0.0 < ds < gap:
                    gap = ds
                    dv = m.v
            accels.append(idm_accel(m.v, dv, gap, replace(idm, v0=m.v0)))
        for m, a in zip(movers, accels):
            m.v = max(0.0, m.v + a * dt)
            m.s = m.s + m.v * dt


    return logs


def _build_world(rng: np.random.Generator, config: ScenarioConfig):
    """Returns (lanes, ego corridor path, route ids, neighbor corridor specs)."""
    fam = config.map_family
    if fam == "straight":
        graph = MAP_BUILDERS[fam]()
        route = [0]
        ego_path = Path(graph.chain_centerline(route))
        corridors = [(0, Path(graph.lanes[0].centerline), None),
                     (1, Path(graph.lanes[1].centerline), None)]
    elif fam == "curve":
        radius = float(rng.uniform(90.0, 150.0))
        graph = MAP_BUILDERS[fam](radius=radius)
        route = [0]
        ego_path = Path(graph.chain_centerline(route))
        corridors = [(0, Path(graph.lanes[0].centerline), None),
                     (1, Path(graph.lanes[1].centerline), None)]
    elif fam == "intersection":
        graph = MAP_BUILDERS[fam]()
        turn = bool(rng.random() < 0.4)
        route = [0, 3, 4] if turn else [0, 1, 2]
        ego_path = Path(graph.chain_centerline(route))
        cross = Path(graph.chain_centerline([5, 6]))
        approach_len = Path(graph.lane(5).centerline).length
        corridors = [
            (0, ego_path, None),                      # lead traffic on the route
            (1, Path(graph.lane(7).centerline), None),  # parallel lane
            (2, cross, approach_len - 4.0),           # red light: stop at the line
        ]
    elif fam == "lane-change":
        graph = MAP_BUILDERS[fam]()
        route = [0, 1]
        lane0 = Path(graph.lanes[0].centerline)
        lane1 = Path(graph.lanes[1].centerline)
        s_switch = float(rng.uniform(0.35, 0.55)) * lane0.length
        blend_len = 50.0
        s_grid = np.linspace(0.0, lane0.length, 256)
        u = np.clip((s_grid - s_switch) / blend_len, 0.0, 1.0)
        w = u * u * (3.0 - 2.0 * u)  # smoothstep
        pts = lane0.position(s_grid) + w[:, None] * (lane1.position(s_grid) - lane0.position(s_grid))
        ego_path = Path(pts)
        corridors = [(0, lane0, None),
                     (1, lane1, None),
                     (2, Path(graph.lanes[2].centerline), None)]
    else:
        raise ScenarioError(f"unknown map family {fam!r} (expected one of {MAP_FAMILIES})")
    return graph, ego_path, route, corridors


def generate_scenario(seed: int, config: ScenarioConfig) -> ScenarioRecord:
    """Generate one deterministic scenario; raises ScenarioError if unsatisfiable."""
    if config.n_neighbors < 0:
        raise ScenarioError("n_neighbors must be >= 0")
    from ..simulator.idm import IdmParams
    idm = IdmParams()
    n_steps = int(round(config.duration / config.dt)) + 1
    last_err = None
    for attempt in range(config.max_retries):
        rng = make_rng(seed, stream=1000 + attempt)
        graph, ego_path, route, corridors = _build_world(rng, config)
        v0_ego = graph.lane(route[0]).speed_limit
        travel = v0_ego * config.duration
        if ego_path.length < travel + 20.0:
            raise ScenarioError("route too short for the requested duration")
        ego_s0 = float(rng.uniform(10.0, max(11.0, ego_path.length - travel - 10.0)))

        # ego corridor is corridor id -1 merged with corridor 0 when they share
        # geometry; keep it simple: the ego interacts with corridor-0 traffic.
        ego = _Mover(ego_path, ego_s0, v0_ego, v0_ego, corridor=0)

        capacity_per = max(1, int((corridors[0][1].length - 40.0) // config.min_gap))
        if config.n_neighbors > capacity_per * len(corridors):
            raise ScenarioError(
                f"{config.n_neighbors} neighbors exceed lane capacity "
                f"{capacity_per * len(corridors)}")

        movers = [ego]
        placed: dict[int, list[float]] = {0: [ego_s0]}
        for _ in range(config.n_neighbors):
            for _try in range(40):
                cid, cpath, stop_s = corridors[int(rng.integers(len(corridors)))]
                occupied = placed.setdefault(cid, [])
                s_cand = float(rng.uniform(10.0, cpath.length - 20.0))
                if stop_s is not None:
                    s_cand = float(rng.uniform(10.0, max(11.0, stop_s - 8.0)))
                if all(abs(s_cand - s) >= config.min_gap for s in occupied):
                    break
            else:
                raise ScenarioError("could not place all neighbors with safe gaps")
            occupied.append(s_cand)
            v_lim = graph.lanes[0].speed_limit
            v_init = v_lim if stop_s is None else min(v_lim, max(0.0, (stop_s - s_cand) / 6.0))
            movers.append(_Mover(cpath, s_cand, v_init, v_lim, corridor=cid, stop_s=stop_s))

        logs = _simulate(movers, n_steps, config.dt, idm, CAR_DIMS[0])
        ego_log = logs[0]
        agent_logs = logs[1:]

        record = ScenarioRecord(
            scenario_id=f"{config.map_family}-{seed}",
            map_family=config.map_family,
            seed=seed,
            dt=config.dt,
            duration=config.duration,
            lanes=graph.lanes,
            agent_logs=agent_logs,
            agent_dims=np.array([CAR_DIMS] * config.n_neighbors, dtype=np.float64).reshape(config.n_neighbors, 3),
            ego_log=ego_log,
            ego_dims=np.array(CAR_DIMS, dtype=np.float64),
            route_lane_ids=route,
        )
        ok, err = _collision_free(record)
        if ok:
            return record
        last_err = err
    raise ScenarioError(f"could not generate a collision-free scenario: {last_err}")


def footprint_circles(states: np.ndarray, dims: np.ndarray) -> tuple[np.ndarray, float]:
    """Two-circle vehicle footprint: centers (..., 2, 2) and shared radius."""
    xy = states[..., :2]
    sin, cos = states[..., 2], states[..., 3]
    length, width = float(dims[0]), float(dims[1])
    offset = length / 4.0
    d = np.stack([cos, sin], axis=-1) * offset
    centers = np.stack([xy - d, xy + d], axis=-2)
    return centers, width / 2.0


def _collision_free(record: ScenarioRecord) -> tuple[bool, str | None]:
    all_logs = np.concatenate([record.ego_log[None], record.agent_logs], axis=0)
    all_dims = np.concatenate([record.ego_dims[None], record.agent_dims], axis=0)
    n = all_logs.shape[0]
    for i in range(n):
        ci, ri = footprint_circles(all_logs[i], all_dims[i])
        for j in range(i + 1, n):
            cj, rj = footprint_circles(all_logs[j], all_dims[j])
            # pairwise circle distances per step
            d = np.linalg.norm(ci[:, :, None, :] - cj[:, None, :, :], axis=-1)
            if np.any(d <= ri + rj):
                step = int(np.argwhere(np.any(d <= ri + rj, axis=(1, 2)))[0])
                return False, f"agents {i} and {j} overlap at step {step}"
    return True, None
