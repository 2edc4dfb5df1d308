"""Ego-frame training samples: trajectory tensors and vectorized conditions.

Feature layouts (configurable, defaults below):
    neighbor (11): x, y, sin, cos, vx, vy, length, width, type one-hot (3)
    lane point (12): x, y, left offset, right offset, sin, cos, speed limit,
                     lane-type one-hot (4), traffic-light state
    static (6): x, y, sin, cos, length, width
    route point (12): same layout as lane points
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .generate import ScenarioRecord
from .maps import Lane, Path

D_NEIGHBOR = 11
D_LANE = 12
D_STATIC = 6
D_ROUTE = 12


@dataclass
class SceneLayout:
    n_neighbors: int = 10    # M
    horizon: int = 80        # T future steps (8 s at 10 Hz)
    history: int = 21        # A past steps including current (2 s + current)
    n_lanes: int = 70
    points_per_lane: int = 20  # P
    n_route_lanes: int = 25    # K
    dt: float = 0.1


@dataclass
class TrajectoryTensor:
    states: np.ndarray      # (1+M, 1+T, 4): x, y, sin, cos
    valid_mask: np.ndarray  # (1+M, 1+T) bool

    def copy(self) -> "TrajectoryTensor":
        return TrajectoryTensor(self.states.copy(), self.valid_mask.copy())


@dataclass
class SceneCondition:
    neighbor_history: np.ndarray  # (M, A, 11)
    neighbor_mask: np.ndarray     # (M,) bool
    lanes: np.ndarray             # (N_lane, P, 12)
    lane_mask: np.ndarray         # (N_lane,) bool
    static_obstacle: np.ndarray   # (6,)
    static_mask: bool
    route: np.ndarray             # (K, P, 12)
    route_mask: np.ndarray        # (K,) bool
    ego_speed: float = 0.0        # current ego speed, for simulation plumbing

    def copy(self) -> "SceneCondition":
        return SceneCondition(
            self.neighbor_history.copy(), self.neighbor_mask.copy(),
            self.lanes.copy(), self.lane_mask.copy(),
            self.static_obstacle.copy(), self.static_mask,
            self.route.copy(), self.route_mask.copy(), self.ego_speed)


class HorizonError(ValueError):
    """The scenario log does not cover the requested history + future window."""


def ego_frame(anchor: np.ndarray):
    """Build world->ego transform functions from an anchor state (x,y,sin,cos)."""
    x0, y0, sin0, cos0 = anchor[:4]

    def to_ego_xy(xy: np.ndarray) -> np.ndarray:
        dx = xy[..., 0] - x0
        dy = xy[..., 1] - y0
        return np.stack([cos0 * dx + sin0 * dy, -sin0 * dx + cos0 * dy], axis=-1)

    def to_ego_heading(sin: np.ndarray, cos: np.ndarray):
        return sin * cos0 - cos * sin0, cos * cos0 + sin * sin0

    return to_ego_xy, to_ego_heading


def _state_to_ego(states: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    to_xy, to_hd = ego_frame(anchor)
    out = np.zeros(states.shape[:-1] + (4,))
    out[..., :2] = to_xy(states[..., :2])
    out[..., 2], out[..., 3] = to_hd(states[..., 2], states[..., 3])
    return out


def _resample_lane(lane: Lane, n_points: int) -> np.ndarray:
    path = Path(lane.centerline)
    s = np.linspace(0.0, path.length, n_points)
    pts = path.position(s)
    hd = path.heading(s)
    return pts, hd


def lane_features(lane: Lane, anchor: np.ndarray, n_points: int) -> np.ndarray:
    """(P, 12) lane-point features in the ego frame."""
    pts, hd = _resample_lane(lane, n_points)
    to_xy, to_hd = ego_frame(anchor)
    xy = to_xy(pts)
    sin_w = hd[:, 0]
    cos_w = hd[:, 1]
    sin_e, cos_e = to_hd(sin_w, cos_w)
    feat = np.zeros((n_points, D_LANE))
    feat[:, 0:2] = xy
    feat[:, 2] = lane.width / 2.0
    feat[:, 3] = lane.width / 2.0
    feat[:, 4] = sin_e
    feat[:, 5] = cos_e
    feat[:, 6] = lane.speed_limit
    feat[:, 7 + int(lane.lane_type)] = 1.0
    feat[:, 11] = lane.tl_state
    return feat


def build_training_sample(record: ScenarioRecord, t0: int,
                          layout: SceneLayout) -> tuple[TrajectoryTensor, SceneCondition]:
    """Extract the (trajectory tensor, scene condition) pair anchored at step t0.

    Future states are in the ego frame at t0; the ego's own t0 state maps to
    (0, 0, 0, 1). Neighbor slots beyond the available agents are zero-padded
    and masked.
    """
    M, T, A = layout.n_neighbors, layout.horizon, layout.history
    if t0 < A - 1 or t0 + T >= record.n_steps:
        raise HorizonError(
            f"t0={t0} needs steps [{t0 - A + 1}, {t0 + T}] but log has {record.n_steps}")

    anchor = record.ego_log[t0]
    n_agents = record.agent_logs.shape[0]

    # nearest-M neighbor selection by distance at t0
    if n_agents:
        d = np.linalg.norm(record.agent_logs[:, t0, :2] - anchor[:2], axis=1)
        order = np.argsort(d, kind="stable")[:M]
    else:
        order = np.array([], dtype=int)

    states = np.zeros((1 + M, 1 + T, 4))
    valid = np.zeros((1 + M, 1 + T), dtype=bool)
    future = slice(t0, t0 + T + 1)
    states[0] = _state_to_ego(record.ego_log[future, :4], anchor)
    valid[0] = True
    for row, ai in enumerate(order, start=1):
        states[row] = _state_to_ego(record.agent_logs[ai, future, :4], anchor)
        valid[row] = True
    traj = TrajectoryTensor(states, valid)
    cond = build_condition(record.ego_log, record.agent_logs, record.agent_dims,
                           record.lanes, record.graph(), record.route_lane_ids,
                           t0, layout, order=order)
    return traj, cond


def build_condition(ego_log: np.ndarray, agent_logs: np.ndarray,
                    agent_dims: np.ndarray, lanes_list, graph,
                    route_lane_ids, t0: int, layout: SceneLayout,
                    order: np.ndarray | None = None) -> SceneCondition:
    """Scene condition anchored at step t0 of the given (possibly partial) logs.

    ego_log is (steps, 5), agent_logs (n, steps, 5); only steps up to t0 are
    read, so rolling simulation buffers work as inputs.
    """
    M, A = layout.n_neighbors, layout.history
    if t0 < A - 1:
        raise HorizonError(f"t0={t0} needs {A} history steps")
    anchor = ego_log[t0]
    if order is None:
        n_agents = agent_logs.shape[0]
        if n_agents:
            d = np.linalg.norm(agent_logs[:, t0, :2] - anchor[:2], axis=1)
            order = np.argsort(d, kind="stable")[:M]
        else:
            order = np.array([], dtype=int)

    hist = slice(t0 - A + 1, t0 + 1)
    nb = np.zeros((M, A, D_NEIGHBOR))
    nb_mask = np.zeros(M, dtype=bool)
    for row, ai in enumerate(order):
        seg = agent_logs[ai, hist]
        st = _state_to_ego(seg[:, :4], anchor)
        nb[row, :, 0:4] = st
        sin_e, cos_e = st[:, 2], st[:, 3]
        nb[row, :, 4] = seg[:, 4] * cos_e
        nb[row, :, 5] = seg[:, 4] * sin_e
        nb[row, :, 6] = agent_dims[ai, 0]
        nb[row, :, 7] = agent_dims[ai, 1]
        nb[row, :, 8 + int(agent_dims[ai, 2])] = 1.0
        nb_mask[row] = True

    # lanes by distance to the ego at t0
    lanes = np.zeros((layout.n_lanes, layout.points_per_lane, D_LANE))
    lane_mask = np.zeros(layout.n_lanes, dtype=bool)
    lane_d = []
    for ln in lanes_list:
        mid = ln.centerline[len(ln.centerline) // 2]
        lane_d.append(np.linalg.norm(mid - anchor[:2]))
    for slot, li in enumerate(np.argsort(lane_d, kind="stable")[:layout.n_lanes]):
        lanes[slot] = lane_features(lanes_list[li], anchor, layout.points_per_lane)
        lane_mask[slot] = True

    # one optional static obstacle is not modeled by the generator yet
    static = np.zeros(D_STATIC)
    static_mask = False

    # route lanes in traversal order
    route = np.zeros((layout.n_route_lanes, layout.points_per_lane, D_ROUTE))
    route_mask = np.zeros(layout.n_route_lanes, dtype=bool)
    for slot, lid in enumerate(route_lane_ids[:layout.n_route_lanes]):
        route[slot] = lane_features(graph.lane(lid), anchor, layout.points_per_lane)
        route_mask[slot] = True

    return SceneCondition(nb, nb_mask, lanes, lane_mask, static, static_mask,
                          route, route_mask, ego_speed=float(anchor[4]))


def initial_neighbor_states(cond: SceneCondition) -> np.ndarray:
    """(M, 4) current neighbor states extracted from the condition history."""
    return cond.neighbor_history[:, -1, 0:4].copy()
