"""Closed-loop rollout of a planning policy in replayed or reactive worlds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..scenario.features import SceneLayout, build_condition, ego_frame
from ..scenario.generate import ScenarioRecord, footprint_circles
from ..scenario.maps import Path
from .idm import IdmParams, idm_accel


class SimulationError(RuntimeError):
    pass


@dataclass
class SimConfig:
    mode: str = "nonreactive"     # or "reactive"
    layout: SceneLayout = field(default_factory=SceneLayout)
    replan_interval: int = 1      # steps between planner invocations
    idm: IdmParams = field(default_factory=IdmParams)
    lateral_threshold: float = 2.0   # m, for leader detection along a path
    lookahead: float = 120.0         # m, leader search range
    v_max: float = 30.0              # m/s, ego continuity bound

    def __post_init__(self):
        if self.mode not in ("nonreactive", "reactive"):
            raise SimulationError(f"unknown mode {self.mode!r}")
        if self.replan_interval < 1:
            raise SimulationError("replan interval must be >= 1")


@dataclass
class Event:
    step: int
    kind: str        # collision | off_drivable | planner_failure
    detail: str = ""
    # collision context used for at-fault attribution
    ego_speed: float = 0.0
    other_behind: bool = False


@dataclass
class Rollout:
    scenario_id: str
    map_family: str
    dt: float
    start_step: int
    ego_states: np.ndarray    # (steps, 5) x, y, sin, cos, speed
    agent_states: np.ndarray  # (n, steps, 5)
    events: list[Event]
    completed: bool

    @property
    def n_steps(self) -> int:
        return self.ego_states.shape[0]


def _plan_to_world(plan_states: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """Ego-frame plan rows (T, 4) -> world frame given the anchor state."""
    sin0, cos0 = anchor[2], anchor[3]
    rot = np.array([[cos0, -sin0], [sin0, cos0]])
    out = plan_states.copy()
    out[:, :2] = plan_states[:, :2] @ rot.T + anchor[:2]
    sin_l, cos_l = plan_states[:, 2], plan_states[:, 3]
    out[:, 2] = sin_l * cos0 + cos_l * sin0
    out[:, 3] = cos_l * cos0 - sin_l * sin0
    return out


def _check_collision(ego_state: np.ndarray, ego_dims: np.ndarray,
                     agent_states: np.ndarray, agent_dims: np.ndarray):
    """First colliding agent index or None, via two-circle footprints."""
    e_centers, e_r = footprint_circles(ego_state, ego_dims)
    for i in range(agent_states.shape[0]):
        a_centers, a_r = footprint_circles(agent_states[i], agent_dims[i])
        d = np.linalg.norm(e_centers[:, None, :] - a_centers[None, :, :], axis=-1)
        if np.any(d < e_r + a_r):
            return i
    return None


def _off_drivable(pos: np.ndarray, lanes, margin: float = 0.5) -> bool:
    from ..scenario.maps import point_to_polyline_distance
    best = np.inf
    for ln in lanes:
        best = min(best, point_to_polyline_distance(pos, ln.centerline)
                   - ln.width / 2.0 - margin)
        if best <= 0:
            return False
    return True


class _ReactiveAgent:
    """IDM agent following its own logged geometry at an adaptive speed."""

    def __init__(self, log: np.ndarray, dims: np.ndarray, start: int):
        self.path = Path(log[:, :2])
        self.dims = dims
        self.s = float(self.path.project(log[start, :2])[0])
        self.v = float(log[start, 4])
        self.v0 = max(float(log[:, 4].max()), 0.1)

    def state(self) -> np.ndarray:
        pos = self.path.position(self.s)
        hd = self.path.heading(self.s)[0]
        return np.array([pos[0], pos[1], hd[0], hd[1], self.v])


def run_closed_loop(record: ScenarioRecord, planner_fn, config: SimConfig) -> Rollout:
    """Roll the scenario forward with planner_fn driving the ego.

    planner_fn(cond) must return ego-frame states (1+M, 1+T, 4) or an object
    with a .states attribute of that shape; row 0 is the executed plan. The
    rollout starts once `layout.history` logged steps exist and ends at the
    log's end, or early on planner failure.
    """
    layout = config.layout
    dt = record.dt
    start = layout.history - 1
    n_total = record.n_steps
    if start >= n_total:
        raise SimulationError("scenario shorter than the required history")
    graph = record.graph()
    n_agents = record.agent_logs.shape[0]

    ego_log = record.ego_log.copy()      # rolling buffer; rows > start rewritten
    agent_log = record.agent_logs.copy()
    reactive = None
    if config.mode == "reactive":
        reactive = [_ReactiveAgent(record.agent_logs[i], record.agent_dims[i], start)
                    for i in range(n_agents)]

    events: list[Event] = []
    plan_world = None
    plan_cursor = 0
    completed = True

    for k in range(start, n_total - 1):
        if plan_world is None or plan_cursor >= config.replan_interval:
            cond = build_condition(ego_log, agent_log, record.agent_dims,
                                   record.lanes, graph, record.route_lane_ids,
                                   k, layout)
            try:
                out = planner_fn(cond)
            except Exception as e:  # noqa: BLE001 - any planner fault ends the rollout
                events.append(Event(k, "planner_failure", repr(e)))
                completed = False
                ego_log = ego_log[: k + 1]
                agent_log = agent_log[:, : k + 1]
                break
            states = out.states if hasattr(out, "states") else np.asarray(out)
            if states.ndim != 3 or states.shape[2] != 4 or states.shape[1] < 2:
                events.append(Event(k, "planner_failure",
                                    f"bad plan shape {states.shape}"))
                completed = False
                ego_log = ego_log[: k + 1]
                agent_log = agent_log[:, : k + 1]
                break
            plan_world = _plan_to_world(states[0], ego_log[k])
            plan_cursor = 0

        # ego: perfect tracking of the next planned waypoint
        plan_cursor += 1
        idx = min(plan_cursor, plan_world.shape[0] - 1)
        nxt = plan_world[idx]
        disp = np.linalg.norm(nxt[:2] - ego_log[k, :2])
        speed = disp / dt
        if speed > config.v_max:
            # clip along the segment so the continuity invariant holds
            frac = config.v_max * dt / max(disp, 1e-9)
            nxt = nxt.copy()
            nxt[:2] = ego_log[k, :2] + frac * (nxt[:2] - ego_log[k, :2])
            speed = config.v_max
        ego_log[k + 1, :4] = nxt[:4]
        ego_log[k + 1, 4] = speed

        # agents
        if config.mode == "reactive":
            cur = np.array([a.state() for a in reactive]) if n_agents else \
                np.zeros((0, 5))
            for i, agent in enumerate(reactive):
                gap, v_lead = _leader_gap(agent, i, cur, record.agent_dims,
                                          ego_log[k], record.ego_dims, config)
                a = idm_accel(agent.v, agent.v - v_lead, gap,
                              _with_v0(config.idm, agent.v0))
                agent.v = max(agent.v + a * dt, 0.0)
                agent.s = min(agent.s + agent.v * dt, agent.path.length)
                agent_log[i, k + 1] = agent.state()
        # nonreactive keeps the logged agent states untouched

        # events at the new step
        ci = _check_collision(ego_log[k + 1], record.ego_dims,
                              agent_log[:, k + 1], record.agent_dims)
        if ci is not None:
            rel = agent_log[ci, k + 1, :2] - ego_log[k + 1, :2]
            heading = ego_log[k + 1, 2:4]  # (sin, cos)
            behind = rel[0] * heading[1] + rel[1] * heading[0] < 0.0
            events.append(Event(k + 1, "collision", f"agent {ci}",
                                ego_speed=float(ego_log[k + 1, 4]),
                                other_behind=bool(behind)))
        if _off_drivable(ego_log[k + 1, :2], record.lanes):
            events.append(Event(k + 1, "off_drivable"))

    return Rollout(record.scenario_id, record.map_family, dt, start,
                   ego_log, agent_log, events, completed)


def _with_v0(idm: IdmParams, v0: float) -> IdmParams:
    from dataclasses import replace
    return replace(idm, v0=v0)


def _leader_gap(agent: _ReactiveAgent, i: int, cur: np.ndarray,
                agent_dims: np.ndarray, ego_state: np.ndarray,
                ego_dims: np.ndarray, config: SimConfig):
    """Gap to and speed of the nearest vehicle ahead on the agent's path."""
    best_gap, v_lead = np.inf, 0.0
    candidates = [(ego_state[:2], float(ego_state[4]), float(ego_dims[0]))]
    for j in range(cur.shape[0]):
        if j != i:
            candidates.append((cur[j, :2], float(cur[j, 4]), float(agent_dims[j, 0])))
    my_len = float(agent_dims[i, 0])
    for pos, v, length in candidates:
        s, lat = agent.path.project(pos)
        if lat > config.lateral_threshold:
            continue
        ahead = s - agent.s
        if ahead <= 0.0 or ahead > config.lookahead:
            continue
        gap = ahead - (length + my_len) / 2.0
        if gap < best_gap:
            best_gap, v_lead = gap, v
    return best_gap, v_lead


def expert_policy(record: ScenarioRecord, layout: SceneLayout):
    """Log-replay planner: returns the recorded future as its plan."""
    from ..scenario.features import _state_to_ego

    step_holder = {"k": layout.history - 1}

    def planner_fn(cond):
        k = step_holder["k"]
        T = layout.horizon
        end = min(k + T + 1, record.n_steps)
        seg = record.ego_log[k:end, :4]
        if seg.shape[0] < T + 1:
            seg = np.concatenate(
                [seg, np.repeat(seg[-1:], T + 1 - seg.shape[0], axis=0)])
        states = np.zeros((1 + layout.n_neighbors, T + 1, 4))
        states[0] = _state_to_ego(seg, record.ego_log[k])
        step_holder["k"] = k + 1
        return states

    return planner_fn
