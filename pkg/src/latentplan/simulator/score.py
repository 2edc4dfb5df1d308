"""Closed-loop scoring: multiplier gates times a weighted metric average."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..scenario.generate import ScenarioRecord, footprint_circles
from ..scenario.maps import Path
from .closed_loop import Rollout


@dataclass
class ScoreWeights:
    ttc: float = 5.0
    progress: float = 5.0
    speed: float = 4.0
    comfort: float = 2.0
    ttc_threshold: float = 0.95   # s
    accel_bound: float = 2.4      # m/s^2
    jerk_bound: float = 8.4       # m/s^3
    speed_tolerance: float = 0.1  # m/s over the limit before a step counts
    stationary_speed: float = 0.1 # m/s, for at-fault attribution


@dataclass
class ClosedLoopScore:
    at_fault_collision: int     # multiplier: 1 = clean
    drivable_area: int          # multiplier: 1 = clean
    ttc: float
    progress: float
    speed_limit: float
    comfort: float
    total: float
    components: dict = field(default_factory=dict)


def _ttc_fraction(rollout: Rollout, record: ScenarioRecord, threshold: float) -> float:
    """Fraction of steps whose constant-velocity time to collision >= threshold."""
    n = rollout.n_steps
    if rollout.agent_states.shape[0] == 0 or n == 0:
        return 1.0
    _, e_r = footprint_circles(rollout.ego_states[0], record.ego_dims)
    ok = 0
    for k in range(rollout.start_step, n):
        ego = rollout.ego_states[k]
        ev = ego[4] * np.array([ego[3], ego[2]])  # (vx, vy) from (sin, cos)
        ttc_min = np.inf
        for i in range(rollout.agent_states.shape[0]):
            ag = rollout.agent_states[i, k]
            _, a_r = footprint_circles(ag, record.agent_dims[i])
            p = ag[:2] - ego[:2]
            v = ag[4] * np.array([ag[3], ag[2]]) - ev
            r = e_r + a_r
            # ||p + v t|| = r ; smallest positive root
            a = v @ v
            b = 2.0 * (p @ v)
            c = p @ p - r * r
            if c <= 0:
                ttc_min = 0.0
                break
            if a < 1e-12:
                continue
            disc = b * b - 4 * a * c
            if disc < 0:
                continue
            t1 = (-b - np.sqrt(disc)) / (2 * a)
            if t1 >= 0:
                ttc_min = min(ttc_min, t1)
        if ttc_min >= threshold:
            ok += 1
    steps = n - rollout.start_step
    return ok / steps if steps else 1.0


def _progress(rollout: Rollout, record: ScenarioRecord) -> float:
    route = Path(record.graph().chain_centerline(record.route_lane_ids))
    s_start = route.project(rollout.ego_states[rollout.start_step, :2])[0]
    s_end = route.project(rollout.ego_states[-1, :2])[0]
    k_exp = min(rollout.n_steps - 1, record.n_steps - 1)
    e_start = route.project(record.ego_log[rollout.start_step, :2])[0]
    e_end = route.project(record.ego_log[k_exp, :2])[0]
    expert = e_end - e_start
    if expert <= 1e-6:
        return 1.0
    return float(np.clip((s_end - s_start) / expert, 0.0, 1.0))


def _speed_compliance(rollout: Rollout, record: ScenarioRecord, tol: float) -> float:
    from ..scenario.maps import point_to_polyline_distance
    n = rollout.n_steps
    over = 0
    steps = 0
    for k in range(rollout.start_step, n):
        pos = rollout.ego_states[k, :2]
        d = [point_to_polyline_distance(pos, ln.centerline) for ln in record.lanes]
        limit = record.lanes[int(np.argmin(d))].speed_limit
        steps += 1
        if rollout.ego_states[k, 4] > limit + tol:
            over += 1
    return 1.0 - over / steps if steps else 1.0


def _comfort(rollout: Rollout, w: ScoreWeights) -> float:
    v = rollout.ego_states[rollout.start_step:, 4]
    if v.size < 3:
        return 1.0
    a = np.diff(v) / rollout.dt
    jerk = np.diff(a) / rollout.dt
    ok_a = np.abs(a) <= w.accel_bound
    ok_j = np.abs(jerk) <= w.jerk_bound
    checks = np.concatenate([ok_a, ok_j])
    return float(checks.mean())


def score(rollout: Rollout, record: ScenarioRecord,
          weights: ScoreWeights | None = None) -> ClosedLoopScore:
    """total = (product of 0/1 multipliers) * (sum w_i m_i / sum w_i)."""
    w = weights or ScoreWeights()
    at_fault = 1
    for ev in rollout.events:
        if ev.kind == "collision":
            struck_from_behind = ev.other_behind and ev.ego_speed < w.stationary_speed
            if not struck_from_behind:
                at_fault = 0
        elif ev.kind == "planner_failure":
            at_fault = 0
    drivable = 0 if any(e.kind == "off_drivable" for e in rollout.events) else 1

    ttc = _ttc_fraction(rollout, record, w.ttc_threshold)
    progress = _progress(rollout, record)
    speed = _speed_compliance(rollout, record, w.speed_tolerance)
    comfort = _comfort(rollout, w)

    wsum = w.ttc + w.progress + w.speed + w.comfort
    avg = (w.ttc * ttc + w.progress * progress + w.speed * speed
           + w.comfort * comfort) / wsum
    total = at_fault * drivable * avg
    return ClosedLoopScore(at_fault, drivable, ttc, progress, speed, comfort,
                           float(total),
                           {"ttc": ttc, "progress": progress,
                            "speed_limit": speed, "comfort": comfort})
