"""File formats for rollouts, score reports, and latency benchmarks."""

from __future__ import annotations

import csv
from pathlib import Path

from .closed_loop import Rollout
from .score import ClosedLoopScore

ROLLOUT_HEADER = ["t", "agent", "x", "y", "sin", "cos", "speed",
                  "collision", "off_drivable", "planner_failure"]
BENCH_HEADER = ["config", "mean_ms", "p50_ms", "p99_ms", "nfe"]


def write_rollout_csv(path, rollout: Rollout) -> None:
    """One row per (step, agent); agent -1 is the ego; event flags on ego rows."""
    flags = {k: {"collision": 0, "off_drivable": 0, "planner_failure": 0}
             for k in range(rollout.n_steps)}
    for ev in rollout.events:
        if ev.step in flags and ev.kind in flags[ev.step]:
            flags[ev.step][ev.kind] = 1
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(ROLLOUT_HEADER)
        for k in range(rollout.n_steps):
            t = k * rollout.dt
            e = rollout.ego_states[k]
            fl = flags[k]
            wr.writerow([f"{t:.3f}", -1, *(f"{x:.6f}" for x in e),
                         fl["collision"], fl["off_drivable"], fl["planner_failure"]])
            for i in range(rollout.agent_states.shape[0]):
                a = rollout.agent_states[i, k]
                wr.writerow([f"{t:.3f}", i, *(f"{x:.6f}" for x in a), 0, 0, 0])


def write_score_report(path, scores: dict[str, ClosedLoopScore]) -> None:
    """key=value text, one block per scenario plus an aggregate mean."""
    lines = []
    for sid, sc in scores.items():
        lines.append(f"[{sid}]")
        lines.append(f"at_fault_collision={sc.at_fault_collision}")
        lines.append(f"drivable_area={sc.drivable_area}")
        lines.append(f"ttc={sc.ttc:.6f}")
        lines.append(f"progress={sc.progress:.6f}")
        lines.append(f"speed_limit={sc.speed_limit:.6f}")
        lines.append(f"comfort={sc.comfort:.6f}")
        lines.append(f"total={sc.total:.6f}")
        lines.append("")
    if scores:
        mean = sum(s.total for s in scores.values()) / len(scores)
        lines.append("[aggregate]")
        lines.append(f"mean_total={mean:.6f}")
        lines.append(f"count={len(scores)}")
        lines.append("")
    Path(path).write_text("\n".join(lines))


def write_bench_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(BENCH_HEADER)
        for r in rows:
            wr.writerow([r.get("config", ""), f"{r['mean_ms']:.4f}",
                         f"{r['p50_ms']:.4f}", f"{r['p99_ms']:.4f}", r["nfe"]])
