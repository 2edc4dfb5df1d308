from .bench import BenchConfig, bench_latency
from .closed_loop import (Event, Rollout, SimConfig, SimulationError,
                          expert_policy, run_closed_loop)
from .idm import IdmParams, idm_accel
from .io import write_bench_csv, write_rollout_csv, write_score_report
from .score import ClosedLoopScore, ScoreWeights, score

__all__ = [
    "BenchConfig", "ClosedLoopScore", "Event", "IdmParams", "Rollout",
    "ScoreWeights", "SimConfig", "SimulationError", "bench_latency",
    "expert_policy", "idm_accel", "run_closed_loop", "score",
    "write_bench_csv", "write_rollout_csv", "write_score_report",
]
