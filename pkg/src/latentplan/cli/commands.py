"""Implementation of the pipeline subcommands.

Stages communicate only through artifacts in the output directory, so each
command can run in its own process and a saved resolved config reproduces the
whole pipeline.
"""

from __future__ import annotations

import csv

import numpy as np

from ..analysis import (ade, apd, export_latents, fpd, few_step_fidelity,
                        kmeans_latents, write_metrics_csv)
from ..diffusion.sampler import NfeCounter, SamplerConfig
from ..diffusion.schedule import NoiseSchedule
from ..numerics.rng import make_rng
from ..planner.plan import plan
from ..planner.train import train_planner
from ..scenario.features import build_condition, build_training_sample
from ..scenario.generate import ScenarioConfig, generate_scenario
from ..scenario.normalize import compute_norm_stats
from ..simulator.closed_loop import SimConfig, run_closed_loop
from ..simulator.bench import BenchConfig, bench_latency
from ..simulator.io import write_bench_csv, write_rollout_csv, write_score_report
from ..simulator.score import score
from ..trajvae.train import compute_latent_scale, train_vae
from .artifacts import (Workspace, load_bundle, load_dataset, load_stats,
                        load_vae, save_bundle, save_dataset, save_vae)
from .config import RunConfig

# Philox stream offsets for CLI-level randomness, disjoint from the training
# streams used inside the train_* entry points.
_STREAM_PLAN = 40
_STREAM_SIM = 50
_STREAM_ANALYZE = 60
_STREAM_BENCH = 70


def _scenario_config(run: RunConfig, index: int) -> ScenarioConfig:
    fams = run.scenario.families
    return ScenarioConfig(map_family=fams[index % len(fams)],
                          n_neighbors=run.scenario.n_neighbors,
                          duration=run.scenario.duration,
                          dt=run.scenario.dt,
                          min_gap=run.scenario.min_gap)


def _write_report_csv(path, report: list[dict]) -> None:
    if not report:
        return
    keys = list(report[0])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(keys)
        for row in report:
            wr.writerow([f"{row[k]:.9g}" if isinstance(row[k], float) else row[k]
                         for k in keys])


def cmd_gen_data(run: RunConfig, ws: Workspace) -> int:
    samples = []
    for i in range(run.scenario.count):
        rec = generate_scenario(run.scenario.seed_start + i,
                                _scenario_config(run, i))
        samples.append(build_training_sample(rec, run.scenario.t0, run.layout))
    save_dataset(ws.dataset, samples, run.layout)
    stats = compute_norm_stats([t for t, _ in samples])
    stats.save(ws.norm_stats)
    print(f"wrote {len(samples)} samples to {ws.dataset}")
    return 0


def cmd_train_vae(run: RunConfig, ws: Workspace) -> int:
    ws.require(ws.dataset, "gen-data")
    samples, _ = load_dataset(ws.dataset)
    stats = load_stats(ws)
    trajs = [t for t, _ in samples]
    vae, report = train_vae(trajs, stats, run.vae_model, run.vae_train,
                            seed=run.seed,
                            log_fn=lambda r: print(
                                f"epoch {r['epoch']} recon {r['recon']:.5f} "
                                f"ego_ade {r['ego_ade']:.3f}", flush=True))
    stats.latent_scale = compute_latent_scale(trajs, stats, vae, seed=run.seed)
    stats.save(ws.norm_stats)
    save_vae(ws.vae_ckpt, vae)
    _write_report_csv(ws.vae_log, report)
    print(f"wrote {ws.vae_ckpt} (latent_scale {stats.latent_scale:.4f})")
    return 0


def cmd_train_teacher(run: RunConfig, ws: Workspace) -> int:
    ws.require(ws.dataset, "gen-data")
    samples, layout = load_dataset(ws.dataset)
    stats = load_stats(ws)
    bundle, report = train_planner(samples, stats, run.teacher_model,
                                   run.teacher_train, layout, seed=run.seed)
    save_bundle(ws.teacher_ckpt, bundle)
    _write_report_csv(ws.teacher_log, report)
    print(f"wrote {ws.teacher_ckpt}")
    return 0


def cmd_train_planner(run: RunConfig, ws: Workspace) -> int:
    ws.require(ws.dataset, "gen-data")
    ws.require(ws.vae_ckpt, "train-vae")
    ws.require(ws.teacher_ckpt, "train-teacher")
    samples, layout = load_dataset(ws.dataset)
    stats = load_stats(ws)
    vae = load_vae(ws.vae_ckpt, run.vae_model)
    teacher = load_bundle(ws.teacher_ckpt, run.teacher_model, layout).denoiser
    bundle, report = train_planner(samples, stats, run.planner_model,
                                   run.planner_train, layout, seed=run.seed,
                                   vae=vae, teacher=teacher)
    save_bundle(ws.planner_ckpt, bundle)
    _write_report_csv(ws.planner_log, report)
    print(f"wrote {ws.planner_ckpt}")
    return 0


def _load_planner(run: RunConfig, ws: Workspace):
    ws.require(ws.vae_ckpt, "train-vae")
    ws.require(ws.planner_ckpt, "train-planner")
    stats = load_stats(ws)
    vae = load_vae(ws.vae_ckpt, run.vae_model)
    denoiser = load_bundle(ws.planner_ckpt, run.planner_model,
                           run.layout).denoiser
    return vae, denoiser, stats


def cmd_plan(run: RunConfig, ws: Workspace) -> int:
    vae, denoiser, stats = _load_planner(run, ws)
    schedule = NoiseSchedule()
    rows = []
    for i in range(run.analysis.n_scenarios):
        seed = run.analysis.seed_start + i
        rec = generate_scenario(seed, _scenario_config(run, i))
        cond = build_condition(rec.ego_log, rec.agent_logs, rec.agent_dims,
                               rec.lanes, rec.graph(), rec.route_lane_ids,
                               run.layout.history - 1, run.layout)
        rng = make_rng(run.seed, stream=_STREAM_PLAN + i)
        modes = plan(cond, denoiser, vae, stats, run.sampler, rng,
                     n_modes=run.n_modes, schedule=schedule)
        for m, traj in enumerate(modes):
            for t in range(traj.states.shape[1]):
                x, y, s, c = traj.states[0, t]
                rows.append([rec.scenario_id, m, t,
                             f"{x:.6f}", f"{y:.6f}", f"{s:.6f}", f"{c:.6f}"])
    with open(ws.plans_csv, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scenario_id", "mode", "t", "x", "y", "sin", "cos"])
        wr.writerows(rows)
    print(f"wrote {ws.plans_csv}")
    return 0


def cmd_simulate(run: RunConfig, ws: Workspace) -> int:
    vae, denoiser, stats = _load_planner(run, ws)
    schedule = NoiseSchedule()
    sim_cfg = SimConfig(mode=run.simulator.mode, layout=run.layout,
                        replan_interval=run.simulator.replan_interval,
                        idm=run.idm,
                        lateral_threshold=run.simulator.lateral_threshold,
                        lookahead=run.simulator.lookahead,
                        v_max=run.simulator.v_max)
    ws.rollouts.mkdir(parents=True, exist_ok=True)
    scores = {}
    for i in range(run.simulator.count):
        rec = generate_scenario(run.simulator.seed_start + i,
                                _scenario_config(run, i))
        rng = make_rng(run.seed, stream=_STREAM_SIM + i)

        def planner_fn(cond):
            return plan(cond, denoiser, vae, stats, run.sampler, rng,
                        n_modes=1, schedule=schedule)[0]

        rollout = run_closed_loop(rec, planner_fn, sim_cfg)
        write_rollout_csv(ws.rollouts / f"{rec.scenario_id}.csv", rollout)
        scores[rec.scenario_id] = score(rollout, rec)
        print(f"{rec.scenario_id}: total {scores[rec.scenario_id].total:.4f}")
    write_score_report(ws.scores, scores)
    print(f"wrote {ws.scores}")
    return 0


def cmd_analyze(run: RunConfig, ws: Workspace) -> int:
    vae, denoiser, stats = _load_planner(run, ws)
    schedule = NoiseSchedule()
    spec = run.analysis
    ref_cfg = SamplerConfig(order=2, steps=spec.reference_steps,
                            guidance=run.sampler.guidance,
                            temperature=run.sampler.temperature,
                            grid=run.sampler.grid)
    rows = []
    latent_bank = []
    agg: dict[str, list[float]] = {}

    def emit(sid: str, name: str, value: float) -> None:
        rows.append((sid, name, value))
        agg.setdefault(name, []).append(value)

    for i in range(spec.n_scenarios):
        seed = spec.seed_start + i
        rec = generate_scenario(seed, _scenario_config(run, i))
        t0 = run.layout.history - 1
        traj, cond = build_training_sample(rec, t0, run.layout)
        rng = make_rng(run.seed, stream=_STREAM_ANALYZE + i)

        modes = plan(cond, denoiser, vae, stats, run.sampler, rng,
                     n_modes=spec.n_modes, schedule=schedule)
        ego_modes = np.stack([m.states[0] for m in modes])
        emit(rec.scenario_id, "ade_expert", ade(ego_modes[0], traj.states[0]))
        emit(rec.scenario_id, "apd", apd(ego_modes))
        emit(rec.scenario_id, "fpd", fpd(ego_modes))

        few, z_few = plan(cond, denoiser, vae, stats, run.sampler, rng,
                          n_modes=spec.fidelity_batch, schedule=schedule,
                          return_latents=True)
        ref, z_ref = plan(cond, denoiser, vae, stats, ref_cfg, rng,
                          n_modes=spec.fidelity_batch, schedule=schedule,
                          return_latents=True)
        x_few = np.stack([m.states[0] for m in few])
        x_ref = np.stack([m.states[0] for m in ref])
        l_z, l_x = few_step_fidelity(
            z_few.reshape(spec.fidelity_batch, -1),
            z_ref.reshape(spec.fidelity_batch, -1),
            x_few, x_ref, per_dimension=spec.per_dimension)
        emit(rec.scenario_id, "l_z", l_z)
        emit(rec.scenario_id, "l_x", l_x)
        latent_bank.append(z_few[:, 0])  # ego codes

    latents = np.concatenate(latent_bank)[:spec.kmeans_samples]
    exports = {"ego_latents": latents}
    if latents.shape[0] >= spec.kmeans_k:
        km = kmeans_latents(latents, spec.kmeans_k, seed=run.seed,
                            vae=vae, stats=stats)
        rows.append(("aggregate", "kmeans_inertia", km.inertia))
        exports["kmeans_centers"] = km.centers
        exports["kmeans_prototypes"] = km.prototypes
    for name, values in agg.items():
        rows.append(("aggregate", name, float(np.mean(values))))
    write_metrics_csv(ws.metrics_csv, rows)
    export_latents(ws.latents_ckpt, exports)
    print(f"wrote {ws.metrics_csv} and {ws.latents_ckpt}")
    return 0


def cmd_bench(run: RunConfig, ws: Workspace) -> int:
    vae, denoiser, stats = _load_planner(run, ws)
    schedule = NoiseSchedule()
    conds = []
    for i in range(run.bench.n_conditions):
        rec = generate_scenario(run.analysis.seed_start + i,
                                _scenario_config(run, i))
        conds.append(build_condition(
            rec.ego_log, rec.agent_logs, rec.agent_dims, rec.lanes,
            rec.graph(), rec.route_lane_ids, run.layout.history - 1,
            run.layout))
    rng = make_rng(run.seed, stream=_STREAM_BENCH)
    counter = NfeCounter()

    def planner_fn(cond):
        return plan(cond, denoiser, vae, stats, run.sampler, rng,
                    n_modes=run.n_modes, schedule=schedule, counter=counter)

    planner_fn(conds[0])
    nfe_per_call = counter.count
    result = bench_latency(
        planner_fn, conds,
        BenchConfig(warmup=run.bench.warmup, repeats=run.bench.repeats),
        nfe=nfe_per_call)
    result["config"] = (f"order{run.sampler.order}_steps{run.sampler.steps}"
                        f"_cfg{run.sampler.guidance:g}")
    write_bench_csv(ws.bench_csv, [result])
    print(f"mean {result['mean_ms']:.1f} ms, p99 {result['p99_ms']:.1f} ms, "
          f"nfe {nfe_per_call}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-vae": cmd_train_vae,
    "train-teacher": cmd_train_teacher,
    "train-planner": cmd_train_planner,
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "bench": cmd_bench,
}
