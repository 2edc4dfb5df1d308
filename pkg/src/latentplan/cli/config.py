"""Run configuration: YAML files with includes, dotted overrides, and
strict validation into the per-module config dataclasses."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from ..diffusion.sampler import SamplerConfig, SamplerError
from ..planner.model import PlannerConfig, PlannerError
from ..planner.train import PlannerTrainConfig
from ..scenario.features import SceneLayout
from ..simulator.idm import IdmParams
from ..trajvae.model import VaeConfig
from ..trajvae.train import VaeTrainConfig


class ConfigError(Exception):
    """Raised on unparsable, unknown, or inconsistent configuration."""


@dataclass
class ScenarioSpec:
    count: int = 100
    seed_start: int = 0
    families: list = field(default_factory=lambda: [
        "straight", "curve", "intersection", "lane-change"])
    n_neighbors: int = 3
    duration: float = 11.5
    dt: float = 0.1
    min_gap: float = 25.0
    t0: int = 12        # anchor step for training samples


@dataclass
class SimulatorSpec:
    mode: str = "nonreactive"
    count: int = 4
    seed_start: int = 10_000  # disjoint from the training scenario seeds
    replan_interval: int = 10
    lateral_threshold: float = 2.0
    lookahead: float = 120.0
    v_max: float = 30.0


@dataclass
class AnalysisSpec:
    n_scenarios: int = 4
    seed_start: int = 10_000
    n_modes: int = 6
    fidelity_batch: int = 32
    reference_steps: int = 20
    per_dimension: bool = True
    kmeans_k: int = 10
    kmeans_samples: int = 200


@dataclass
class BenchSpec:
    warmup: int = 2
    repeats: int = 20
    n_conditions: int = 4


@dataclass
class RunConfig:
    seed: int
    out: Path
    workers: int
    scenario: ScenarioSpec
    layout: SceneLayout
    vae_model: VaeConfig
    vae_train: VaeTrainConfig
    teacher_model: PlannerConfig
    teacher_train: PlannerTrainConfig
    planner_model: PlannerConfig
    planner_train: PlannerTrainConfig
    sampler: SamplerConfig
    n_modes: int
    simulator: SimulatorSpec
    idm: IdmParams
    analysis: AnalysisSpec
    bench: BenchSpec
    raw: dict


def deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path) -> dict:
    """Parse a YAML config, resolving `include:` entries relative to the file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    includes = data.pop("include", [])
    if isinstance(includes, str):
        includes = [includes]
    merged: dict = {}
    for inc in includes:
        merged = deep_merge(merged, load_config(path.parent / inc))
    return deep_merge(merged, data)


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply repeatable --set dotted.path=value entries (YAML-typed values)."""
    out = dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        key, _, raw = item.partition("=")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: bad value: {exc}") from exc
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            child = node.get(p)
            if not isinstance(child, dict):
                child = {}
            node[p] = dict(child)
            node = node[p]
        node[parts[-1]] = value
    return out


def _build(cls, section, where: str):
    section = section or {}
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(section).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError, PlannerError, SamplerError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_SECTIONS = {"seed", "out", "workers", "scenario", "layout", "vae", "teacher",
             "planner", "sampler", "simulator", "idm", "analysis", "bench"}


def resolve(cfg: dict, *, seed=None, out=None) -> RunConfig:
    """Validate the merged config dict into typed per-module configs.

    seed/out from the command line override the file values.
    """
    unknown = set(cfg) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    for two_part, name in ((cfg.get("vae"), "vae"), (cfg.get("teacher"), "teacher"),
                           (cfg.get("planner"), "planner")):
        if two_part is not None:
            extra = set(two_part) - {"model", "train"}
            if extra:
                raise ConfigError(f"{name}: unknown keys {sorted(extra)}")

    seed = int(cfg.get("seed", 0) if seed is None else seed)
    out_val = cfg.get("out", "runs/default") if out is None else out
    workers = int(cfg.get("workers", 1))
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")

    sampler_sec = dict(cfg.get("sampler") or {})
    n_modes = int(sampler_sec.pop("n_modes", 3))
    if n_modes < 1:
        raise ConfigError(f"sampler.n_modes must be >= 1, got {n_modes}")

    vae_sec = cfg.get("vae") or {}
    teacher_sec = cfg.get("teacher") or {}
    planner_sec = cfg.get("planner") or {}

    teacher_model = _build(PlannerConfig, {
        "pixel_space": True, "alpha": 0.0,
        **(teacher_sec.get("model") or {})}, "teacher.model")
    if not teacher_model.pixel_space or teacher_model.alpha != 0.0:
        raise ConfigError(
            "teacher.model must keep pixel_space: true and alpha: 0.0")
    planner_model = _build(PlannerConfig, planner_sec.get("model"), "planner.model")
    if planner_model.pixel_space:
        raise ConfigError("planner.model.pixel_space must be false")

    run = RunConfig(
        seed=seed,
        out=Path(out_val),
        workers=workers,
        scenario=_build(ScenarioSpec, cfg.get("scenario"), "scenario"),
        layout=_build(SceneLayout, cfg.get("layout"), "layout"),
        vae_model=_build(VaeConfig, vae_sec.get("model"), "vae.model"),
        vae_train=_build(VaeTrainConfig, vae_sec.get("train"), "vae.train"),
        teacher_model=teacher_model,
        teacher_train=_build(PlannerTrainConfig, teacher_sec.get("train"),
                             "teacher.train"),
        planner_model=planner_model,
        planner_train=_build(PlannerTrainConfig, planner_sec.get("train"),
                             "planner.train"),
        sampler=_build(SamplerConfig, sampler_sec, "sampler"),
        n_modes=n_modes,
        simulator=_build(SimulatorSpec, cfg.get("simulator"), "simulator"),
        idm=_build(IdmParams, cfg.get("idm"), "idm"),
        analysis=_build(AnalysisSpec, cfg.get("analysis"), "analysis"),
        bench=_build(BenchSpec, cfg.get("bench"), "bench"),
        raw=cfg,
    )
    try:
        run.vae_model.validate()
        run.idm.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if run.scenario.n_neighbors != run.layout.n_neighbors:
        raise ConfigError(
            f"scenario.n_neighbors ({run.scenario.n_neighbors}) must equal "
            f"layout.n_neighbors ({run.layout.n_neighbors})")
    if run.planner_model.latent_dim != run.vae_model.latent_dim:
        raise ConfigError("planner.model.latent_dim must match vae.model.latent_dim")
    bad = [f for f in run.scenario.families
           if f not in ("straight", "curve", "intersection", "lane-change")]
    if bad:
        raise ConfigError(f"unknown map families {bad}")
    return run


def resolved_dict(run: RunConfig) -> dict:
    """The exact settings of a run, suitable for re-running it bit-for-bit."""
    def enc(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {f.name: enc(getattr(obj, f.name)) for f in fields(obj)}
        if isinstance(obj, Path):
            return str(obj)
        if isinstance(obj, (list, tuple)):
            return [enc(v) for v in obj]
        return obj

    return {
        "seed": run.seed,
        "out": str(run.out),
        "workers": run.workers,
        "scenario": enc(run.scenario),
        "layout": enc(run.layout),
        "vae": {"model": enc(run.vae_model), "train": enc(run.vae_train)},
        "teacher": {"model": enc(run.teacher_model), "train": enc(run.teacher_train)},
        "planner": {"model": enc(run.planner_model), "train": enc(run.planner_train)},
        "sampler": {**enc(run.sampler), "n_modes": run.n_modes},
        "simulator": enc(run.simulator),
        "idm": enc(run.idm),
        "analysis": enc(run.analysis),
        "bench": enc(run.bench),
    }


def write_snapshot(run: RunConfig, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(resolved_dict(run), fh, sort_keys=True)
