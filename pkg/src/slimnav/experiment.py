"""File-based pipeline stages shared by the command line and the acceptance suite."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .energy import EnergyProfile, bench_table, cost
from .errors import ContractViolation, SlimnavError
from .eval import plots
from .eval.analysis import context_correlations, rho_heatmap, saturation_analysis
from .eval.suite import REFERENCE_DELTAS, StaticAgent, SuiteMetrics, compare, evaluate_suite
from .perception.backends import EmulatorBackend, GroundTruthBackend, NetBackend
from .perception.slimmable import SlimmableNet
from .perception.training import MdeDataset, collect_dataset, evaluate_r2, settings_dict, train_slimmable
from .policy.episode import ActionSpace, EpisodeResult, StepRecord
from .policy.training import PolicyConfig, load_policy, save_policy, train_policy, write_curve
from .world.episodes import DifficultyIndex, EpisodeSpec, build_holdout_sets, load_episodes, save_episodes
from .world.grid import GridWorld, generate_world
from .world.motion import MotionSet, WEST
from .world.sensing import ObservationCache

log = logging.getLogger(__name__)


class ArtifactError(SlimnavError):
    """A required input file is missing or was produced under a different configuration."""


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _need(path: Path) -> Path:
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}; run the producing command first")
    return path


def _check_hash(found: str | None, cfg: ExperimentConfig, what: Path) -> None:
    if found != cfg.hash():
        raise ArtifactError(f"{what} was produced under config {str(found)[:12]}, current config is "
                            f"{cfg.hash()[:12]}; rerun the pipeline or pass the matching --config")


def profile_of(cfg: ExperimentConfig) -> EnergyProfile:
    return EnergyProfile.load(cfg.energy_profile) if cfg.energy_profile else EnergyProfile.default()


def motion_set(cfg: ExperimentConfig) -> MotionSet:
    return MotionSet(tuple(cfg.policy.magnitudes))


# -- world ----------------------------------------------------------------------


def gen_world(cfg: ExperimentConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    world = generate_world(cfg.stage_seed("world"), cfg.world)
    world.save(out / "world")
    index = DifficultyIndex(world, motion_set(cfg))
    per = {"validation": cfg.eval.validation_per_bucket, "test": cfg.eval.test_per_bucket}
    levels = None if cfg.eval.holdout_levels is None else list(cfg.eval.holdout_levels)
    sets = build_holdout_sets(index, per, cfg.stage_seed("holdout"), levels)
    meta = {"config_hash": cfg.hash(), "world_seed": world.seed}
    for name, eps in sets.items():
        save_episodes(out / f"{name}.json", eps, {**meta, "split": name})
    summary = {"config_hash": cfg.hash(), "free_cells": int(world.free.sum()),
               "train_bucket_counts": index.bucket_counts("train"),
               "holdout_bucket_counts": index.bucket_counts("holdout"),
               **{f"{k}_episodes": len(v) for k, v in sets.items()}}
    _dump(out / "world_summary.json", summary)
    return summary


def load_world(cfg: ExperimentConfig, out: Path) -> GridWorld:
    world = GridWorld.load(_need(out / "world.json").with_suffix(""))
    if world.seed != cfg.stage_seed("world"):
        raise ArtifactError(f"world in {out} was generated with seed {world.seed}")
    return world


def load_holdout(cfg: ExperimentConfig, out: Path, name: str) -> list[EpisodeSpec]:
    path = _need(out / f"{name}.json")
    _check_hash(json.loads(path.read_text())["meta"].get("config_hash"), cfg, path)
    return load_episodes(path)


# -- perception --------------------------------------------------------------------


def collect_data(cfg: ExperimentConfig, out: Path) -> dict:
    world = load_world(cfg, out)
    ds = collect_dataset(world, cfg.perception.dataset_size, cfg.stage_seed("dataset"), cfg.sensor,
                         cfg.perception.split)
    ds.save(out / "mde_data", {"config_hash": cfg.hash()})
    return ds.manifest()


def train_mde(cfg: ExperimentConfig, out: Path) -> dict:
    path = _need(out / "mde_data.json")
    _check_hash(json.loads(path.read_text()).get("config_hash"), cfg, path)
    ds = MdeDataset.load(out / "mde_data")
    settings = replace(cfg.perception.training, seed=cfg.stage_seed("mde"))
    result = train_slimmable(ds, cfg.perception.network, settings)
    x_te, y_te = ds.subset("test")
    reports = [evaluate_r2(result.net, x_te, y_te, r) for r in sorted(cfg.perception.network.rho_set)]
    report = {"config_hash": cfg.hash(), "best_epoch": result.best_epoch, "epochs_run": len(result.history),
              "settings": settings_dict(settings), "fingerprint": result.net.fingerprint(),
              "test": [{"rho": r.rho, "r2": r.r2, "l1_m": r.l1} for r in reports],
              "reference_best_r2": 0.9033}
    result.net.save(out / "mde.npz", {"config_hash": cfg.hash()})
    _dump(out / "mde_report.json", report)
    with open(out / "mde_history.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(result.history[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(result.history)
    plots.r2_bars({r.rho: r.r2 for r in reports}, out / "r2.png")
    return report


def make_backend(cfg: ExperimentConfig, world: GridWorld, out: Path):
    obs = ObservationCache(world, cfg.sensor, cfg.perception.cache_quantization, cfg.stage_seed("noise"))
    kind = cfg.perception.backend
    rhos = cfg.perception.network.rho_set
    if kind == "ground_truth":
        return GroundTruthBackend(obs, rhos)
    if kind == "emulator":
        return EmulatorBackend(obs, rhos, cfg.perception.emulator, cfg.stage_seed("noise"))
    net, meta = SlimmableNet.load(_need(out / "mde.npz"))
    _check_hash(meta.get("config_hash"), cfg, out / "mde.npz")
    return NetBackend(net, obs)


# -- policy --------------------------------------------------------------------------


def variants(cfg: ExperimentConfig) -> dict[str, PolicyConfig]:
    """Adaptive policy plus one navigation-only policy per static size."""
    base = replace(cfg.policy, seed=cfg.stage_seed("policy"))
    out = {"adaptive": base}
    alpha = cfg.perception.network.alpha
    for a in cfg.eval.static_alphas:
        rho = a / alpha
        if rho not in cfg.perception.network.rho_set:
            raise ContractViolation(f"static size {a} is not a width of the alpha={alpha} network")
        out[f"static-{a}"] = replace(base, gates=(rho,))
    return out


def train_variant(cfg: ExperimentConfig, out: Path, variant: str, progress: bool = False) -> dict:
    configs = variants(cfg)
    if variant not in configs:
        raise ArtifactError(f"unknown policy variant {variant!r}; choose from {', '.join(configs)}")
    pcfg = configs[variant]
    world = load_world(cfg, out)
    validation = load_holdout(cfg, out, "validation")
    backend = make_backend(cfg, world, out)
    index = DifficultyIndex(world, motion_set(cfg))
    result = train_policy(world, backend, profile_of(cfg), index, validation, pcfg, progress=progress)
    save_policy(out / f"policy_{variant}.npz", result.qnet, result.space, pcfg, cfg.hash(),
                {"variant": variant, "best_episode": result.best_episode})
    write_curve(out / f"curve_{variant}.csv", result.curve)
    plots.learning_curve(result.curve, out / f"curve_{variant}.png")
    log.info("%s: %d updates in %.0fs", variant, result.updates, result.seconds)
    summary = {"variant": variant, "best_episode": result.best_episode,
               "validation_accuracy": result.best.accuracy, "validation_energy_mj": result.best.energy_mj}
    return summary


# -- evaluation -------------------------------------------------------------------------


def _policy_agent(qnet, space: ActionSpace, pcfg: PolicyConfig, variant: str):
    if variant.startswith("static-") and len(space.gates) > 1:
        return StaticAgent(qnet, space, max(pcfg.gates))
    return qnet


def evaluate(cfg: ExperimentConfig, out: Path, workers: int = 1) -> dict:
    world = load_world(cfg, out)
    test = load_holdout(cfg, out, "test")
    profile = profile_of(cfg)
    metrics: dict[str, SuiteMetrics] = {}
    for variant in variants(cfg):
        path = out / f"policy_{variant}.npz"
        if not path.exists():
            log.warning("no checkpoint for %s; skipping", variant)
            continue
        qnet, space, pcfg, _ = load_policy(path, expect_hash=cfg.hash())
        backend = make_backend(cfg, world, out)
        agent = _policy_agent(qnet, space, pcfg, variant)
        metrics[variant] = evaluate_suite(world, backend, profile, agent, test, space, pcfg.task, workers)
        save_traces(out / f"traces_{variant}.json", metrics[variant].episodes, cfg.hash(), variant)
    if not metrics:
        raise ArtifactError(f"no policy checkpoints in {out}; run train-policy first")
    alpha = cfg.perception.network.alpha
    report = {"config_hash": cfg.hash(), "test_episodes": len(test),
              "metrics": {k: m.summary() for k, m in metrics.items()}, "deltas": {},
              "reference_deltas": REFERENCE_DELTAS}
    if "adaptive" in metrics:
        for k, m in metrics.items():
            if k != "adaptive":
                report["deltas"][k] = compare(metrics["adaptive"], m)
    _dump(out / "eval.json", report)
    with open(out / "eval_episodes.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "episode", "difficulty", "success", "steps", "energy_mj", "acquisitions",
                    "distance_per_acquisition"])
        for k, m in metrics.items():
            for i, r in enumerate(m.episodes):
                w.writerow([k, i, r.difficulty, int(r.success), r.steps, repr(r.energy_mj), r.acquisitions,
                            "" if r.distance_per_acquisition is None else repr(r.distance_per_acquisition)])
    points = [{"label": k, "kind": "adaptive" if k == "adaptive" else "static", "energy_mj": m.energy_mj,
               "accuracy": m.accuracy} for k, m in metrics.items()]
    plots.pareto(points, out / "pareto.png")
    report["alpha"] = alpha
    return report


def save_traces(path: Path, results: list[EpisodeResult], config_hash: str, variant: str) -> None:
    _dump(path, {"config_hash": config_hash, "variant": variant, "episodes": [r.to_json() for r in results]})


def load_traces(path: Path) -> tuple[dict, list[list[StepRecord]], list[bool]]:
    doc = json.loads(_need(path).read_text())
    traces = [[StepRecord(**s) for s in ep["trace"]] for ep in doc["episodes"]]
    return doc, traces, [bool(ep["success"]) for ep in doc["episodes"]]


# -- bench and analysis ------------------------------------------------------------------------


def bench(cfg: ExperimentConfig, out: Path) -> list[dict]:
    out.mkdir(parents=True, exist_ok=True)
    profile = profile_of(cfg)
    rows = [{"table": "profile", **bench_table(profile, float(s), [1.0])[0]} for s in profile.sizes]
    alpha = cfg.perception.network.alpha
    rows += [{"table": "network", **r} for r in bench_table(profile, alpha, [0.0, *sorted(cfg.perception.network.rho_set)])]
    fields = ["table", "alpha", "rho", "size", "power_mw", "latency_ms", "energy_mj"]
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(r[k])) if k != "table" else r[k]) for k in fields})
    _dump(out / "bench.json", {"config_hash": cfg.hash(), "rows": rows,
                               "max_size_cost": cost(profile, profile.max_size).as_tuple()})
    return rows


def analyze(cfg: ExperimentConfig, out: Path) -> dict:
    world = load_world(cfg, out)
    found = {}
    for variant in variants(cfg):
        path = out / f"traces_{variant}.json"
        if path.exists():
            doc, traces, success = load_traces(path)
            _check_hash(doc.get("config_hash"), cfg, path)
            found[variant] = (traces, success)
    if "adaptive" not in found:
        raise ArtifactError(f"no adaptive traces in {out}; run eval first")
    report: dict = {"config_hash": cfg.hash()}
    alpha = cfg.perception.network.alpha
    if len(found) >= 2:
        sizes = {k: (alpha if k == "adaptive" else float(k.split("-")[1])) for k in found}
        sets = {k: {i for i, ok in enumerate(s) if ok} for k, (_, s) in found.items()}
        counts = {k: len(s) for k, (_, s) in found.items()}
        sat = saturation_analysis(sets, sizes, counts)
        report["saturation"] = sat.to_json()
    traces = found["adaptive"][0]
    binning = cfg.eval.heatmap_bin
    extent = (world.width * world.cell_size, world.height * world.cell_size)
    for tag, direction in (("all", None), ("west", WEST)):
        events = [s for tr in traces for s in tr if direction is None or s.direction == direction]
        if not events:
            report[f"heatmap_{tag}_bins"] = 0
            continue
        hm = rho_heatmap(traces, binning, extent, direction)
        hm.to_csv(out / f"heatmap_{tag}.csv")
        hm.to_pgm(out / f"heatmap_{tag}.pgm")
        plots.heatmap(hm.mean, binning, out / f"heatmap_{tag}.png",
                      "mean slimming factor" + ("" if direction is None else ", westward moves"))
        report[f"heatmap_{tag}_bins"] = int((hm.count > 0).sum())
    try:
        report["correlations"] = context_correlations(traces)
    except ContractViolation as exc:
        report["correlations"] = {"undefined": str(exc)}
    steps = [s for tr in traces for s in tr]
    dens = [(s.queue_mean_depth, s.rho) for s in steps if s.queue_mean_depth is not None]
    if dens:
        plots.context_scatter([d for d, _ in dens], [r for _, r in dens], "queue mean depth [m]",
                              out / "rho_vs_depth.png")
    if steps:
        plots.context_scatter([s.distance for s in steps], [s.rho for s in steps], "distance to target [m]",
                              out / "rho_vs_distance.png")
    _dump(out / "analysis.json", _finite(report))
    return report


def _finite(x):
    """JSON-safe copy: non-finite floats become None."""
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_finite(v) for v in x]
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x
