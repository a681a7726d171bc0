"""Pipeline orchestration: configs, artifact manifest, and the six stages.

Artifacts live under one output directory:

    episodes/            raw plant episodes (CSV per episode + manifest)
    pca.json, pca_matrix.csv, explained_variance.csv
    net_j.json, net_g.json, train_report_*.json, residuals_g_{train,test}.csv
    certificate.json
    control/<variant>/run_*.csv|json + summary.json
    report.json, variants.csv
    manifest.json        stage input/output hashes (deterministic)
    timing.json, *_timing.json   wall-clock diagnostics (non-deterministic)

Every stage verifies its inputs against the manifest hashes recorded by
the producing stage, then records its own outputs. Wall-clock numbers
never enter hashed artifacts, so reruns with the same seed are
byte-identical where the determinism contract applies.

Seed layout from the master seed s: episodes s+i; sample split s+1;
cost net s+2; constraint net s+3; control runs s+100+i (shared across
variants so seeds pair up); scaling episodes s+500+i; scaling probes
s+600 and s+601.
"""

from __future__ import annotations

import importlib.resources
import json
import time
from pathlib import Path

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import controller as ctrl
from . import datagen, dro, reduction, surrogate
from .errors import ConfigError, MissingArtifact, StaleArtifact
from .iotools import read_csv_matrix, read_json, sha256_file, sha256_json, write_csv, write_json
from .plant import PlantParams, default_params, load_plant_config

_FORMAT_VERSION = 1
VARIANTS = ("robust", "nonrobust", "cccv")
STAGES = ("simulate-data", "fit-pca", "train", "compute-dro", "run-control", "report")


# ---------------------------------------------------------------------------
# configuration


def _schema() -> dict:
    ref = importlib.resources.files("drsmpc").joinpath("data/experiment_config.schema.json")
    return json.loads(ref.read_text())


class ExperimentConfig:
    """Validated experiment configuration (a thin wrapper over the JSON)."""

    def __init__(self, raw: dict, base_dir: Path | None = None):
        try:
            jsonschema.validate(raw, _schema())
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"experiment config invalid: {exc.message}") from exc
        self.raw = raw
        self.base_dir = Path(base_dir) if base_dir is not None else Path.cwd()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls(raw, base_dir=path.parent)

    @classmethod
    def default(cls) -> "ExperimentConfig":
        ref = importlib.resources.files("drsmpc").joinpath("data/default_experiment.json")
        return cls(json.loads(ref.read_text()))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = json.loads(json.dumps(self.raw))
        raw["seed"] = int(seed)
        return ExperimentConfig(raw, base_dir=self.base_dir)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def table(self) -> dict:
        return self.raw["table"]

    def config_hash(self) -> str:
        return sha256_json(self.raw)

    def plant_params(self) -> PlantParams:
        block = self.raw.get("plant", {})
        path = block.get("config_path")
        if path is not None:
            params = load_plant_config(self.base_dir / path)
        else:
            params = default_params()
        overrides = dict(block.get("overrides", {}))
        overrides["t_amb"] = float(self.table["t_amb"])  # table block wins
        if "n_radial" in overrides:
            overrides["n_radial"] = int(overrides["n_radial"])
        return params.with_overrides(**overrides)

    def episode_policy(self) -> datagen.EpisodePolicy:
        t = self.table
        return datagen.EpisodePolicy(
            i_max=float(t["i_max"]),
            delta_t=float(t["delta_t"]),
            episode_length=float(t["episode_length"]),
            soc_init=float(t["soc_init"]),
            soc_target=float(t["soc_target"]),
        )

    def train_config(self) -> surrogate.TrainConfig:
        t = self.raw["training"]
        return surrogate.TrainConfig(
            hidden=tuple(int(h) for h in t["hidden"]),
            epochs=int(t["epochs"]),
            batch_size=int(t["batch_size"]),
            learning_rate=float(t["learning_rate"]),
        )

    def solver_config(self) -> ctrl.SolverConfig:
        s = self.raw.get("solver", {})
        return ctrl.SolverConfig(
            population=int(s.get("population", 512)),
            iterations=int(s.get("iterations", 12)),
            mutation_scale=float(s.get("mutation_scale", 0.15)),
            mutation_decay=float(s.get("mutation_decay", 0.97)),
        )

    def run_config(self) -> ctrl.ControlRunConfig:
        t, c = self.table, self.raw["control"]
        return ctrl.ControlRunConfig(
            i_max=float(t["i_max"]),
            delta_t=float(t["delta_t"]),
            soc_init=float(t["soc_init"]),
            soc_target=float(t["soc_target"]),
            time_limit=float(c.get("time_limit", t["episode_length"])),
            v_cutoff=float(c.get("v_cutoff", 4.2)),
            solver=self.raw.get("solver", {}).get("method", "es"),
        )


# ---------------------------------------------------------------------------
# manifest


class RunManifest:
    """Stage input/output hash ledger persisted as manifest.json.

    Timing-bearing files are listed but never hashed: their bytes change
    on every run and must not break the determinism contract.
    """

    def __init__(self, out_dir):
        self.path = Path(out_dir) / "manifest.json"
        if self.path.exists():
            self.data = read_json(self.path)
        else:
            self.data = {
                "format_version": _FORMAT_VERSION,
                "kind": "run_manifest",
                "stages": {},
            }

    def record(self, stage: str, config_hash: str, inputs: dict, outputs: dict,
               unhashed_outputs: list) -> None:
        self.data["stages"][stage] = {
            "version": _FORMAT_VERSION,
            "config_hash": config_hash,
            "inputs": dict(sorted(inputs.items())),
            "outputs": dict(sorted(outputs.items())),
            "unhashed_outputs": sorted(unhashed_outputs),
        }
        write_json(self.path, self.data)

    def recorded_output(self, relpath: str) -> str | None:
        for entry in self.data["stages"].values():
            if relpath in entry["outputs"]:
                return entry["outputs"][relpath]
        return None


def _is_timing_artifact(relpath: str) -> bool:
    name = Path(relpath).name
    return name.endswith("_timing.json") or name in ("timing.json", "variants.csv")


def _require_inputs(out_dir: Path, manifest: RunManifest, relpaths: list) -> dict:
    hashes = {}
    for rel in relpaths:
        path = out_dir / rel
        if not path.exists():
            raise MissingArtifact(f"required artifact missing: {rel} (run earlier stages)")
        digest = sha256_file(path)
        recorded = manifest.recorded_output(rel)
        if recorded is not None and recorded != digest:
            raise StaleArtifact(
                f"artifact {rel} does not match the manifest hash; rerun its producing stage"
            )
        hashes[rel] = digest
    return hashes


def _record_stage(out_dir: Path, manifest: RunManifest, stage: str, config: ExperimentConfig,
                  inputs: dict, output_relpaths: list) -> None:
    outputs, unhashed = {}, []
    for rel in output_relpaths:
        if _is_timing_artifact(rel):
            unhashed.append(rel)
        else:
            outputs[rel] = sha256_file(out_dir / rel)
    manifest.record(stage, config.config_hash(), inputs, outputs, unhashed)


def _note_wall_time(out_dir: Path, stage: str, seconds: float) -> None:
    path = out_dir / "timing.json"
    data = read_json(path) if path.exists() else {"kind": "stage_timing", "stages": {}}
    data["stages"][stage] = seconds
    write_json(path, data)


def _relpaths(out_dir: Path, paths) -> list:
    return [str(Path(p).relative_to(out_dir).as_posix()) for p in paths]


# ---------------------------------------------------------------------------
# artifact loading helpers

_PCA_FILES = ["pca.json", "pca_matrix.csv"]
_NET_FILES = ["net_j.json", "net_g.json"]


def _load_reduction(config: ExperimentConfig, out_dir: Path):
    basis = reduction.PcaBasis.load(out_dir / "pca")
    normalizer = reduction.StateNormalizer.from_params(config.plant_params())
    return basis, normalizer


def _load_bundle(config: ExperimentConfig, out_dir: Path) -> surrogate.SurrogateBundle:
    basis, _ = _load_reduction(config, out_dir)
    return surrogate.SurrogateBundle(
        net_j=surrogate.SurrogateNet.load(out_dir / "net_j.json"),
        net_g=surrogate.SurrogateNet.load(out_dir / "net_g.json"),
        q=basis.q,
        horizon=int(config.table["horizon"]),
    )


# ---------------------------------------------------------------------------
# stages


def stage_simulate_data(config: ExperimentConfig, out_dir) -> list:
    """Generate the random-charging episode corpus."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out_dir)
    params = config.plant_params()
    policy = config.episode_policy()
    episodes = datagen.run_episode_batch(
        config.seed, int(config.table["episodes"]), params, policy
    )
    datagen.save_episodes(episodes, out_dir / "episodes", config_hash=config.config_hash())
    produced = sorted(out_dir.glob("episodes/episode_*.csv")) + [out_dir / "episodes/episodes.json"]
    _record_stage(out_dir, manifest, "simulate-data", config,
                  inputs={}, output_relpaths=_relpaths(out_dir, produced))
    return produced


def _episode_relpaths(out_dir: Path) -> list:
    index = out_dir / "episodes/episodes.json"
    if not index.exists():
        raise MissingArtifact("required artifact missing: episodes/episodes.json (run simulate-data)")
    names = [entry["file"] for entry in read_json(index)["episodes"]]
    return ["episodes/episodes.json"] + [f"episodes/{name}" for name in names]


def stage_fit_pca(config: ExperimentConfig, out_dir) -> list:
    """Fit the state compression on all normalized episode snapshots."""
    out_dir = Path(out_dir)
    manifest = RunManifest(out_dir)
    inputs = _require_inputs(out_dir, manifest, _episode_relpaths(out_dir))
    episodes = datagen.load_episodes(out_dir / "episodes")
    normalizer = reduction.StateNormalizer.from_params(config.plant_params())
    stacked = np.vstack([normalizer.normalize(ep.states) for ep in episodes])
    basis = reduction.fit_pca(stacked)
    pca_block = config.raw.get("pca", {})
    n_fixed = pca_block.get("n_components")
    if n_fixed is not None:
        q = int(n_fixed)
    else:
        threshold = pca_block.get("variance_threshold", 0.99)
        q = reduction.choose_q(basis, float(threshold))
    basis = basis.with_q(q)
    basis.save(out_dir / "pca")
    cumulative = np.cumsum(basis.explained_variance_ratio)
    write_csv(
        out_dir / "explained_variance.csv",
        ["component", "variance_ratio", "cumulative"],
        [(i + 1, r, c) for i, (r, c) in
         enumerate(zip(basis.explained_variance_ratio, cumulative))],
    )
    produced = [out_dir / p for p in _PCA_FILES + ["explained_variance.csv"]]
    _record_stage(out_dir, manifest, "fit-pca", config, inputs,
                  _relpaths(out_dir, produced))
    return produced


def stage_train(config: ExperimentConfig, out_dir) -> list:
    """Train the cost and constraint surrogates on reduced windows."""
    out_dir = Path(out_dir)
    manifest = RunManifest(out_dir)
    inputs = _require_inputs(out_dir, manifest, _episode_relpaths(out_dir) + _PCA_FILES)
    episodes = datagen.load_episodes(out_dir / "episodes")
    basis, normalizer = _load_reduction(config, out_dir)
    samples = datagen.build_samples(
        episodes, basis, normalizer,
        horizon=int(config.table["horizon"]),
        soc_target=float(config.table["soc_target"]),
    )
    fraction = float(config.raw["training"]["train_fraction"])
    train_set, test_set = datagen.split(samples, fraction, config.seed + 1)
    train_cfg = config.train_config()

    produced = []
    nets = {}
    for tag, seed_offset in (("j", 2), ("g", 3)):
        net, report = surrogate.train(
            surrogate.training_pairs(train_set, tag),
            surrogate.training_pairs(test_set, tag),
            train_cfg,
            seed=config.seed + seed_offset,
        )
        net.save(out_dir / f"net_{tag}.json")
        report.save(out_dir / f"train_report_{tag}")
        produced += [out_dir / f"net_{tag}.json", out_dir / f"train_report_{tag}.json",
                     out_dir / f"train_report_{tag}_residuals.csv"]
        nets[tag] = net

    # constraint-net residuals on both splits, for the offset computation
    # and for distribution plots
    for split_tag, subset in (("train", train_set), ("test", test_set)):
        x, y = surrogate.training_pairs(subset, "g")
        residuals = nets["g"].forward(x) - y
        path = out_dir / f"residuals_g_{split_tag}.csv"
        write_csv(path, [f"g{i}" for i in range(residuals.shape[1])], residuals)
        produced.append(path)

    _record_stage(out_dir, manifest, "train", config, inputs,
                  _relpaths(out_dir, produced))
    return produced


def stage_compute_dro(config: ExperimentConfig, out_dir) -> list:
    """Turn held-out constraint residuals into a robust offset certificate."""
    out_dir = Path(out_dir)
    manifest = RunManifest(out_dir)
    inputs = _require_inputs(out_dir, manifest, ["residuals_g_test.csv"])
    residual_matrix = read_csv_matrix(out_dir / "residuals_g_test.csv")
    # one shared scalar offset: every window slot sees the same constraint,
    # so the slots are pooled into a single residual dimension
    data = residual_matrix.reshape(-1, 1)
    block = config.raw.get("dro", {})
    certificate = dro.build_certificate(
        data,
        beta=float(config.table["beta"]),
        eta=float(config.table["eta"]),
        method=block.get("method", "concentration"),
        tol=float(block.get("tol", 1e-6)),
        ridge=block.get("ridge"),
        provenance={
            "residual_file": "residuals_g_test.csv",
            "residual_sha256": inputs["residuals_g_test.csv"],
        },
    )
    certificate.save(out_dir / "certificate.json")
    _record_stage(out_dir, manifest, "compute-dro", config, inputs,
                  ["certificate.json"])
    return [out_dir / "certificate.json"]


def stage_run_control(config: ExperimentConfig, out_dir, variant: str) -> list:
    """Closed-loop runs for one variant across the seed battery."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown control variant: {variant!r}")
    out_dir = Path(out_dir)
    manifest = RunManifest(out_dir)
    if variant == "cccv":
        inputs = {}
    else:
        needed = _PCA_FILES + _NET_FILES
        if variant == "robust":
            needed = needed + ["certificate.json"]
        inputs = _require_inputs(out_dir, manifest, needed)

    params = config.plant_params()
    run_config = config.run_config()
    solver_config = config.solver_config()
    offset = 0.0
    if variant == "robust":
        offset = dro.AmbiguityCertificate.load(out_dir / "certificate.json").offset
    if variant != "cccv":
        bundle = _load_bundle(config, out_dir)
        basis, normalizer = _load_reduction(config, out_dir)

    run_dir = out_dir / "control" / variant
    run_dir.mkdir(parents=True, exist_ok=True)
    produced, runs = [], []
    for i in range(int(config.raw["control"]["seeds"])):
        seed_i = config.seed + 100 + i
        if variant == "cccv":
            result = ctrl.cccv_baseline(params, run_config, seed=seed_i)
        else:
            result = ctrl.run_closed_loop(
                params, bundle, basis, normalizer, offset, run_config,
                solver_config, seed=seed_i, variant=variant,
            )
        prefix = run_dir / f"run_{i:03d}"
        result.save(prefix)
        produced += [Path(str(prefix) + ext) for ext in (".csv", ".json", "_timing.json")]
        summary = result.summary()
        del summary["mean_step_seconds"]
        runs.append({"file": f"run_{i:03d}.csv", **summary})

    reached = [r["charge_time_min"] for r in runs if r["charge_time_min"] is not None]
    write_json(run_dir / "summary.json", {
        "format_version": _FORMAT_VERSION,
        "kind": "control_summary",
        "variant": variant,
        "offset": offset if variant != "cccv" else None,
        "runs": runs,
        "reached_count": len(reached),
        "charge_time_min_median": float(np.median(reached)) if reached else None,
        "violation_count_median": float(np.median([r["violation_count"] for r in runs])),
        "violation_count_total": int(sum(r["violation_count"] for r in runs)),
        "max_violation_volts": max(r["max_violation_volts"] for r in runs),
    })
    produced.append(run_dir / "summary.json")
    _record_stage(out_dir, manifest, f"run-control-{variant}", config, inputs,
                  _relpaths(out_dir, produced))
    return produced


def _scaling_probe(config: ExperimentConfig, out_dir: Path) -> dict:
    """Per-step controller wall time on the default vs radially refined plant.

    The surrogates and certificate are reused unchanged (their input is
    the reduced state, whose dimension does not grow); only the state
    compression is refit on a few episodes from the refined plant.
    """
    scaling = config.raw.get("scaling", {})
    factor = int(scaling.get("radial_factor", 10))
    probe_steps = int(scaling.get("probe_steps", 40))
    n_episodes = int(scaling.get("episodes", 8))

    params = config.plant_params()
    scaled_params = params.with_overrides(n_radial=params.n_radial * factor)
    bundle = _load_bundle(config, out_dir)
    basis, normalizer = _load_reduction(config, out_dir)
    offset = dro.AmbiguityCertificate.load(out_dir / "certificate.json").offset

    episodes = datagen.run_episode_batch(
        config.seed + 500, n_episodes, scaled_params, config.episode_policy()
    )
    scaled_normalizer = reduction.StateNormalizer.from_params(scaled_params)
    stacked = np.vstack([scaled_normalizer.normalize(ep.states) for ep in episodes])
    scaled_basis = reduction.fit_pca(stacked).with_q(basis.q)

    run_config = config.run_config()
    probe_config = ctrl.ControlRunConfig(
        i_max=run_config.i_max,
        delta_t=run_config.delta_t,
        soc_init=run_config.soc_init,
        soc_target=run_config.soc_target,
        time_limit=probe_steps * run_config.delta_t,
        v_cutoff=run_config.v_cutoff,
        solver=run_config.solver,
    )
    solver_config = config.solver_config()
    baseline = ctrl.run_closed_loop(
        params, bundle, basis, normalizer, offset, probe_config,
        solver_config, seed=config.seed + 600, variant="robust",
    )
    scaled = ctrl.run_closed_loop(
        scaled_params, bundle, scaled_basis, scaled_normalizer, offset, probe_config,
        solver_config, seed=config.seed + 601, variant="robust",
    )
    base_s = float(baseline.solve_times.mean())
    scaled_s = float(scaled.solve_times.mean())
    return {
        "radial_factor": factor,
        "probe_steps": probe_steps,
        "state_dim": params.state_dim,
        "scaled_state_dim": scaled_params.state_dim,
        "baseline_mean_step_seconds": base_s,
        "scaled_mean_step_seconds": scaled_s,
        "ratio": scaled_s / base_s,
    }


def stage_report(config: ExperimentConfig, out_dir) -> list:
    """Aggregate metrics, emit the variant table, run the scaling probe."""
    out_dir = Path(out_dir)
    manifest = RunManifest(out_dir)
    summary_rels = [f"control/{v}/summary.json" for v in VARIANTS]
    inputs = _require_inputs(
        out_dir, manifest,
        ["explained_variance.csv", "residuals_g_test.csv", "certificate.json"] + summary_rels,
    )

    residuals = read_csv_matrix(out_dir / "residuals_g_test.csv").ravel()
    certificate = read_json(out_dir / "certificate.json")
    evr = read_csv_matrix(out_dir / "explained_variance.csv")
    summaries = {v: read_json(out_dir / f"control/{v}/summary.json") for v in VARIANTS}

    report = {
        "format_version": _FORMAT_VERSION,
        "kind": "experiment_report",
        "certificate": {key: certificate[key] for key in
                        ("epsilon", "sigma", "offset", "beta", "eta", "radius_method")},
        "residual_stats": {
            "rows": int(residuals.size),
            "mean": float(residuals.mean()),
            "std": float(residuals.std()),
            "min": float(residuals.min()),
            "max": float(residuals.max()),
        },
        "explained_variance_components": int(evr.shape[0]),
        "variants": {
            v: {key: s[key] for key in
                ("offset", "reached_count", "charge_time_min_median",
                 "violation_count_median", "violation_count_total",
                 "max_violation_volts", "runs")}
            for v, s in summaries.items()
        },
    }
    write_json(out_dir / "report.json", report)

    # wall-clock aggregation and the scaling probe live in unhashed files
    mean_steps = {}
    for v in VARIANTS:
        per_run = []
        for r in summaries[v]["runs"]:
            timing = read_json(out_dir / f"control/{v}/{Path(r['file']).stem}_timing.json")
            per_run.append(timing["mean_step_seconds"])
        mean_steps[v] = float(np.mean(per_run))
    scaling = _scaling_probe(config, out_dir)
    write_json(out_dir / "report_timing.json", {
        "kind": "report_timing",
        "mean_step_seconds": mean_steps,
        "scaling": scaling,
    })
    def _num(value):
        return float("nan") if value is None else value

    write_csv(
        out_dir / "variants.csv",
        ["variant", "charge_time_min", "violations", "max_violation_V", "mean_step_s"],
        [(v,
          _num(summaries[v]["charge_time_min_median"]),
          summaries[v]["violation_count_median"],
          summaries[v]["max_violation_volts"],
          mean_steps[v]) for v in VARIANTS],
    )
    produced = [out_dir / "report.json", out_dir / "variants.csv",
                out_dir / "report_timing.json"]
    _record_stage(out_dir, manifest, "report", config, inputs,
                  _relpaths(out_dir, produced))
    return produced


# ---------------------------------------------------------------------------
# dispatch


def run_stage(name: str, config: ExperimentConfig, out_dir, variant: str | None = None) -> list:
    """Run one stage single-threaded (BLAS thread count must not vary
    between runs, or artifact bytes could drift)."""
    out_dir = Path(out_dir)
    started = time.perf_counter()
    with threadpool_limits(limits=1):
        if name == "simulate-data":
            produced = stage_simulate_data(config, out_dir)
        elif name == "fit-pca":
            produced = stage_fit_pca(config, out_dir)
        elif name == "train":
            produced = stage_train(config, out_dir)
        elif name == "compute-dro":
            produced = stage_compute_dro(config, out_dir)
        elif name == "run-control":
            if variant is None:
                raise ConfigError("run-control needs --variant")
            produced = stage_run_control(config, out_dir, variant)
        elif name == "report":
            produced = stage_report(config, out_dir)
        else:
            raise ConfigError(f"unknown stage: {name!r}")
    label = name if variant is None else f"{name}-{variant}"
    _note_wall_time(out_dir, label, time.perf_counter() - started)
    return produced


def run_all(config: ExperimentConfig, out_dir) -> Path:
    """The whole pipeline in dependency order; returns the manifest path."""
    run_stage("simulate-data", config, out_dir)
    run_stage("fit-pca", config, out_dir)
    run_stage("train", config, out_dir)
    run_stage("compute-dro", config, out_dir)
    for variant in VARIANTS:
        run_stage("run-control", config, out_dir, variant=variant)
    run_stage("report", config, out_dir)
    return Path(out_dir) / "manifest.json"
