"""Seeded random charging episodes and their conversion to supervised
training pairs.

Episodes apply piecewise-constant random currents (uniform level, random
hold of 1-8 steps) until the SOC target or the time limit; sliding
N+1-step windows over the logs become (reduced state, control window)
inputs with window-cost and constraint-trajectory labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DrsmpcError, WindowTooLong
from .iotools import read_csv_matrix, read_json, write_csv, write_json
from .plant import PlantParams, initial_state, observe, step_spm
from .reduction import PcaBasis, StateNormalizer

TERMINATION_TARGET = "target-reached"
TERMINATION_TIME = "time-limit"
TERMINATION_ERROR = "plant-error"


@dataclass(frozen=True)
class EpisodePolicy:
    """Random charging policy and episode limits."""

    i_max: float = 2.5  # C-rate
    delta_t: float = 15.0  # s
    episode_length: float = 3300.0  # s
    soc_init: float = 0.0286
    soc_target: float = 0.7
    hold_min: int = 1  # steps a drawn level is held
    hold_max: int = 8

    def __post_init__(self):
        if self.i_max < 0 or self.delta_t <= 0 or self.episode_length <= 0:
            raise ValueError("i_max >= 0 and positive delta_t/episode_length required")
        if not 1 <= self.hold_min <= self.hold_max:
            raise ValueError("need 1 <= hold_min <= hold_max")

    @property
    def max_steps(self) -> int:
        return int(round(self.episode_length / self.delta_t))


@dataclass
class EpisodeLog:
    """Per-step records of one episode; row k is the pre-step state with
    the current applied over [t_k, t_k + dt)."""

    times: np.ndarray  # (k,)
    states: np.ndarray  # (k, n) full state vectors
    currents: np.ndarray  # (k,) C-rate
    soc: np.ndarray
    voltage: np.ndarray
    eta_s: np.ndarray
    temperature: np.ndarray
    termination: str
    seed: int
    reduced: np.ndarray | None = field(default=None)  # (k, q), filled later

    def __len__(self) -> int:
        return self.times.size


def run_random_episode(
    seed: int, params: PlantParams, policy: EpisodePolicy = EpisodePolicy()
) -> EpisodeLog:
    """Run one seeded random charging episode on the plant."""
    rng = np.random.default_rng(seed)
    state = initial_state(policy.soc_init, params)
    rows: list[tuple] = []
    termination = TERMINATION_TIME
    hold_left = 0
    level = 0.0
    for k in range(policy.max_steps):
        if hold_left == 0:
            level = float(rng.uniform(0.0, policy.i_max))
            hold_left = int(rng.integers(policy.hold_min, policy.hold_max + 1))
        hold_left -= 1
        t = k * policy.delta_t
        try:
            out = observe(state, level, params)
            nxt = step_spm(state, level, policy.delta_t, params)
        except DrsmpcError:
            termination = TERMINATION_ERROR
            break
        rows.append((t, state.flatten(), level, out.soc, out.voltage, out.eta_s, out.temperature))
        state = nxt
        if observe(state, 0.0, params).soc >= policy.soc_target:
            termination = TERMINATION_TARGET
            break
    if not rows:
        raise DrsmpcError("episode produced no steps")
    times, states, currents, soc, voltage, eta_s, temp = zip(*rows)
    return EpisodeLog(
        times=np.asarray(times, dtype=float),
        states=np.vstack(states),
        currents=np.asarray(currents, dtype=float),
        soc=np.asarray(soc, dtype=float),
        voltage=np.asarray(voltage, dtype=float),
        eta_s=np.asarray(eta_s, dtype=float),
        temperature=np.asarray(temp, dtype=float),
        termination=termination,
        seed=int(seed),
    )


def run_episode_batch(
    master_seed: int, count: int, params: PlantParams, policy: EpisodePolicy = EpisodePolicy()
) -> list[EpisodeLog]:
    """Episodes i = 0..count-1 with per-episode seeds master_seed + i."""
    return [run_random_episode(master_seed + i, params, policy) for i in range(count)]


def save_episodes(episodes: list[EpisodeLog], out_dir, config_hash: str = "") -> Path:
    """One CSV per episode plus a JSON manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = episodes[0].states.shape[1]
    header = ["time", "current", "soc", "voltage", "eta_s", "temperature"] + [
        f"x{i}" for i in range(n)
    ]
    entries = []
    for i, ep in enumerate(episodes):
        name = f"episode_{i:04d}.csv"
        rows = np.column_stack([
            ep.times, ep.currents, ep.soc, ep.voltage, ep.eta_s, ep.temperature, ep.states,
        ])
        write_csv(out_dir / name, header, rows)
        entries.append({
            "file": name,
            "seed": ep.seed,
            "steps": len(ep),
            "termination": ep.termination,
        })
    manifest = out_dir / "episodes.json"
    write_json(manifest, {"config_hash": config_hash, "episodes": entries})
    return manifest


def load_episodes(out_dir) -> list[EpisodeLog]:
    out_dir = Path(out_dir)
    meta = read_json(out_dir / "episodes.json")
    episodes = []
    for entry in meta["episodes"]:
        data = read_csv_matrix(out_dir / entry["file"])
        episodes.append(EpisodeLog(
            times=data[:, 0],
            states=data[:, 6:],
            currents=data[:, 1],
            soc=data[:, 2],
            voltage=data[:, 3],
            eta_s=data[:, 4],
            temperature=data[:, 5],
            termination=entry["termination"],
            seed=int(entry["seed"]),
        ))
    return episodes


@dataclass
class SampleSet:
    """Supervised pairs: [reduced state | control window] -> (cost, eta_s series)."""

    inputs: np.ndarray  # (m, q + horizon + 1)
    labels_j: np.ndarray  # (m,)
    labels_g: np.ndarray  # (m, horizon + 1)
    q: int
    horizon: int
    delta_t: float
    seed: int | None = None
    split: str = "all"

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def save(self, prefix) -> None:
        prefix = Path(prefix)
        csv_name = prefix.name + ".csv"
        header = (
            [f"z{i}" for i in range(self.q)]
            + [f"u{i}" for i in range(self.horizon + 1)]
            + ["label_j"]
            + [f"g{i}" for i in range(self.horizon + 1)]
        )
        rows = np.column_stack([self.inputs, self.labels_j, self.labels_g])
        write_csv(prefix.parent / csv_name, header, rows)
        write_json(prefix.with_suffix(".json"), {
            "kind": "sample_set",
            "rows": len(self),
            "q": self.q,
            "horizon": self.horizon,
            "delta_t": self.delta_t,
            "seed": self.seed,
            "split": self.split,
            "csv_file": csv_name,
        })

    @classmethod
    def load(cls, prefix) -> "SampleSet":
        prefix = Path(prefix)
        meta = read_json(prefix.with_suffix(".json"))
        if meta.get("kind") != "sample_set":
            raise ValueError(f"{prefix}: not a sample set header")
        data = read_csv_matrix(prefix.parent / meta["csv_file"])
        q, horizon = int(meta["q"]), int(meta["horizon"])
        d_in = q + horizon + 1
        return cls(
            inputs=data[:, :d_in],
            labels_j=data[:, d_in],
            labels_g=data[:, d_in + 1 :],
            q=q,
            horizon=horizon,
            delta_t=float(meta["delta_t"]),
            seed=meta["seed"],
            split=meta["split"],
        )


def build_samples(
    episodes: list[EpisodeLog],
    basis: PcaBasis,
    normalizer: StateNormalizer,
    horizon: int,
    soc_target: float,
    stride: int = 1,
) -> SampleSet:
    """Sliding-window samples over each episode (windows never cross
    episode boundaries).

    input  = [basis.transform(normalized x_k) | u_k .. u_{k+N}]
    label_j = sum_{j=k..k+N} (soc_j - soc_target)^2
    label_g = [eta_s_k .. eta_s_{k+N}]
    """
    if not episodes:
        raise ValueError("episodes must be nonempty")
    if horizon < 1 or stride < 1:
        raise ValueError("horizon and stride must be >= 1")
    window = horizon + 1
    inputs, labels_j, labels_g = [], [], []
    for ep in episodes:
        k_steps = len(ep)
        if k_steps < window:
            raise WindowTooLong(
                f"episode (seed {ep.seed}) has {k_steps} steps, need at least {window}"
            )
        ep.reduced = basis.transform(normalizer.normalize(ep.states))
        for k in range(0, k_steps - window + 1, stride):
            sl = slice(k, k + window)
            inputs.append(np.concatenate([ep.reduced[k], ep.currents[sl]]))
            labels_j.append(float(np.sum((ep.soc[sl] - soc_target) ** 2)))
            labels_g.append(ep.eta_s[sl])
    first = episodes[0]
    return SampleSet(
        inputs=np.vstack(inputs),
        labels_j=np.asarray(labels_j, dtype=float),
        labels_g=np.vstack(labels_g),
        q=int(basis.q),
        horizon=int(horizon),
        delta_t=float(first.times[1] - first.times[0]),
    )


def split(samples: SampleSet, fraction: float, seed: int) -> tuple[SampleSet, SampleSet]:
    """Seeded shuffle then partition; train gets round(fraction * rows)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    m = len(samples)
    order = np.random.default_rng(seed).permutation(m)
    n_train = int(round(fraction * m))
    parts = []
    for tag, idx in (("train", order[:n_train]), ("test", order[n_train:])):
        parts.append(SampleSet(
            inputs=samples.inputs[idx],
            labels_j=samples.labels_j[idx],
            labels_g=samples.labels_g[idx],
            q=samples.q,
            horizon=samples.horizon,
            delta_t=samples.delta_t,
            seed=seed,
            split=tag,
        ))
    return parts[0], parts[1]
