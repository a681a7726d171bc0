"""Receding-horizon charging control over the surrogate pair.

Each step reduces the plant state, solves a small horizon program
(minimize predicted tracking cost subject to predicted side-reaction
overpotential staying above a robust offset), and applies the first
input. Inner solvers: a (1+lambda) evolution strategy with
feasibility-first ranking, and a projected-gradient method on a
penalized objective using the analytic surrogate Jacobian. A CCCV
baseline closes the same logging loop without surrogates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .datagen import (
    EpisodeLog,
    TERMINATION_ERROR,
    TERMINATION_TARGET,
    TERMINATION_TIME,
)
from .errors import DrsmpcError, NonFiniteGradient
from .iotools import read_csv_columns, read_json, write_csv, write_json
from .plant import PlantParams, PlantState, initial_state, observe, step_spm
from .reduction import PcaBasis, StateNormalizer
from .surrogate import SurrogateBundle
from .validation import as_vector

_FORMAT_VERSION = 1


@dataclass
class HorizonProblem:
    """One receding-horizon subproblem in reduced coordinates.

    Feasibility means every predicted overpotential in the window stays
    at or above ``offset`` (zero recovers the nominal constraint).
    """

    bundle: SurrogateBundle
    x_red: np.ndarray
    i_max: float
    offset: float = 0.0
    warm_start: np.ndarray | None = None

    def __post_init__(self):
        self.x_red = as_vector(self.x_red, name="x_red")
        if not np.isfinite(self.i_max) or self.i_max <= 0.0:
            raise ValueError("i_max must be finite and positive")
        if self.warm_start is not None:
            self.warm_start = np.clip(
                as_vector(self.warm_start, name="warm_start"), 0.0, self.i_max
            )
            if self.warm_start.size != self.n_inputs:
                raise ValueError(
                    f"warm start has {self.warm_start.size} entries, expected {self.n_inputs}"
                )

    @property
    def n_inputs(self) -> int:
        return self.bundle.horizon + 1

    def evaluate(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        return self.bundle.evaluate(self.x_red, u)

    def evaluate_batch(self, u_batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.bundle.evaluate_batch(self.x_red, u_batch)

    def gradients(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.bundle.gradients_u(self.x_red, u)

    def margin(self, g: np.ndarray) -> float:
        return float(np.min(g) - self.offset)


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters for both inner solvers."""

    population: int = 512
    iterations: int = 12
    mutation_scale: float = 0.15  # relative to i_max
    mutation_decay: float = 0.97
    grad_max_iter: int = 100
    grad_penalty: float = 1e4
    grad_init_step: float = 1.0
    grad_tol: float = 1e-8
    armijo: float = 1e-4

    def __post_init__(self):
        if self.population < 1 or self.iterations < 1:
            raise ValueError("population and iterations must be >= 1")
        if self.mutation_scale <= 0.0 or not 0.0 < self.mutation_decay <= 1.0:
            raise ValueError("mutation scale must be > 0 and decay in (0, 1]")
        if self.grad_max_iter < 1 or self.grad_penalty < 0.0 or self.grad_init_step <= 0.0:
            raise ValueError("bad gradient solver configuration")


def _rank_key(feasible: bool, objective: float, margin: float) -> tuple:
    # feasible candidates compare on objective, infeasible ones sort below
    # every feasible candidate by violation magnitude
    if feasible:
        return (0, objective)
    return (1, -margin)


def solve_es(
    problem: HorizonProblem, config: SolverConfig, rng: np.random.Generator
) -> tuple[np.ndarray, dict]:
    """(1+lambda) evolution strategy with feasibility-first ranking.

    Each iteration draws its full noise block in one generator call, so
    mutant evaluation could be farmed out in any order without touching
    the random stream.
    """
    n = problem.n_inputs
    if problem.warm_start is not None:
        parent = problem.warm_start.copy()
    else:
        parent = np.full(n, 0.5 * problem.i_max)
    p_obj, p_g = problem.evaluate(parent)
    p_margin = problem.margin(p_g)
    p_key = _rank_key(p_margin >= 0.0, p_obj, p_margin)

    history = [p_obj]
    scale = config.mutation_scale * problem.i_max
    evaluations = 1
    for _ in range(config.iterations):
        noise = rng.standard_normal((config.population, n))
        mutants = np.clip(parent + scale * noise, 0.0, problem.i_max)
        objs, gs = problem.evaluate_batch(mutants)
        margins = gs.min(axis=1) - problem.offset
        evaluations += config.population

        feasible = margins >= 0.0
        if feasible.any():
            idx = int(np.argmin(np.where(feasible, objs, np.inf)))
        else:
            idx = int(np.argmax(margins))
        key = _rank_key(bool(feasible[idx]), float(objs[idx]), float(margins[idx]))
        if key < p_key:
            parent = mutants[idx]
            p_obj, p_margin, p_key = float(objs[idx]), float(margins[idx]), key
        history.append(p_obj)
        scale *= config.mutation_decay

    return parent, {
        "objective": p_obj,
        "feasible": p_margin >= 0.0,
        "violation": max(-p_margin, 0.0),
        "parent_objective_history": history,
        "evaluations": evaluations,
    }


def solve_grad(problem: HorizonProblem, config: SolverConfig) -> tuple[np.ndarray, dict]:
    """Projected gradient on the penalized objective.

    Minimizes J + penalty * sum(max(offset - G, 0)^2) with analytic
    gradients, clamping to the input box, and Armijo backtracking.
    Returns the best feasible iterate seen if any, else the iterate with
    the smallest penalized objective.
    """
    n = problem.n_inputs

    def penalized(u):
        obj, g = problem.evaluate(u)
        slack = np.maximum(problem.offset - g, 0.0)
        return obj + config.grad_penalty * float(slack @ slack), obj, g

    if problem.warm_start is not None:
        u = problem.warm_start.copy()
    else:
        u = np.full(n, 0.5 * problem.i_max)
    f_val, obj, g = penalized(u)
    best_feasible = None  # (objective, u)
    best_pen = (f_val, u.copy())
    history = [f_val]
    grad_norm = np.inf

    for _ in range(config.grad_max_iter):
        if problem.margin(g) >= 0.0 and (best_feasible is None or obj < best_feasible[0]):
            best_feasible = (obj, u.copy())
        d_obj, d_g = problem.gradients(u)
        slack = np.maximum(problem.offset - g, 0.0)
        grad = d_obj - 2.0 * config.grad_penalty * (slack @ d_g)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradient("penalized objective gradient is not finite")
        grad_norm = float(np.max(np.abs(u - np.clip(u - grad, 0.0, problem.i_max))))
        if grad_norm < config.grad_tol:
            break

        step = config.grad_init_step
        accepted = False
        while step > 1e-14:
            u_new = np.clip(u - step * grad, 0.0, problem.i_max)
            move = u_new - u
            if np.max(np.abs(move)) == 0.0:
                break
            f_new, obj_new, g_new = penalized(u_new)
            if f_new <= f_val - config.armijo / step * float(move @ move):
                u, f_val, obj, g = u_new, f_new, obj_new, g_new
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        history.append(f_val)
        if f_val < best_pen[0]:
            best_pen = (f_val, u.copy())

    if problem.margin(g) >= 0.0 and (best_feasible is None or obj < best_feasible[0]):
        best_feasible = (obj, u.copy())
    u_out = best_feasible[1] if best_feasible is not None else best_pen[1]
    obj_out, g_out = problem.evaluate(u_out)
    margin_out = problem.margin(g_out)
    return u_out, {
        "objective": obj_out,
        "feasible": margin_out >= 0.0,
        "violation": max(-margin_out, 0.0),
        "penalized_history": history,
        "grad_norm": grad_norm,
        "iterations": len(history) - 1,
    }


def shift_warm_start(u_prev: np.ndarray) -> np.ndarray:
    """Drop the applied first input, repeat the last one."""
    u_prev = as_vector(u_prev, name="u_prev")
    return np.concatenate([u_prev[1:], u_prev[-1:]])


def rhc_step(
    state: PlantState,
    bundle: SurrogateBundle,
    basis: PcaBasis,
    normalizer: StateNormalizer,
    i_max: float,
    offset: float,
    config: SolverConfig,
    u_prev: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    solver: str = "es",
) -> tuple[float, np.ndarray, dict]:
    """Reduce the state, solve the horizon program, return the first input."""
    x_red = basis.transform(normalizer.normalize(state.flatten()))
    warm = shift_warm_start(u_prev) if u_prev is not None else None
    problem = HorizonProblem(
        bundle=bundle, x_red=x_red, i_max=i_max, offset=offset, warm_start=warm
    )
    if solver == "es":
        if rng is None:
            raise ValueError("the evolution strategy solver needs an rng")
        u_star, diag = solve_es(problem, config, rng)
    elif solver == "grad":
        u_star, diag = solve_grad(problem, config)
    else:
        raise ValueError("solver must be 'es' or 'grad'")
    return float(u_star[0]), u_star, diag


@dataclass(frozen=True)
class ControlRunConfig:
    """Closed-loop episode settings shared by all variants."""

    i_max: float = 2.5
    delta_t: float = 15.0
    soc_init: float = 0.0286
    soc_target: float = 0.7
    time_limit: float = 3300.0
    v_cutoff: float = 4.2
    solver: str = "es"

    def __post_init__(self):
        if self.i_max <= 0 or self.delta_t <= 0 or self.time_limit <= 0:
            raise ValueError("i_max, delta_t, time_limit must be positive")
        if not 0.0 <= self.soc_init < self.soc_target <= 1.0:
            raise ValueError("need 0 <= soc_init < soc_target <= 1")

    @property
    def max_steps(self) -> int:
        return int(round(self.time_limit / self.delta_t))


@dataclass
class ClosedLoopResult:
    """Episode log plus per-step solver diagnostics and a metric summary."""

    episode: EpisodeLog
    predicted_eta_s: np.ndarray  # NaN where no surrogate ran (CCCV)
    objectives: np.ndarray
    feasible: np.ndarray  # bool, False where no surrogate ran
    solve_times: np.ndarray
    variant: str

    def summary(self) -> dict:
        realized = self.episode.eta_s
        violations = int(np.sum(realized < 0.0))
        reached = self.episode.termination == TERMINATION_TARGET
        steps = self.episode.times.size
        return {
            "variant": self.variant,
            "seed": self.episode.seed,
            "steps": steps,
            "termination": self.episode.termination,
            "charge_time_min": steps * self._delta_t() / 60.0 if reached else None,
            "violation_count": violations,
            "max_violation_volts": float(np.maximum(-realized, 0.0).max(initial=0.0)),
            "mean_step_seconds": float(self.solve_times.mean()) if steps else 0.0,
        }

    def _delta_t(self) -> float:
        t = self.episode.times
        return float(t[1] - t[0]) if t.size > 1 else 0.0

    def save(self, prefix) -> None:
        """CSV + JSON summary; wall-clock data goes to a separate file so
        the main artifacts stay byte-identical across reruns."""
        prefix = str(prefix)
        ep = self.episode
        header = ["time", "current", "soc", "voltage", "eta_s", "temperature",
                  "predicted_eta_s", "objective", "feasible"]
        rows = np.column_stack([
            ep.times, ep.currents, ep.soc, ep.voltage, ep.eta_s, ep.temperature,
            self.predicted_eta_s, self.objectives, self.feasible.astype(float),
        ])
        write_csv(prefix + ".csv", header, rows)
        summary = self.summary()
        del summary["mean_step_seconds"]
        write_json(prefix + ".json", {
            "format_version": _FORMAT_VERSION,
            "kind": "closed_loop_result",
            "csv_file": prefix.split("/")[-1] + ".csv",
            **summary,
        })
        write_json(prefix + "_timing.json", {
            "kind": "closed_loop_timing",
            "solve_times": self.solve_times.tolist(),
            "mean_step_seconds": float(self.solve_times.mean()) if ep.times.size else 0.0,
        })

    @classmethod
    def load(cls, prefix) -> "ClosedLoopResult":
        prefix = str(prefix)
        meta = read_json(prefix + ".json")
        if meta.get("kind") != "closed_loop_result":
            raise ValueError(f"{prefix}.json: not a closed-loop result")
        raw = read_csv_columns(prefix + ".csv")
        cols = {name: np.asarray(vals, dtype=float) for name, vals in raw.items()}
        timing = read_json(prefix + "_timing.json")
        # plant state snapshots are not persisted in the per-step CSV
        episode = EpisodeLog(
            times=cols["time"],
            states=np.zeros((cols["time"].size, 0)),
            currents=cols["current"],
            soc=cols["soc"],
            voltage=cols["voltage"],
            eta_s=cols["eta_s"],
            temperature=cols["temperature"],
            termination=meta["termination"],
            seed=meta["seed"],
        )
        return cls(
            episode=episode,
            predicted_eta_s=cols["predicted_eta_s"],
            objectives=cols["objective"],
            feasible=cols["feasible"] > 0.5,
            solve_times=np.asarray(timing["solve_times"], dtype=float),
            variant=meta["variant"],
        )


def _finish(rows, termination, seed, variant) -> ClosedLoopResult:
    (times, states, currents, soc, voltage, eta_s, temp,
     predicted, objectives, feasible, solve_times) = zip(*rows)
    episode = EpisodeLog(
        times=np.asarray(times, dtype=float),
        states=np.asarray(states, dtype=float),
        currents=np.asarray(currents, dtype=float),
        soc=np.asarray(soc, dtype=float),
        voltage=np.asarray(voltage, dtype=float),
        eta_s=np.asarray(eta_s, dtype=float),
        temperature=np.asarray(temp, dtype=float),
        termination=termination,
        seed=seed,
    )
    return ClosedLoopResult(
        episode=episode,
        predicted_eta_s=np.asarray(predicted, dtype=float),
        objectives=np.asarray(objectives, dtype=float),
        feasible=np.asarray(feasible, dtype=bool),
        solve_times=np.asarray(solve_times, dtype=float),
        variant=variant,
    )


def run_closed_loop(
    params: PlantParams,
    bundle: SurrogateBundle,
    basis: PcaBasis,
    normalizer: StateNormalizer,
    offset: float,
    run_config: ControlRunConfig,
    solver_config: SolverConfig,
    seed: int,
    variant: str = "robust",
) -> ClosedLoopResult:
    """Drive the plant with the receding-horizon controller.

    The realized overpotential is logged from the plant, never the
    surrogate. Plant failures end the episode with the reason recorded.
    """
    rng = np.random.default_rng(seed)
    state = initial_state(run_config.soc_init, params)
    u_prev = None
    rows = []
    termination = TERMINATION_TIME
    for k in range(run_config.max_steps):
        t = k * run_config.delta_t
        started = time.perf_counter()
        u0, u_star, diag = rhc_step(
            state, bundle, basis, normalizer, run_config.i_max, offset,
            solver_config, u_prev=u_prev, rng=rng, solver=run_config.solver,
        )
        solve_time = time.perf_counter() - started
        try:
            out = observe(state, u0, params)
            nxt = step_spm(state, u0, run_config.delta_t, params)
        except DrsmpcError:
            termination = TERMINATION_ERROR
            break
        x_red = basis.transform(normalizer.normalize(state.flatten()))
        predicted = float(bundle.evaluate(x_red, u_star)[1][0])
        rows.append((
            t, state.flatten(), u0, out.soc, out.voltage, out.eta_s,
            out.temperature, predicted, diag["objective"], diag["feasible"],
            solve_time,
        ))
        state = nxt
        u_prev = u_star
        if observe(state, 0.0, params).soc >= run_config.soc_target:
            termination = TERMINATION_TARGET
            break
    if not rows:
        raise DrsmpcError("closed loop terminated before completing a single step")
    return _finish(rows, termination, seed, variant)


def cccv_baseline(
    params: PlantParams,
    run_config: ControlRunConfig,
    seed: int = 0,
) -> ClosedLoopResult:
    """Constant current to the voltage cutoff, then hold it by bisection.

    Every step picks the largest current in [0, i_max] whose terminal
    voltage at the pre-step state stays within 1 mV of the cutoff.
    """
    state = initial_state(run_config.soc_init, params)
    rows = []
    termination = TERMINATION_TIME
    for k in range(run_config.max_steps):
        t = k * run_config.delta_t
        started = time.perf_counter()
        try:
            if observe(state, run_config.i_max, params).voltage <= run_config.v_cutoff:
                u = run_config.i_max
            else:
                lo, hi = 0.0, run_config.i_max
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    if observe(state, mid, params).voltage > run_config.v_cutoff:
                        hi = mid
                    else:
                        lo = mid
                    if abs(observe(state, lo, params).voltage - run_config.v_cutoff) <= 1e-3:
                        break
                u = lo
            solve_time = time.perf_counter() - started
            out = observe(state, u, params)
            nxt = step_spm(state, u, run_config.delta_t, params)
        except DrsmpcError:
            termination = TERMINATION_ERROR
            break
        rows.append((t, state.flatten(), u, out.soc, out.voltage, out.eta_s,
                     out.temperature, np.nan, np.nan, False, solve_time))
        state = nxt
        if observe(state, 0.0, params).soc >= run_config.soc_target:
            termination = TERMINATION_TARGET
            break
    if not rows:
        raise DrsmpcError("CCCV loop terminated before completing a single step")
    return _finish(rows, termination, seed, "cccv")
