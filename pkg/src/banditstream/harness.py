"""Episode runner, regret accounting, aggregation over runs and result files."""
from __future__ import annotations

import copy
import csv
import inspect
import itertools
import json
import platform
import subprocess
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .core import (ALL, BERNOULLI, LAST_SELECTED, ArmStats, Environment, ObservationProcess, Policy, RoundLog,
                   Trajectory)
from .environments import (StationaryEnv, gen_linear_profile, gen_periodic, gen_periodic_random, gen_recurrent_var,
                           gen_stationary, gen_variable_context, trace_replay)
from .numerics import InvalidParameter, derive_seed, make_rng
from .policies import lookup, make_policy, policy_params
from .policies.stochastic import StatsPolicy

RESULTS_HEADER = ["run", "t", "policy", "env", "cum_reward", "cum_regret"]
FINAL_HEADER = ["policy", "env", "runs", "final_reward_mean", "final_reward_std",
                "final_regret_mean", "final_regret_std"]

# sub-stream indices under a run seed
_TRUTH, _EPISODE, _POLICY, _OBS = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


# ---------------------------------------------------------------- environments

def _trace_builder(rng, log_path: str = "", K: int = 10, T: int = 100, weights=None,
                   max_new: Optional[int] = None, obs=None, seed: int = 0):
    from .environments import RewardWeights
    w = RewardWeights(tuple(weights)) if weights is not None else None
    return trace_replay(log_path, w, K, T, obs=obs, seed=seed, max_new=max_new)


ENV_BUILDERS = {
    "StationaryGaussian": (gen_stationary, {"dist": "gaussian"}),
    "StationaryBernoulli": (gen_stationary, {"dist": "bernoulli"}),
    "LinearProfile": (gen_linear_profile, {}),
    "VariableContext": (gen_variable_context, {}),
    "RecurrentVAR": (gen_recurrent_var, {}),
    "Periodic": (gen_periodic, {}),
    "PeriodicRandom": (gen_periodic_random, {}),
    "TraceReplay": (_trace_builder, {}),
}


def env_params(kind: str) -> dict:
    """Generator keyword parameters (with defaults) for an environment kind."""
    if kind not in ENV_BUILDERS:
        raise ConfigError(f"unknown environment kind {kind!r}; known: {', '.join(ENV_BUILDERS)}")
    fn, fixed = ENV_BUILDERS[kind]
    return {p.name: p.default for p in inspect.signature(fn).parameters.values()
            if p.name not in ("rng", "obs", "seed") and p.name not in fixed}


def build_env(kind: str, params: dict, obs: ObservationProcess, seed: int) -> Environment:
    fn, fixed = ENV_BUILDERS[kind]
    return fn(make_rng(seed), **fixed, **params, obs=obs, seed=seed)


# ---------------------------------------------------------------- configs

def parse_obs(value) -> ObservationProcess:
    """Observation process from a table {mode, p} or a shorthand string
    ("all", "last_selected", "p=0.5"). A table with p and no mode is Bernoulli(p)."""
    if isinstance(value, ObservationProcess):
        return value
    if isinstance(value, str):
        if value in (ALL, LAST_SELECTED):
            return ObservationProcess(value)
        if value.startswith("p="):
            return ObservationProcess(BERNOULLI, float(value[2:]))
        raise ConfigError(f"bad observation shorthand {value!r}")
    if isinstance(value, dict):
        unknown = set(value) - {"mode", "p"}
        if unknown:
            raise ConfigError(f"unknown obs key(s) {sorted(unknown)}")
        # a bare probability means independent reveals, so that grids over obs.p work
        mode = value.get("mode", BERNOULLI if "p" in value else ALL)
        p = float(value.get("p", 1.0))
        if mode == ALL and p != 1.0:
            raise ConfigError(f"obs mode 'all' does not take p={p:g}; use mode 'bernoulli'")
        try:
            return ObservationProcess(mode, p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    raise ConfigError(f"bad observation spec {value!r}")


@dataclass
class PolicySpec:
    name: str
    params: dict = field(default_factory=dict)
    label: Optional[str] = None
    obs: Optional[ObservationProcess] = None

    @property
    def display(self) -> str:
        if self.label:
            return self.label
        return f"{self.name}[{self.obs.label()}]" if self.obs is not None else self.name


@dataclass
class EnvSpec:
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        if "means" in self.params and self.params["means"] is not None:
            return len(self.params["means"])
        return int(self.params.get("K", env_params(self.kind).get("K")) or 0)


@dataclass
class ExperimentConfig:
    env: EnvSpec
    policies: List[PolicySpec]
    T: int = 1000
    k: int = 1
    n_runs: int = 10
    base_seed: int = 0
    obs: ObservationProcess = field(default_factory=ObservationProcess)
    name: str = "experiment"
    note: str = ""
    dump_truth: bool = False
    sweep: Dict[str, list] = field(default_factory=dict)

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError("experiment.T must be >= 1")
        if self.n_runs < 1:
            raise ConfigError("experiment.n_runs must be >= 1")
        K = self.env.K
        if not 1 <= self.k <= K:
            raise ConfigError(f"experiment.k must lie in [1, K={K}]")
        if not self.policies:
            raise ConfigError("no policy given")

    def env_label(self) -> str:
        return self.env.kind if self.obs.mode == ALL else f"{self.env.kind}[{self.obs.label()}]"


EXPERIMENT_KEYS = {"name", "T", "k", "n_runs", "base_seed", "note", "dump_truth"}
TOP_KEYS = {"experiment", "env", "obs", "policy", "policies", "sweep"}


def normalize_raw(raw: dict) -> dict:
    """Canonical dict form: a single ``[policy]`` table becomes ``policies``."""
    raw = copy.deepcopy(raw)
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    if "policy" in raw:
        if "policies" in raw:
            raise ConfigError("give either [policy] or [[policies]], not both")
        raw["policies"] = [raw.pop("policy")]
    return raw


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = normalize_raw(raw)
    exp = raw.get("experiment", {})
    unknown = set(exp) - EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown experiment key(s) {sorted(unknown)}")
    env_raw = dict(raw.get("env", {}))
    kind = env_raw.pop("kind", None)
    if kind is None:
        raise ConfigError("env.kind is required")
    allowed = env_params(kind)
    unknown = set(env_raw) - set(allowed)
    if unknown:
        raise ConfigError(f"env {kind}: unknown key(s) {sorted(unknown)}")
    policies = []
    for entry in raw.get("policies", []):
        entry = dict(entry)
        name = entry.pop("name", None)
        if name is None:
            raise ConfigError("every policy needs a name")
        try:
            allowed_p = policy_params(name)
        except InvalidParameter as exc:
            raise ConfigError(str(exc)) from None
        label = entry.pop("label", None)
        obs = parse_obs(entry.pop("obs")) if "obs" in entry else None
        unknown = set(entry) - set(allowed_p)
        if unknown:
            raise ConfigError(f"policy {name}: unknown key(s) {sorted(unknown)}")
        policies.append(PolicySpec(name, entry, label, obs))
    sweep = raw.get("sweep", {})
    if not isinstance(sweep, dict) or any(not isinstance(v, list) for v in sweep.values()):
        raise ConfigError("[sweep] maps dotted keys to lists of values")
    try:
        return ExperimentConfig(
            env=EnvSpec(kind, env_raw), policies=policies,
            T=int(exp.get("T", 1000)), k=int(exp.get("k", 1)), n_runs=int(exp.get("n_runs", 10)),
            base_seed=int(exp.get("base_seed", 0)), obs=parse_obs(raw.get("obs", {})),
            name=str(exp.get("name", "experiment")), note=str(exp.get("note", "")),
            dump_truth=bool(exp.get("dump_truth", False)), sweep=dict(sweep),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def set_dotted(raw: dict, key: str, value) -> None:
    """Set ``a.b.c`` in a nested config dict; list entries are addressed by index.

    ``policy.x`` addresses every policy entry, ``policies.2.x`` just one.
    """
    parts = key.split(".")
    if parts[0] == "policy" and len(parts) == 2 and "policies" in raw:
        for entry in raw["policies"]:
            entry[parts[1]] = value
        return
    node = raw
    for part in parts[:-1]:
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                raise ConfigError(f"bad index {part!r} in {key}") from None
        else:
            if part not in node:
                if part in ("experiment", "env", "obs", "sweep"):
                    node[part] = {}
                else:
                    raise ConfigError(f"unknown key {key}")
            node = node[part]
    last = parts[-1]
    if isinstance(node, list):
        try:
            node[int(last)] = value
        except (ValueError, IndexError):
            raise ConfigError(f"bad index {last!r} in {key}") from None
    elif last == "obs" and node is raw:
        node["obs"] = value
    else:
        node[last] = value


def config_to_dict(cfg: ExperimentConfig) -> dict:
    pols = []
    for p in cfg.policies:
        entry = {"name": p.name, **p.params}
        if p.label:
            entry["label"] = p.label
        if p.obs is not None:
            entry["obs"] = {"mode": p.obs.mode, "p": p.obs.p}
        pols.append(entry)
    return {
        "experiment": {"name": cfg.name, "T": cfg.T, "k": cfg.k, "n_runs": cfg.n_runs,
                       "base_seed": cfg.base_seed, "note": cfg.note, "dump_truth": cfg.dump_truth},
        "env": {"kind": cfg.env.kind, **cfg.env.params},
        "obs": {"mode": cfg.obs.mode, "p": cfg.obs.p},
        "policies": pols,
        "sweep": cfg.sweep,
    }


# ---------------------------------------------------------------- episodes

@dataclass
class RunResult:
    policy: str
    env: str
    run: int
    cum_reward: np.ndarray
    cum_regret: np.ndarray
    n_selected: np.ndarray
    wall_time: float = 0.0
    trajectory: Optional[Trajectory] = None

    @property
    def T(self) -> int:
        return int(self.cum_reward.size)


def pseudo_regret(trajectory: Trajectory) -> np.ndarray:
    """Cumulative Σ_s (oracle_s - expected value of the selected set at s)."""
    gaps = np.asarray(trajectory.oracle_values) - np.asarray(trajectory.selected_values)
    return np.cumsum(gaps)


def stationary_regret(means, n_selected, k: int) -> float:
    """Σ_i Δ_i N_i with Δ_i = (mean of the k best means) - μ_i.

    Equals the pseudo-regret of a stationary run because Σ_i N_i = kT.
    """
    means = np.asarray(means, dtype=float)
    best = np.sort(means)[::-1][:k].mean()
    return float(np.sum((best - means) * np.asarray(n_selected)))


def run_episode(policy: Policy, env: Environment, T: int, k: int, seed: int,
                keep_trajectory: bool = False) -> RunResult:
    """observe -> select -> reward -> update for t = 1..T on the episode
    streams derived from ``seed``."""
    env.reset(make_rng(seed, _EPISODE), make_rng(seed, _OBS))
    start = time.perf_counter()
    traj = Trajectory()
    reward = np.zeros(T)
    oracle = np.zeros(T)
    chosen = np.zeros(T)
    n_sel = np.zeros(env.K, dtype=np.int64)
    prev: Sequence[int] = ()
    for t in range(1, T + 1):
        env.begin_round(t)
        known = env.known_arms(t)
        observed = env.observe(t, prev, policy.uses_contexts)
        contexts = {i: x for i, x in observed.items() if x is not None}
        selected = policy.select(t, known, contexts)
        res = env.step(t, selected, k)
        full = env.realized(t).copy() if policy.wants_full_rewards else None
        log = RoundLog(t, tuple(selected), res.rewards, tuple(sorted(observed)), contexts, full)
        policy.update(log)
        env.end_round(t)
        reward[t - 1] = sum(res.rewards.values())
        oracle[t - 1] = res.oracle_value
        chosen[t - 1] = res.selected_value
        n_sel[list(selected)] += 1
        if keep_trajectory:
            traj.append(log, res.oracle_value, res.selected_value)
        prev = selected
    if not keep_trajectory:
        traj = None
    return RunResult(policy.name, env.kind, -1, np.cumsum(reward), np.cumsum(oracle - chosen), n_sel,
                     time.perf_counter() - start, traj)


def _policy_stream(label: str) -> int:
    return zlib.crc32(label.encode())


def _build_cell(cfg: ExperimentConfig, pidx: int, run: int):
    spec = cfg.policies[pidx]
    run_seed = derive_seed(cfg.base_seed, run)
    obs = spec.obs if spec.obs is not None else cfg.obs
    env = build_env(cfg.env.kind, cfg.env.params, obs, derive_seed(run_seed, _TRUTH))
    params = dict(spec.params)
    accepted = policy_params(spec.name)
    if "d" in accepted and "d" not in params and env.context_dim:
        params["d"] = env.context_dim
    if "T" in accepted and "T" not in params:
        params["T"] = cfg.T
    if "steps_per_period" in accepted and "steps_per_period" not in params and hasattr(env, "steps_per_period"):
        params["steps_per_period"] = env.steps_per_period
    rng = make_rng(run_seed, _POLICY, _policy_stream(spec.display))
    policy = make_policy(spec.name, env.K, cfg.k, rng, env=env, **params)
    return env, policy, run_seed


def run_cell(cfg: ExperimentConfig, pidx: int, run: int, keep_trajectory: bool = False) -> RunResult:
    """One (policy, run) cell. Ground truth, episode and observation streams
    depend only on (base_seed, run), so every policy faces the same draws."""
    env, policy, run_seed = _build_cell(cfg, pidx, run)
    res = run_episode(policy, env, cfg.T, cfg.k, run_seed, keep_trajectory)
    res.policy = cfg.policies[pidx].display
    res.env = cfg.env_label()
    res.run = run
    return res


def lockstep_ok(env: Environment, policy: Policy) -> bool:
    """Whether ``run_lockstep`` can advance this pairing."""
    return (isinstance(env, StationaryEnv) and isinstance(policy, StatsPolicy)
            and policy.batch_mode is not None and policy.stats.window is None
            and policy.stats.gamma == 1.0)


def _top_rows(scores: np.ndarray, m: int) -> np.ndarray:
    """Per-row column indices of the m largest scores, ties by lowest index."""
    keyed = np.where(np.isnan(scores), -np.inf, scores)
    if m == 1:
        return np.argmax(keyed, axis=1)[:, None]
    return np.argsort(-keyed, axis=1, kind="stable")[:, :m]


_BLOCK = 1024


def run_lockstep(cfg: ExperimentConfig, pidx: int, runs: Sequence[int]) -> List[RunResult]:
    """Several runs of one statistics-only policy on a stationary environment,
    advanced together round by round.

    Each run keeps its own ground truth, episode and policy streams, drawn in
    the same order as ``run_episode`` (reward rows come in blocks, which a
    generator yields identically to one row at a time), so the results equal
    ``run_cell``'s exactly. Only the bookkeeping is shared: the runs' arm
    statistics are stacked, and "index" policies score every run in one call.
    """
    start = time.perf_counter()
    cells = [_build_cell(cfg, pidx, r) for r in runs]
    envs = [c[0] for c in cells]
    pols = [c[1] for c in cells]
    if not all(lockstep_ok(e, p) for e, p in zip(envs, pols)):
        raise ValueError("run_lockstep needs a stationary environment and a batchable statistics policy")
    R, K, k, T = len(cells), envs[0].K, cfg.k, cfg.T
    lead = pols[0]
    streams = [make_rng(c[2], _EPISODE) for c in cells]
    means = np.stack([e.means for e in envs])
    oracle = np.array([e.oracle_value(1, k) for e in envs])

    stats = ArmStats(K)
    stats.n_selected = np.zeros((R, K), dtype=np.int64)
    stats.sum_reward = np.zeros((R, K))
    stats.sum_sq_reward = np.zeros((R, K))
    stats.disc_count = np.zeros((R, K))
    stats.disc_sum = np.zeros((R, K))
    extra = {name: np.zeros((R, K)) for name in lead.stacked}
    for r, p in enumerate(pols):
        for name in ("n_selected", "sum_reward", "sum_sq_reward", "disc_count", "disc_sum"):
            setattr(p.stats, name, getattr(stats, name)[r])
        p.n_selected = stats.n_selected[r]
        for name, arr in extra.items():
            setattr(p, name, arr[r])

    rows = np.arange(R)[:, None]
    all_arms = np.arange(K)
    reward = np.zeros((R, T))
    chosen = np.zeros((R, T))
    n_sel = np.zeros((R, K), dtype=np.int64)
    N = stats.n_selected
    for t0 in range(0, T, _BLOCK):
        B = min(_BLOCK, T - t0)
        if envs[0].dist == "bernoulli":
            u = np.stack([g.random((B, K)) for g in streams])
            block = (u < means[:, None, :]).astype(float)
        else:
            sig = np.array([e.sigma for e in envs])[:, None, None]
            block = means[:, None, :] + sig * np.stack([g.standard_normal((B, K)) for g in streams])
        for j in range(B):
            t = t0 + j + 1
            # never-selected arms come first; the cold-start pattern is the
            # same in every run because it involves no randomness
            fresh = np.flatnonzero(N[0] == 0)
            if fresh.size >= k:
                sel = np.broadcast_to(fresh[:k], (R, k))
            else:
                rest = np.flatnonzero(N[0] > 0) if fresh.size else all_arms
                if lead.batch_mode == "index":
                    sc = lead.index(t, stats)[:, rest]
                else:
                    sc = np.stack([p.scores(t, rest) for p in pols])
                sel = rest[_top_rows(sc, k - fresh.size)]
                if fresh.size:
                    sel = np.hstack([np.broadcast_to(fresh, (R, fresh.size)), sel])
            got = block[:, j, :][rows, sel]
            total = got[:, 0].copy()
            for c in range(1, k):
                total += got[:, c]
            reward[:, t - 1] = total
            chosen[:, t - 1] = means[rows, sel].sum(axis=1)
            lead.learn_stacked(extra, rows, sel, got)
            N[rows, sel] += 1
            stats.sum_reward[rows, sel] += got
            stats.sum_sq_reward[rows, sel] += got * got
            stats.disc_count[rows, sel] += 1.0
            stats.disc_sum[rows, sel] += got
            n_sel[rows, sel] += 1
    wall = (time.perf_counter() - start) / R
    spec = cfg.policies[pidx]
    cum_reward = np.cumsum(reward, axis=1)
    cum_regret = np.cumsum(oracle[:, None] - chosen, axis=1)
    return [RunResult(spec.display, cfg.env_label(), run, cum_reward[i], cum_regret[i], n_sel[i], wall)
            for i, run in enumerate(runs)]


def _policy_cells(cfg: ExperimentConfig, pidx: int, runs: Sequence[int]) -> List[RunResult]:
    stationary = ENV_BUILDERS[cfg.env.kind][0] is gen_stationary
    if runs and stationary and getattr(lookup(cfg.policies[pidx].name), "batch_mode", None):
        env, policy, _ = _build_cell(cfg, pidx, runs[0])
        if lockstep_ok(env, policy):
            return run_lockstep(cfg, pidx, runs)
    return [run_cell(cfg, pidx, r) for r in runs]


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> List[RunResult]:
    """All (policy, run) cells, ordered by policy then run. ``jobs`` > 1 runs
    the cells in worker processes; the output does not depend on ``jobs``.

    Statistics-only policies on stationary environments go through the
    lockstep runner, which gives the same numbers as running cell by cell.
    """
    n_chunks = max(1, min(jobs, cfg.n_runs))
    chunks = [(p, list(runs)) for p in range(len(cfg.policies))
              for runs in np.array_split(np.arange(cfg.n_runs), n_chunks) if runs.size]
    if jobs == 1:
        parts = [_policy_cells(cfg, p, [int(r) for r in runs]) for p, runs in chunks]
    else:
        from joblib import Parallel, delayed
        parts = Parallel(n_jobs=jobs)(delayed(_policy_cells)(cfg, p, [int(r) for r in runs])
                                      for p, runs in chunks)
    return [res for part in parts for res in part]


def env_manifest(cfg: ExperimentConfig, run: int = 0) -> dict:
    run_seed = derive_seed(cfg.base_seed, run)
    env = build_env(cfg.env.kind, cfg.env.params, cfg.obs, derive_seed(run_seed, _TRUTH))
    return env.manifest(cfg.dump_truth)


# ---------------------------------------------------------------- aggregation

@dataclass
class Aggregate:
    policy: str
    env: str
    runs: int
    reward_mean: np.ndarray
    reward_std: np.ndarray
    regret_mean: np.ndarray
    regret_std: np.ndarray
    final_reward: np.ndarray
    final_regret: np.ndarray

    def quantiles(self, which: str = "regret") -> tuple:
        """(min, q1, median, q3, max) of the final values."""
        v = self.final_regret if which == "regret" else self.final_reward
        return tuple(float(q) for q in np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0]))

    @property
    def final_reward_mean(self) -> float:
        return float(self.reward_mean[-1])

    @property
    def final_regret_mean(self) -> float:
        return float(self.regret_mean[-1])

    @property
    def final_reward_std(self) -> float:
        return float(self.reward_std[-1])

    @property
    def final_regret_std(self) -> float:
        return float(self.regret_std[-1])


def _std(x: np.ndarray) -> np.ndarray:
    if x.shape[0] < 2:
        return np.zeros(x.shape[1:])
    return x.std(axis=0, ddof=1)


def aggregate(results: Sequence[RunResult]) -> Dict[tuple, Aggregate]:
    """Pointwise mean and sample std per (policy, env), in first-seen order."""
    groups: Dict[tuple, List[RunResult]] = {}
    for r in results:
        groups.setdefault((r.policy, r.env), []).append(r)
    out = {}
    for key, rs in groups.items():
        if len({r.T for r in rs}) != 1:
            raise LengthMismatch(f"{key}: runs of different lengths")
        rw = np.stack([r.cum_reward for r in rs])
        rg = np.stack([r.cum_regret for r in rs])
        out[key] = Aggregate(key[0], key[1], len(rs), rw.mean(axis=0), _std(rw), rg.mean(axis=0),
                             _std(rg), rw[:, -1].copy(), rg[:, -1].copy())
    return out


def gap_se(a: Aggregate, b: Aggregate, which: str = "regret") -> float:
    """Pooled standard error of the difference of final means."""
    va = a.final_regret if which == "regret" else a.final_reward
    vb = b.final_regret if which == "regret" else b.final_reward
    sa = va.var(ddof=1) if va.size > 1 else 0.0
    sb = vb.var(ddof=1) if vb.size > 1 else 0.0
    return float(np.sqrt(sa / va.size + sb / vb.size))


# ---------------------------------------------------------------- output

def version_string() -> str:
    """git-describe output when run from a checkout, else v<version>."""
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"],
                             cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"v{__version__}-{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_results_csv(results: Sequence[RunResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in results:
            for t in range(r.T):
                w.writerow([r.run, t + 1, r.policy, r.env, _fmt(r.cum_reward[t]), _fmt(r.cum_regret[t])])


def read_results_csv(path) -> List[RunResult]:
    rows: Dict[tuple, list] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != RESULTS_HEADER:
            raise ValueError(f"unexpected header {header}")
        for run, t, pol, env, rw, rg in reader:
            rows.setdefault((pol, env, int(run)), []).append((int(t), float(rw), float(rg)))
    out = []
    for (pol, env, run), vals in rows.items():
        vals.sort()
        out.append(RunResult(pol, env, run, np.array([v[1] for v in vals]), np.array([v[2] for v in vals]),
                             np.zeros(0, dtype=np.int64)))
    return out


def write_final_csv(aggs: Dict[tuple, Aggregate], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FINAL_HEADER)
        for a in aggs.values():
            w.writerow([a.policy, a.env, a.runs, _fmt(a.final_reward_mean), _fmt(a.final_reward_std),
                        _fmt(a.final_regret_mean), _fmt(a.final_regret_std)])


def read_final_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != FINAL_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        out = []
        for row in reader:
            row = dict(row)
            row["runs"] = int(row["runs"])
            for key in FINAL_HEADER[3:]:
                row[key] = float(row[key])
            out.append(row)
    return out


def emit(results: Sequence[RunResult], out_dir, cfg: Optional[ExperimentConfig] = None,
         extra: Optional[dict] = None) -> Dict[str, Path]:
    """results.csv, final.csv and manifest.json under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"results": out / "results.csv", "final": out / "final.csv", "manifest": out / "manifest.json"}
    write_results_csv(results, paths["results"])
    write_final_csv(aggregate(results), paths["final"])
    manifest = {
        "version": version_string(),
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": __import__("scipy").__version__},
        "wall_times": [{"policy": r.policy, "run": r.run, "seconds": r.wall_time} for r in results],
    }
    if cfg is not None:
        manifest.update(
            config=config_to_dict(cfg),
            base_seed=cfg.base_seed,
            run_seeds=[derive_seed(cfg.base_seed, r) for r in range(cfg.n_runs)],
            note=cfg.note,
            env=env_manifest(cfg),
        )
        if cfg.dump_truth:
            manifest["env_runs"] = [env_manifest(cfg, r) for r in range(cfg.n_runs)]
    if extra:
        manifest.update(extra)
    with open(paths["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2, default=_json_default)
        fh.write("\n")
    return paths


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not serializable: {type(o)}")


# ---------------------------------------------------------------- sweeps

def sweep_cells(raw: dict, grid: Dict[str, list]) -> List[tuple]:
    """(cell name, raw config) for each point of the Cartesian grid."""
    if not grid:
        return [("", copy.deepcopy(raw))]
    keys = list(grid)
    cells = []
    for values in itertools.product(*(grid[k] for k in keys)):
        cell = copy.deepcopy(raw)
        cell.pop("sweep", None)
        for key, v in zip(keys, values):
            set_dotted(cell, key, v)
        name = "_".join(f"{k.split('.')[-1]}={v}" for k, v in zip(keys, values))
        cells.append((name, cell))
    return cells
