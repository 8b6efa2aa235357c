"""Multi-trial experiments with paired seeds and CSV artifacts.

Layout written by :func:`run_experiment`::

    out_dir/
      metadata.json                  config, seeds, package version, timestamp
      summary.csv                    one row per operator, recomputed from the CSVs
      <operator-slug>/train_<seed>.csv   episode,score,mean_gap
      <operator-slug>/test_<seed>.csv    episode,score   (when test_episodes > 0)
"""

from __future__ import annotations

import csv
import json
import logging
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .discretize import default_grid, parse_grid
from .envs import make_env
from .operators import Rso, parse_operator
from .qlearn import Schedules, TrialRecord, parse_schedule, train

log = logging.getLogger(__name__)

ABLATION_OPERATORS = ("rso:uniform:0:2", "rso:uniform:0:1", "rso:constant:1")
DEFAULT_OPERATORS = ("bellman", "consistent", "rso:uniform:0:2")

# Reduced-scale presets. Learning and exploration rates are shared by all
# three environments.
PRESETS = {
    "mountaincar": dict(episodes=3000, test_episodes=200, window=500),
    "acrobot": dict(episodes=10_000, test_episodes=0, window=1000),
    "cartpole": dict(episodes=20_000, test_episodes=0, window=1000),
}
PRESET_SCHEDULES = dict(alpha="constant:0.3", epsilon="constant:0.3", gamma=0.99)

# Score direction per environment: True when a lower score is better.
MINIMIZE = {"mountaincar": True, "acrobot": True, "cartpole": False}


@dataclass
class ExperimentConfig:
    env: str = "mountaincar"
    operators: list = field(default_factory=lambda: list(DEFAULT_OPERATORS))
    trials: int = 5
    episodes: int = 3000
    test_episodes: int = 200
    base_seed: int = 0
    window: int = 500
    alpha: str = PRESET_SCHEDULES["alpha"]
    epsilon: str = PRESET_SCHEDULES["epsilon"]
    gamma: float = PRESET_SCHEDULES["gamma"]
    grid: str | None = None
    out_dir: str = "runs/experiment"
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.episodes < 1:
            raise ValueError("episodes must be at least 1")
        if not 1 <= self.window <= self.episodes:
            raise ValueError(f"window must lie in [1, episodes={self.episodes}], got {self.window}")
        if self.test_episodes < 0:
            raise ValueError("test_episodes must be non-negative")
        if not self.operators:
            raise ValueError("need at least one operator")
        for op in self.operators:
            parse_operator(op)
        make_env(self.env)
        self.schedules()
        if self.grid is not None:
            parse_grid(self.grid)

    @classmethod
    def preset(cls, env: str, **overrides) -> "ExperimentConfig":
        base = dict(env=env, **PRESETS[env.lower()])
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text())
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    @property
    def seeds(self) -> list[int]:
        return [self.base_seed + i for i in range(self.trials)]

    def schedules(self) -> Schedules:
        return Schedules(parse_schedule(self.alpha), parse_schedule(self.epsilon), float(self.gamma))

    def build(self):
        env = make_env(self.env)
        grid = parse_grid(self.grid) if self.grid else default_grid(env)
        return env, grid


def operator_slug(op: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", str(parse_operator(op))).strip("_")


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trial_csv(path: Path, record: TrialRecord) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "score", "mean_gap"])
        for i, (s, g) in enumerate(zip(record.scores, record.mean_gaps)):
            w.writerow([i, _fmt(s), _fmt(g)])


def write_test_csv(path: Path, record: TrialRecord) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "score"])
        for i, s in enumerate(record.test_scores):
            w.writerow([i, _fmt(s)])


def read_trial_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1], data[:, 2]


def read_test_csv(path: Path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1] if data.size else np.zeros(0)


def _run_trial(cfg: ExperimentConfig, op: str, seed: int) -> TrialRecord:
    env, grid = cfg.build()
    try:
        return train(env, grid, parse_operator(op), cfg.episodes, cfg.schedules(), seed, cfg.test_episodes)
    except Exception as err:
        raise RuntimeError(f"trial with seed {seed} for operator {op} failed: {err}") from err


def run_trials(cfg: ExperimentConfig) -> dict[str, list[TrialRecord]]:
    """Train every (operator, seed) pair; operators share the same seeds."""
    jobs = [(op, seed) for op in cfg.operators for seed in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            futures = [pool.submit(_run_trial, cfg, op, seed) for op, seed in jobs]
            records = [f.result() for f in futures]
    else:
        records = [_run_trial(cfg, op, seed) for op, seed in jobs]
    out: dict[str, list[TrialRecord]] = {op: [] for op in cfg.operators}
    for (op, _), rec in zip(jobs, records):
        out[op].append(rec)
    return out


def run_experiment(cfg: ExperimentConfig) -> dict[str, list[TrialRecord]]:
    """Run all trials and write per-trial CSVs, ``summary.csv`` and ``metadata.json``."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    results = run_trials(cfg)
    for op, records in results.items():
        d = out / operator_slug(op)
        d.mkdir(exist_ok=True)
        for rec in records:
            write_trial_csv(d / f"train_{rec.seed}.csv", rec)
            if cfg.test_episodes:
                write_test_csv(d / f"test_{rec.seed}.csv", rec)
    rows = summarize(out, cfg)
    write_summary(out / "summary.csv", rows)
    meta = {
        "config": asdict(cfg),
        "seeds": cfg.seeds,
        "operators": {op: operator_slug(op) for op in cfg.operators},
        "version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "elapsed_s": round(time.time() - started, 3),
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    log.info("wrote %s", out)
    return results


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------


@dataclass
class Curve:
    episode: np.ndarray  # 1-based episode number at the end of each window
    mean: np.ndarray
    std: np.ndarray


def moving_window_average(scores, window: int) -> Curve:
    """Trailing-window mean and std pooled over trials.

    ``scores`` is ``(trials, episodes)`` (a 1-D array is one trial).
    """
    s = np.atleast_2d(np.asarray(scores, dtype=float))
    n = s.shape[1]
    if not 1 <= window <= n:
        raise ValueError(f"window {window} must lie in [1, {n}]")
    windows = np.lib.stride_tricks.sliding_window_view(s, window, axis=1)  # (trials, n-w+1, w)
    pooled = windows.transpose(1, 0, 2).reshape(n - window + 1, -1)
    return Curve(np.arange(window, n + 1), pooled.mean(axis=1), pooled.std(axis=1))


def final_gap_report(records: dict[str, list[TrialRecord]], episodes_tail: int = 1) -> dict[str, tuple[float, float]]:
    """Per operator: mean and std over trials of the mean action gap in the last episodes."""
    out = {}
    for op, recs in records.items():
        vals = np.array([np.mean(r.mean_gaps[-episodes_tail:]) for r in recs])
        out[op] = (float(vals.mean()), float(vals.std()))
    return out


SUMMARY_FIELDS = [
    "operator", "trials", "window_mean", "window_std", "test_mean", "test_std",
    "final_gap_mean", "final_gap_std",
]


def summarize(out_dir: str | Path, cfg: ExperimentConfig) -> list[dict]:
    """Recompute the per-operator summary from the CSV artifacts alone."""
    out = Path(out_dir)
    rows = []
    for op in cfg.operators:
        d = out / operator_slug(op)
        scores, gaps, tests = [], [], []
        for seed in cfg.seeds:
            s, g = read_trial_csv(d / f"train_{seed}.csv")
            scores.append(s)
            gaps.append(g[-1])
            if cfg.test_episodes:
                tests.append(read_test_csv(d / f"test_{seed}.csv").mean())
        curve = moving_window_average(np.array(scores), cfg.window)
        rows.append({
            "operator": op,
            "trials": len(scores),
            "window_mean": float(curve.mean[-1]),
            "window_std": float(curve.std[-1]),
            "test_mean": float(np.mean(tests)) if tests else float("nan"),
            "test_std": float(np.std(tests)) if tests else float("nan"),
            "final_gap_mean": float(np.mean(gaps)),
            "final_gap_std": float(np.std(gaps)),
        })
    return rows


def write_summary(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow([r[k] if isinstance(r[k], (str, int)) else _fmt(r[k]) for k in SUMMARY_FIELDS])


def test_scores_by_seed(records: dict[str, list[TrialRecord]]) -> dict[str, np.ndarray]:
    return {op: np.array([r.test_scores.mean() for r in recs]) for op, recs in records.items()}


# --------------------------------------------------------------------------
# beta ablation
# --------------------------------------------------------------------------


def ablation_beta(cfg: ExperimentConfig) -> list[dict]:
    """Compare RSO beta distributions with paired seeds and rank them per metric.

    An empty operator list means the standard three: U[0,2), U[0,1) and the
    constant 1.
    """
    ops = list(cfg.operators) or list(ABLATION_OPERATORS)
    for op in ops:
        if not isinstance(parse_operator(op), Rso):
            raise ValueError(f"beta ablation takes RSO operators only, got {op!r}")
    cfg = replace(cfg, operators=ops)
    run_experiment(cfg)
    rows = summarize(cfg.out_dir, cfg)
    minimize = MINIMIZE[cfg.env.lower()]
    metrics = [("window_mean", minimize), ("final_gap_mean", False)]
    if cfg.test_episodes:
        metrics.insert(0, ("test_mean", minimize))
    table = []
    for metric, lower_better in metrics:
        ranked = sorted(rows, key=lambda r: r[metric] if lower_better else -r[metric])
        for rank, r in enumerate(ranked, 1):
            table.append({"metric": metric, "rank": rank, "operator": r["operator"], "value": r[metric]})
    with open(Path(cfg.out_dir) / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "rank", "operator", "value"])
        for t in table:
            w.writerow([t["metric"], t["rank"], t["operator"], _fmt(t["value"])])
    return table
