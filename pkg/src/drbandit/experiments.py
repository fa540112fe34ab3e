"""Run orchestration shared by the command line and the acceptance tests:
one (config, seed) run, CSV persistence and the log-log slope fit."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import WRAPPER, ExperimentConfig, run_stream
from .environments import (
    OfflineOptimum,
    RegretTrace,
    compute_alpha_regret,
    offline_optimum_continuous,
    offline_optimum_discrete,
)
from .errors import ConfigError
from .geometry import ProductSimplexBarrier
from .learners import RUNNERS, RunHistory
from .reductions import run_mlsm_wrapper

log = logging.getLogger(__name__)

RUN_HEADER = ("round", "block", "is_exploration", "reward", "cum_reward", "cum_alpha_regret")
SUMMARY_HEADER = ("seed", "T", "final_cum_alpha_regret", "mean_reward")
REALIZED_HEADER = ("round", "realized_reward", "mean_reward")
FLOAT_FMT = "%.17g"


@dataclass
class RunResult:
    seed: int
    horizon: int
    history: RunHistory
    optimum: OfflineOptimum
    regret: RegretTrace

    @property
    def final_regret(self) -> float:
        return self.regret.final

    @property
    def mean_reward(self) -> float:
        return float(self.regret.rewards.mean())


def benchmark(cfg: ExperimentConfig, env) -> OfflineOptimum:
    if cfg.algorithm == WRAPPER:
        return offline_optimum_discrete(env, cfg.build_constraint())
    return offline_optimum_continuous(env)


def run_one(
    cfg: ExperimentConfig, seed: int, horizon: int | None = None, optimum=None, keep_estimates: bool = False
) -> RunResult:
    """Execute one seeded run. ``optimum`` may be passed in to reuse a
    benchmark across seeds of an oblivious environment.

    Per-block estimates (each carrying its local metric) are dropped unless
    ``keep_estimates``; at L = 1 they would dominate memory."""
    T = cfg.horizon if horizon is None else int(horizon)
    env = cfg.build_environment(seed, T)
    params = cfg.learner_params(T)
    stream = run_stream(seed)
    if cfg.algorithm == WRAPPER:
        hist = run_mlsm_wrapper(cfg.build_mapping(), None, env, params, stream)
    else:
        dom = cfg.build_domain()
        hist = RUNNERS[cfg.algorithm](dom, ProductSimplexBarrier(dom), env, params, stream)
    if not keep_estimates:
        hist.estimates = []
    opt = optimum if optimum is not None else benchmark(cfg, env)
    return RunResult(seed=seed, horizon=T, history=hist, optimum=opt, regret=compute_alpha_regret(hist, opt))


def run_seeds(cfg: ExperimentConfig, horizon: int | None = None, seeds=None) -> list[RunResult]:
    T = cfg.horizon if horizon is None else int(horizon)
    seeds = cfg.seeds if seeds is None else list(seeds)
    shared = None
    if not cfg.is_stochastic:
        # oblivious sequences do not depend on the seed, so one benchmark serves all runs
        shared = benchmark(cfg, cfg.build_environment(seeds[0], T))
    out = []
    for s in seeds:
        log.info("run %s seed=%d T=%d", cfg.name, s, T)
        out.append(run_one(cfg, s, T, optimum=shared))
    return out


# --------------------------------------------------------------------- CSV


def run_table(result: RunResult) -> np.ndarray:
    h, r = result.history, result.regret
    T = h.horizon
    return np.column_stack([
        np.arange(T, dtype=float), h.blocks.astype(float), h.exploration.astype(float),
        r.rewards, r.cum_rewards, r.cumulative,
    ])


def write_run_csv(result: RunResult, path) -> Path:
    """Per-round CSV; in stochastic mode the reward column holds mean-function
    rewards and a ``*_realized.csv`` sidecar keeps the sampled ones."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = ["%d", "%d", "%d", FLOAT_FMT, FLOAT_FMT, FLOAT_FMT]
    np.savetxt(path, run_table(result), fmt=fmt, delimiter=",", header=",".join(RUN_HEADER), comments="")
    h = result.history
    if h.mean_rewards is not None:
        side = path.with_name(path.stem + "_realized.csv")
        tab = np.column_stack([np.arange(h.horizon, dtype=float), h.rewards, h.mean_rewards])
        np.savetxt(side, tab, fmt=["%d", FLOAT_FMT, FLOAT_FMT], delimiter=",",
                   header=",".join(REALIZED_HEADER), comments="")
    return path


def write_summary_csv(results, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(",".join(SUMMARY_HEADER) + "\n")
        for r in results:
            fh.write(f"{r.seed},{r.horizon},{FLOAT_FMT % r.final_regret},{FLOAT_FMT % r.mean_reward}\n")
    return path


def read_csv(path) -> tuple[tuple[str, ...], np.ndarray]:
    """Read a run or summary CSV, checking the header and every cell.

    Raises ConfigError naming the offending row/column."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such file")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty file")
    header = tuple(rows[0])
    if header not in (RUN_HEADER, SUMMARY_HEADER):
        raise ConfigError(f"{path}: row 1: unrecognised header {','.join(header)}")
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ConfigError(f"{path}: row {i}: expected {len(header)} columns, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                data[i - 2, j] = float(cell)
            except ValueError:
                raise ConfigError(f"{path}: row {i}, column {header[j]}: not a number: {cell!r}") from None
    if data.shape[0] == 0:
        raise ConfigError(f"{path}: header only, no data rows")
    return header, data


# ------------------------------------------------------------------- slope


def loglog_slope(horizons, regrets) -> float:
    """Least-squares slope of log(regret) against log(T); needs positive regret."""
    T = np.asarray(horizons, dtype=float)
    R = np.asarray(regrets, dtype=float)
    if T.size < 2:
        raise ValueError("need at least two horizons for a slope")
    if np.any(R <= 0):
        raise ValueError("log-log slope needs positive regret values")
    return float(np.polyfit(np.log(T), np.log(R), 1)[0])


def mean_final_regret(results) -> dict[int, float]:
    by_T: dict[int, list[float]] = {}
    for r in results:
        by_T.setdefault(r.horizon, []).append(r.final_regret)
    return {T: float(np.mean(v)) for T, v in sorted(by_T.items())}
