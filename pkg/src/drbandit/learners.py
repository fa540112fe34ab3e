"""Block-scheduled bandit learners.

Each horizon is cut into blocks of length L. One uniformly chosen round per
full block explores and yields a gradient estimate; the other rounds replay
the current regularized-leader iterate. A trailing partial block only exploits.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import estimators as est
from .errors import ContractError, InvariantError
from .geometry import ProductSimplexBarrier, ProductSimplexDomain, analytic_center, rftl_argmin
from .sampling import RandomStream, as_stream, sample_block_round

ALGORITHMS = ("mlsm", "drsm", "mlsm4ps")

#: algorithm -> preset -> (eta, L, delta) as functions of (d, T, D).
#: "derived" balances the terms of the regret derivation; "stated" is the
#: more conservative schedule quoted alongside the headline rate.
PRESETS: dict[str, dict[str, Callable]] = {
    "mlsm": {
        "derived": lambda d, T, D: (d ** (-8 / 3) * T ** (-1 / 3), d ** (-4 / 3) * T ** (1 / 3), None),
        "stated": lambda d, T, D: (d**-4.0 * T ** (-2 / 3), d**-2.0 * T ** (1 / 3), None),
    },
    "drsm": {
        "derived": lambda d, T, D: (
            D**-2.0 / d * T**-0.5,
            d**-0.5 / D * T**0.25,
            D**-0.5 * d**0.25 * T ** (-1 / 8),
        ),
        "stated": lambda d, T, D: (D**-2.0 / d * T**-0.5, d**-0.5 * T**0.25, d**0.25 * T ** (-1 / 8)),
    },
    "mlsm4ps": {
        "derived": lambda d, T, D: (d ** (-7 / 3) * T ** (-1 / 3), d ** (-5 / 3) * T ** (1 / 3), None),
        "mlsm-derived": lambda d, T, D: (d ** (-8 / 3) * T ** (-1 / 3), d ** (-4 / 3) * T ** (1 / 3), None),
    },
}
DEFAULT_PRESET = {"mlsm": "derived", "drsm": "derived", "mlsm4ps": "derived"}


@dataclass(frozen=True)
class LearnerParams:
    eta: float
    block_length: int
    delta: float | None = None
    raw_block_length: float | None = None
    raw_delta: float | None = None
    preset: str | None = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ContractError(f"eta must be positive, got {self.eta}")
        if int(self.block_length) != self.block_length or self.block_length < 1:
            raise ContractError(f"block length must be an integer >= 1, got {self.block_length}")
        if self.delta is not None and not 0.0 < self.delta <= 1.0:
            raise ContractError(f"delta must lie in (0, 1], got {self.delta}")


def default_params(
    algorithm: str,
    d: int,
    T: int,
    D: float = 1.0,
    L1: float | None = None,
    preset: str | None = None,
    eta_scale: float = 1.0,
    block_scale: float = 1.0,
) -> LearnerParams:
    """Rate-optimal parameters from the named preset, with L clamped to max(1, round(L)) and
    delta to min(1, delta). ``eta_scale``/``block_scale`` multiply the raw
    formulas (they change constants, never the T-exponents). ``L1`` is
    accepted for interface symmetry; none of the shipped presets use it."""
    if algorithm not in PRESETS:
        raise ContractError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    if T < 1 or d < 1:
        raise ContractError("T and d must be >= 1")
    preset = preset or DEFAULT_PRESET[algorithm]
    if preset not in PRESETS[algorithm]:
        raise ContractError(f"unknown preset {preset!r} for {algorithm}: {sorted(PRESETS[algorithm])}")
    eta, L_raw, delta_raw = PRESETS[algorithm][preset](float(d), float(T), float(D))
    eta *= eta_scale
    L_raw *= block_scale
    L = max(1, int(round(L_raw)))
    delta = None if delta_raw is None else min(1.0, delta_raw)
    return LearnerParams(
        eta=eta, block_length=L, delta=delta, raw_block_length=L_raw, raw_delta=delta_raw, preset=preset
    )


@dataclass(frozen=True)
class BlockSchedule:
    horizon: int
    block_length: int

    @property
    def n_blocks(self) -> int:
        return -(-self.horizon // self.block_length)

    @property
    def n_full_blocks(self) -> int:
        return self.horizon // self.block_length

    def bounds(self, q: int) -> tuple[int, int]:
        start = q * self.block_length
        return start, min(self.horizon, start + self.block_length)

    def is_full(self, q: int) -> bool:
        a, b = self.bounds(q)
        return b - a == self.block_length


@dataclass
class RunHistory:
    """Per-round rewards and flags plus per-block iterates and estimates.

    Rounds are 0-indexed internally. ``iterates[q]`` is the point played in
    the exploitation rounds of block q; ``iterates[-1]`` is the point after
    the last update.
    """

    rewards: np.ndarray
    blocks: np.ndarray
    exploration: np.ndarray
    iterates: np.ndarray
    exploration_actions: np.ndarray
    estimates: list
    params: LearnerParams
    algorithm: str
    mean_rewards: np.ndarray | None = None
    discrete_actions: np.ndarray | None = None
    newton_iterations: list = field(default_factory=list)
    dual_bound_violations: int = 0

    @property
    def horizon(self) -> int:
        return self.rewards.size

    @property
    def exploration_rounds(self) -> np.ndarray:
        return np.flatnonzero(self.exploration)

    def actions(self) -> np.ndarray:
        """(T, d) array of the continuous action of every round."""
        out = self.iterates[self.blocks]
        out[self.exploration] = self.exploration_actions
        return out


class ContinuousFeedback:
    """Adapter over an environment whose rounds take continuous actions."""

    def __init__(self, env):
        self.env = env
        self.horizon = env.horizon

    def play(self, t: int, y: np.ndarray) -> float:
        return self.env.reward(t, y)

    def play_constant(self, t0: int, t1: int, y: np.ndarray, skip: int | None = None) -> np.ndarray:
        return self.env.rewards_constant(t0, t1, y)

    def finish(self, history: RunHistory):
        if getattr(self.env, "is_stochastic", False):
            history.mean_rewards = history.rewards.copy()


def _run_blocks(
    algorithm: str,
    domain: ProductSimplexDomain,
    feedback,
    params: LearnerParams,
    stream: RandomStream,
    propose: Callable,
    ingest: Callable,
    dual_check: Callable | None = None,
    logger=None,
) -> RunHistory:
    T = int(feedback.horizon)
    sched = BlockSchedule(T, int(params.block_length))
    barrier = ProductSimplexBarrier(domain)
    d = domain.dim
    x = analytic_center(domain)
    acc = np.zeros(d)

    rewards = np.empty(T)
    blocks = np.empty(T, dtype=np.int64)
    flags = np.zeros(T, dtype=bool)
    iterates = np.empty((sched.n_blocks + 1, d))
    explore = np.empty((sched.n_full_blocks, d))
    estimates = []
    newton_its = []
    violations = 0

    for q in range(sched.n_blocks):
        t0, t1 = sched.bounds(q)
        blocks[t0:t1] = q
        iterates[q] = x
        if not sched.is_full(q):
            rewards[t0:t1] = feedback.play_constant(t0, t1, x)
            continue
        tq = sample_block_round(stream, t0, sched.block_length)
        metric = barrier.metric(x)
        trace = propose(x, metric, stream, domain, q, tq)
        rewards[t0:t1] = feedback.play_constant(t0, t1, x, skip=tq)
        obs = feedback.play(tq, trace.action)
        rewards[tq] = obs
        flags[tq] = True
        explore[q] = trace.action
        g = ingest(trace, obs)
        if dual_check is not None and not dual_check(g):
            violations += 1
            if logger is not None:
                logger(f"block {q}: estimate exceeds its dual-norm bound")
        estimates.append(g)
        acc += g.gradient
        x, info = rftl_argmin(domain, acc, params.eta, warm_start=x, return_info=True)
        newton_its.append(info.iterations)
    iterates[sched.n_blocks] = x
    if not np.all(domain.contains(explore, tol=1e-9)):
        raise InvariantError("an exploration action left the domain")

    hist = RunHistory(
        rewards=rewards, blocks=blocks, exploration=flags, iterates=iterates,
        exploration_actions=explore, estimates=estimates, params=params, algorithm=algorithm,
        newton_iterations=newton_its, dual_bound_violations=violations,
    )
    if hasattr(feedback, "finish"):
        feedback.finish(hist)
    return hist


def _feedback_for(env):
    return env if hasattr(env, "play_constant") else ContinuousFeedback(env)


def run_bandit_mlsm(domain, barrier, env, params: LearnerParams, stream, dual_check=None, logger=None) -> RunHistory:
    """Bandit learner for multilinear monotone DR-submodular rewards."""
    _check_barrier(domain, barrier)
    return _run_blocks(
        "mlsm", domain, _feedback_for(env), params, as_stream(stream),
        est.mlsm_propose, est.mlsm_ingest, dual_check, logger,
    )


def run_bandit_drsm(domain, barrier, env, params: LearnerParams, stream, dual_check=None, logger=None) -> RunHistory:
    """Bandit learner for smooth monotone DR-submodular rewards."""
    _check_barrier(domain, barrier)
    if params.delta is None:
        raise ContractError("DRSM needs a smoothing radius delta")
    delta = params.delta

    def propose(x, metric, stream, domain, q, tq):
        return est.drsm_propose(x, metric, delta, stream, domain, q, tq)

    return _run_blocks(
        "drsm", domain, _feedback_for(env), params, as_stream(stream),
        propose, est.drsm_ingest, dual_check, logger,
    )


def run_bandit_mlsm4ps(domain, barrier, env, params: LearnerParams, stream, dual_check=None, logger=None) -> RunHistory:
    """MLSM variant for products of simplexes whose low-z exploration steps
    along a coordinate by 1/2 instead of by the Dikin radius."""
    _check_barrier(domain, barrier)
    return _run_blocks(
        "mlsm4ps", domain, _feedback_for(env), params, as_stream(stream),
        est.ps_propose, est.ps_ingest, dual_check, logger,
    )


def _check_barrier(domain, barrier):
    if barrier is not None and barrier.domain != domain:
        raise ContractError("barrier was built for a different domain")


RUNNERS = {"mlsm": run_bandit_mlsm, "drsm": run_bandit_drsm, "mlsm4ps": run_bandit_mlsm4ps}


def replay_iterates(domain: ProductSimplexDomain, history: RunHistory) -> np.ndarray:
    """Recompute the iterate sequence from the recorded estimates alone."""
    x = analytic_center(domain)
    acc = np.zeros(domain.dim)
    out = [x]
    for g in history.estimates:
        acc += g.gradient
        x = rftl_argmin(domain, acc, history.params.eta, warm_start=x)
        out.append(x)
    return np.array(out)


# ----------------------------------------------------------- estimator classes


class _BanditLearner(BaseEstimator):
    _algorithm = "mlsm"

    def __init__(self, eta="auto", block_length="auto", preset=None, eta_scale=1.0,
                 block_scale=1.0, random_state=0):
        self.eta = eta
        self.block_length = block_length
        self.preset = preset
        self.eta_scale = eta_scale
        self.block_scale = block_scale
        self.random_state = random_state

    def _resolve_params(self, domain: ProductSimplexDomain, T: int) -> LearnerParams:
        auto = default_params(
            self._algorithm, domain.dim, T, D=domain.diameter, preset=self.preset,
            eta_scale=self.eta_scale, block_scale=self.block_scale,
        )
        eta = auto.eta if self.eta == "auto" else float(self.eta)
        L = auto.block_length if self.block_length == "auto" else int(self.block_length)
        delta = auto.delta
        if self._algorithm == "drsm" and getattr(self, "delta", "auto") != "auto":
            delta = float(self.delta)
        return LearnerParams(
            eta=eta, block_length=L, delta=delta, raw_block_length=auto.raw_block_length,
            raw_delta=auto.raw_delta, preset=auto.preset,
        )

    def fit(self, env, domain: ProductSimplexDomain | None = None):
        """Play the full horizon of ``env``; the history lands in ``history_``."""
        domain = domain if domain is not None else env.domain
        feedback = _feedback_for(env)
        self.params_ = self._resolve_params(domain, int(feedback.horizon))
        stream = self.random_state if isinstance(self.random_state, RandomStream) else RandomStream(
            0 if self.random_state is None else int(self.random_state)
        )
        self.history_ = RUNNERS[self._algorithm](
            domain, ProductSimplexBarrier(domain), feedback, self.params_, stream
        )
        self.domain_ = domain
        return self

    def predict(self, X=None) -> np.ndarray:
        """The iterate the learner would play next."""
        if not hasattr(self, "history_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")
        return self.history_.iterates[-1].copy()


class BanditMLSM(_BanditLearner):
    _algorithm = "mlsm"


class BanditMLSM4PS(_BanditLearner):
    _algorithm = "mlsm4ps"


class BanditDRSM(_BanditLearner):
    _algorithm = "drsm"

    def __init__(self, eta="auto", block_length="auto", delta="auto", preset=None, eta_scale=1.0,
                 block_scale=1.0, random_state=0):
        super().__init__(eta=eta, block_length=block_length, preset=preset, eta_scale=eta_scale,
                         block_scale=block_scale, random_state=random_state)
        self.delta = delta
