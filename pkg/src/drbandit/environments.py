"""Reward environments, offline benchmarks and alpha-regret accounting."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .errors import CapacityError, ConfigError, ContractError
from .geometry import ProductSimplexDomain
from .objectives import (
    MultilinearPolynomial,
    Objective,
    SetFunction,
    average_polynomial,
    verify_set_function,
)
from .sampling import RandomStream

ALPHA = 1.0 - math.exp(-1.0)
ENUMERATION_BUDGET = 10**6


class _AveragedObjective(Objective):
    def __init__(self, objectives, weights):
        self.objectives = list(objectives)
        self.weights = np.asarray(weights, dtype=float)
        self.dim = self.objectives[0].dim

    def value(self, x):
        return sum(w * np.asarray(f.value(x)) for w, f in zip(self.weights, self.objectives))

    def gradient(self, x):
        return sum(w * np.asarray(f.gradient(x)) for w, f in zip(self.weights, self.objectives))

    @property
    def lipschitz(self):
        return float(sum(w * f.lipschitz for w, f in zip(self.weights, self.objectives)))


class _Environment:
    """Shared plumbing: a list of reward objects and the round -> index map."""

    mode = ""

    def __init__(self, objectives: Sequence, sequence, name: str = "", is_stochastic: bool = False):
        seq = np.asarray(sequence, dtype=np.int64)
        if seq.ndim != 1 or seq.size < 1:
            raise ContractError("the round sequence must be a non-empty 1-d array")
        if seq.min() < 0 or seq.max() >= len(objectives):
            raise ContractError("round sequence refers to a missing function")
        self.objectives = list(objectives)
        self.sequence = seq
        self.sequence.setflags(write=False)
        self.name = name
        self.is_stochastic = is_stochastic

    @property
    def horizon(self) -> int:
        return int(self.sequence.size)

    def function_at(self, t: int):
        return self.objectives[int(self.sequence[t])]

    def weights(self) -> np.ndarray:
        """Fraction of rounds that use each function."""
        return np.bincount(self.sequence, minlength=len(self.objectives)) / self.horizon


class ContinuousEnvironment(_Environment):
    mode = "continuous"

    def __init__(self, objectives: Sequence[Objective], sequence, domain: ProductSimplexDomain, name=""):
        super().__init__(objectives, sequence, name)
        dims = {f.dim for f in self.objectives}
        if dims != {domain.dim}:
            raise ContractError(f"objective dimensions {dims} do not match the domain ({domain.dim})")
        self.domain = domain

    def reward(self, t: int, y) -> float:
        return float(self.function_at(t).value(np.asarray(y, dtype=float)))

    def rewards_constant(self, t0: int, t1: int, y) -> np.ndarray:
        idx = self.sequence[t0:t1]
        vals = np.zeros(len(self.objectives))
        for k in np.unique(idx):
            vals[k] = float(self.objectives[k].value(y))
        return vals[idx]

    def average_objective(self) -> Objective:
        w = self.weights()
        if all(isinstance(f, MultilinearPolynomial) for f in self.objectives):
            return average_polynomial(self.objectives, w)
        return _AveragedObjective(self.objectives, w)

    @property
    def bound(self) -> float:
        return max(f.bound for f in self.objectives)

    @property
    def lipschitz(self) -> float:
        return max(f.lipschitz for f in self.objectives)


class DiscreteEnvironment(_Environment):
    """Rounds take discrete actions. Objects in ``objectives`` expose
    ``values(actions)`` (SetFunction over bitmasks or SequentialObjective over
    position arrays). ``mean`` is the expected function in stochastic mode."""

    mode = "discrete"

    def __init__(self, objectives, sequence, name="", mean=None):
        super().__init__(objectives, sequence, name, is_stochastic=mean is not None)
        self.mean = mean

    def reward(self, t: int, action) -> float:
        return float(self.function_at(t).values(np.asarray(action)[None])[0])

    def rewards(self, t0: int, t1: int, actions) -> np.ndarray:
        actions = np.asarray(actions)
        idx = self.sequence[t0:t1]
        out = np.empty(idx.size)
        for k in np.unique(idx):
            sel = idx == k
            out[sel] = self.objectives[k].values(actions[sel])
        return out

    def mean_rewards(self, actions) -> np.ndarray:
        if self.mean is None:
            raise ContractError("only stochastic environments carry a mean function")
        return self.mean.values(np.asarray(actions))

    @property
    def bound(self) -> float:
        return max(g.bound for g in self.objectives)

    def average_values(self, actions) -> np.ndarray:
        """Time-averaged reward of each action (mean function when stochastic)."""
        if self.mean is not None:
            return self.mean.values(actions)
        w = self.weights()
        return sum(w[k] * self.objectives[k].values(actions) for k in np.flatnonzero(w))


GENERATORS = ("constant", "rotation", "phased")


def make_oblivious_sequence(spec: dict) -> _Environment:
    """Build an oblivious environment.

    ``spec`` keys: ``generator`` (constant | rotation | phased), ``functions``
    (built objectives), ``horizon``, ``switch_at`` (phased only: rounds at
    which the next function takes over), ``domain`` (continuous mode).
    """
    gen = spec.get("generator")
    funcs = list(spec.get("functions") or [])
    T = int(spec.get("horizon", 0))
    if gen not in GENERATORS:
        raise ConfigError(f"unknown generator {gen!r}; choose from {GENERATORS}")
    if not funcs:
        raise ConfigError("an environment needs at least one function")
    if T < 1:
        raise ConfigError("horizon must be >= 1")
    if gen == "constant":
        if len(funcs) != 1:
            raise ConfigError("the constant generator takes exactly one function")
        seq = np.zeros(T, dtype=np.int64)
    elif gen == "rotation":
        seq = np.arange(T) % len(funcs)
    else:
        switches = sorted(int(s) for s in spec.get("switch_at", []))
        if len(switches) != len(funcs) - 1:
            raise ConfigError("phased needs one switch round per function after the first")
        seq = np.searchsorted(np.asarray(switches), np.arange(T), side="right")
    name = spec.get("name", gen)
    if all(isinstance(f, SetFunction) or hasattr(f, "positions") for f in funcs):
        return DiscreteEnvironment(funcs, seq, name=name)
    domain = spec.get("domain")
    if domain is None:
        raise ConfigError("continuous environments need a domain")
    return ContinuousEnvironment(funcs, seq, domain, name=name)


def make_stochastic_env(distribution_spec: dict, stream: RandomStream) -> DiscreteEnvironment:
    """I.i.d. draws from a finite mixture of set functions, fixed at construction.

    ``distribution_spec``: ``functions`` (SetFunction list), ``probs``, ``horizon``.
    """
    funcs = list(distribution_spec.get("functions") or [])
    probs = np.asarray(distribution_spec.get("probs", [1.0 / max(len(funcs), 1)] * len(funcs)), float)
    T = int(distribution_spec.get("horizon", 0))
    if not funcs or probs.size != len(funcs):
        raise ConfigError("need one probability per function")
    if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ConfigError("probabilities must be non-negative and sum to 1")
    if T < 1:
        raise ConfigError("horizon must be >= 1")
    if len({g.n for g in funcs}) != 1:
        raise ConfigError("all functions must share one ground set")
    mean = SetFunction(probs @ np.stack([g.table for g in funcs]), name="mean")
    rep = verify_set_function(mean)
    if not rep.passed:
        raise ConfigError(f"mean function is not monotone submodular: {rep.violations[:3]}")
    seq = stream.generator.choice(len(funcs), size=T, p=probs)
    return DiscreteEnvironment(funcs, seq, name=distribution_spec.get("name", "stochastic"), mean=mean)


# ----------------------------------------------------------------- benchmarks


@dataclass
class OfflineOptimum:
    action: object
    total: float
    per_round: np.ndarray
    method: str
    certification_gap: float = 0.0

    @property
    def value(self) -> float:
        """Average per-round benchmark value."""
        return self.total / self.per_round.size


def offline_optimum_discrete(env: DiscreteEnvironment, constraint) -> OfflineOptimum:
    """Brute-force maximiser of sum_t g_t(S) (T * mean(S) when stochastic).

    ``constraint`` must expose ``enumerate_actions()``.
    """
    actions = np.asarray(constraint.enumerate_actions())
    if len(actions) > ENUMERATION_BUDGET:
        raise CapacityError(f"{len(actions)} feasible actions exceed the budget")
    avg = env.average_values(actions)
    best = int(np.argmax(avg))
    a = actions[best]
    if env.mean is not None:
        per = np.full(env.horizon, float(env.mean.values(a[None])[0]))
    else:
        vals = np.array([float(g.values(a[None])[0]) for g in env.objectives])
        per = vals[env.sequence]
    return OfflineOptimum(action=a, total=float(per.sum()), per_round=per, method="enumeration")


def project_product_simplex(domain: ProductSimplexDomain, X: np.ndarray) -> np.ndarray:
    """Euclidean projection of rows of X onto the domain."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty_like(X)
    for sl in domain.block_slices():
        B = X[:, sl]
        C = np.maximum(B, 0.0)
        over = C.sum(axis=1) > 1.0
        if np.any(over):
            V = B[over]
            U = -np.sort(-V, axis=1)
            css = np.cumsum(U, axis=1) - 1.0
            k = np.arange(1, V.shape[1] + 1)
            cond = U - css / k > 0
            rho = V.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
            theta = css[np.arange(V.shape[0]), rho] / (rho + 1)
            C[over] = np.maximum(V - theta[:, None], 0.0)
        out[:, sl] = C
    return out


def _simplex_grid(k: int, steps: int) -> np.ndarray:
    """All points of the k-dim simplex {x >= 0, sum <= 1} with coordinates in
    multiples of 1/steps."""
    pts = [c for c in product(range(steps + 1), repeat=k) if sum(c) <= steps]
    return np.asarray(pts, dtype=float) / steps


def domain_grid(domain: ProductSimplexDomain, spacing: float, max_points: int = 2_000_000):
    steps = int(round(1.0 / spacing))
    sizes = [math.comb(steps + k, k) for k in domain.simplex_dims]
    if math.prod(sizes) > max_points:
        return None
    grids = [_simplex_grid(k, steps) for k in domain.simplex_dims]
    mesh = np.meshgrid(*[np.arange(len(g)) for g in grids], indexing="ij")
    idx = [m.reshape(-1) for m in mesh]
    return np.concatenate([g[i] for g, i in zip(grids, idx)], axis=1)


def offline_optimum_continuous(
    env: ContinuousEnvironment,
    domain: ProductSimplexDomain | None = None,
    n_starts: int = 200,
    n_steps: int = 2000,
    grid_spacing: float = 0.05,
    seed: int = 0,
) -> OfflineOptimum:
    """Best fixed point for the time-averaged objective: projected gradient
    ascent from many starts, cross-checked on a grid; the better answer wins.
    ``certification_gap`` is the ascent value minus the grid value."""
    domain = domain or env.domain
    fbar = env.average_objective()
    rng = np.random.default_rng(seed)
    X = domain.sample_interior(rng, n_starts)
    X[0] = 0.0
    lip = max(float(getattr(fbar, "lipschitz", 1.0)), 1e-12)
    step = 0.5 / lip
    for it in range(n_steps):
        G = np.asarray(fbar.gradient(X))
        X = project_product_simplex(domain, X + step * G)
    vals = np.asarray(fbar.value(X))
    best = int(np.argmax(vals))
    x_best, v_best = X[best], float(vals[best])
    method = "projected-ascent"
    gap = float("nan")
    grid = domain_grid(domain, grid_spacing) if domain.dim <= 6 else None
    if grid is not None:
        gv = np.concatenate([np.asarray(fbar.value(c)) for c in np.array_split(grid, max(1, len(grid) // 50_000))])
        g_best = int(np.argmax(gv))
        gap = v_best - float(gv[g_best])
        if gv[g_best] > v_best:
            x_best, v_best = grid[g_best], float(gv[g_best])
            method = "grid"
    vals_k = np.array([float(f.value(x_best)) for f in env.objectives])
    per = vals_k[env.sequence]
    return OfflineOptimum(
        action=x_best, total=float(per.sum()), per_round=per, method=method, certification_gap=gap
    )


# -------------------------------------------------------------------- regret


@dataclass
class RegretTrace:
    rewards: np.ndarray
    cum_rewards: np.ndarray
    per_round: np.ndarray
    cumulative: np.ndarray
    alpha: float
    method: str = ""
    certification_gap: float = 0.0

    @property
    def final(self) -> float:
        return float(self.cumulative[-1])


def compute_alpha_regret(history, optimum: OfflineOptimum, alpha: float = ALPHA) -> RegretTrace:
    """alpha * benchmark - reward per round, scored on mean rewards when the
    environment is stochastic."""
    rewards = history.mean_rewards if getattr(history, "mean_rewards", None) is not None else history.rewards
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size != optimum.per_round.size:
        raise ContractError(
            f"history has {rewards.size} rounds but the benchmark has {optimum.per_round.size}"
        )
    per = alpha * optimum.per_round - rewards
    return RegretTrace(
        rewards=rewards,
        cum_rewards=np.cumsum(rewards),
        per_round=per,
        cumulative=np.cumsum(per),
        alpha=alpha,
        method=optimum.method,
        certification_gap=optimum.certification_gap,
    )
