"""Discrete-to-continuous reductions: partition matroids and ordered lists,
their extension mappings onto products of simplexes, and the wrapper that
runs the simplex learner on discrete bandit feedback."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import CapacityError, ContractError
from .geometry import ProductSimplexBarrier, ProductSimplexDomain
from .learners import LearnerParams, RunHistory, default_params, run_bandit_mlsm4ps
from .objectives import MultilinearPolynomial, SetFunction, mobius_transform
from .sampling import RandomStream

ENUMERATION_BUDGET = 10**6


# -------------------------------------------------------------- action spaces


@dataclass(frozen=True)
class PartitionMatroid:
    """Ground set {0..n-1} split into disjoint blocks with capacities r_k."""

    blocks: tuple[tuple[int, ...], ...]
    capacities: tuple[int, ...]

    def __post_init__(self):
        blocks = tuple(tuple(int(e) for e in b) for b in self.blocks)
        caps = tuple(int(r) for r in self.capacities)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "capacities", caps)
        if len(blocks) != len(caps) or not blocks:
            raise ContractError("need one capacity per block")
        if any(r < 1 for r in caps):
            raise ContractError("capacities must be >= 1")
        if any(not b for b in blocks):
            raise ContractError("blocks must be non-empty")
        elems = sorted(e for b in blocks for e in b)
        if elems != list(range(len(elems))):
            raise ContractError("blocks must be disjoint and cover 0..n-1")

    @classmethod
    def cardinality(cls, n: int, k: int) -> "PartitionMatroid":
        return cls((tuple(range(n)),), (k,))

    @property
    def ground_size(self) -> int:
        return sum(len(b) for b in self.blocks)

    def block_masks(self) -> list[int]:
        return [sum(1 << e for e in b) for b in self.blocks]

    def is_feasible(self, mask: int) -> bool:
        return all(bin(mask & bm).count("1") <= r for bm, r in zip(self.block_masks(), self.capacities))

    def enumerate_actions(self) -> np.ndarray:
        """Every feasible set as a bitmask."""
        n = self.ground_size
        if 2**n > ENUMERATION_BUDGET * 16:
            raise CapacityError(f"ground set of size {n} is too large to enumerate")
        masks = np.arange(2**n, dtype=np.int64)
        ok = np.ones(masks.size, dtype=bool)
        for bm, r in zip(self.block_masks(), self.capacities):
            sub = masks & bm
            cnt = np.zeros(masks.size, dtype=np.int64)
            for e in range(n):
                cnt += (sub >> e) & 1
            ok &= cnt <= r
        return masks[ok]


class SequentialObjective:
    """g(S) = sum_i lambda_i g_i({S_1..S_i}) over ordered lists of alphabet
    indices, where -1 denotes the dummy element.

    Position functions are SetFunctions over the alphabet. If they are given
    over the alphabet plus a dummy (``dummy`` = its index) the dummy is
    checked to have zero marginal gain everywhere and then projected out.
    """

    def __init__(self, weights, position_functions: Sequence[SetFunction], dummy: int | None = None):
        lam = np.asarray(weights, dtype=float)
        if lam.ndim != 1 or lam.size != len(position_functions):
            raise ContractError("need one weight per position function")
        if np.any(lam < 0):
            raise ContractError("position weights must be non-negative")
        funcs = list(position_functions)
        if dummy is not None:
            funcs = [_drop_dummy(g, dummy) for g in funcs]
        if len({g.n for g in funcs}) != 1:
            raise ContractError("position functions must share one alphabet")
        self.weights = lam
        self.functions = funcs
        self.positions = lam.size
        self.alphabet = funcs[0].n
        self._tables = np.stack([g.table for g in funcs])

    @property
    def bound(self) -> float:
        return float(self.weights @ self._tables.max(axis=1))

    def prefix_masks(self, lists) -> np.ndarray:
        L = np.atleast_2d(np.asarray(lists, dtype=np.int64))
        bits = np.where(L >= 0, np.left_shift(1, np.maximum(L, 0)), 0)
        return np.bitwise_or.accumulate(bits, axis=1)

    def values(self, lists) -> np.ndarray:
        P = self.prefix_masks(lists)
        vals = self._tables[np.arange(self.positions)[None, :], P]
        return vals @ self.weights

    def __call__(self, lst) -> float:
        return float(self.values(np.asarray(lst)[None])[0])


def _drop_dummy(g: SetFunction, dummy: int) -> SetFunction:
    masks = np.arange(2**g.n)
    without = masks[(masks >> dummy) & 1 == 0]
    if not np.allclose(g.table[without | (1 << dummy)], g.table[without], atol=1e-12, rtol=0):
        raise ContractError("the dummy element has non-zero marginal gain")
    # re-index the remaining elements
    low = without & ((1 << dummy) - 1)
    high = (without >> (dummy + 1)) << dummy
    table = np.empty(2 ** (g.n - 1))
    table[low | high] = g.table[without]
    return SetFunction(table, name=g.name)


@dataclass(frozen=True)
class OrderedListSpace:
    """Lists of length ``length`` over an alphabet of ``alphabet`` real
    elements plus the dummy. Classically ``length`` = alphabet + 1 = |G|."""

    alphabet: int
    length: int | None = None

    def __post_init__(self):
        if self.alphabet < 1:
            raise ContractError("alphabet must be non-empty")
        if self.length is None:
            object.__setattr__(self, "length", self.alphabet + 1)
        if self.length < 1:
            raise ContractError("list length must be >= 1")

    def enumerate_actions(self) -> np.ndarray:
        n = (self.alphabet + 1) ** self.length
        if n > ENUMERATION_BUDGET:
            raise CapacityError(f"{n} ordered lists exceed the budget")
        return np.array(list(product(range(-1, self.alphabet), repeat=self.length)), dtype=np.int64)


# ---------------------------------------------------------- extension mappings


class ExtensionMapping:
    """Map from a product of simplexes to distributions over discrete actions.

    Every simplex j draws one of its ``labels[j]`` (or nothing) with the
    probabilities given by its coordinates; subclasses turn the draws into an
    action. Outcome index k < len(labels[j]) means label k, the last index the
    null symbol.
    """

    domain: ProductSimplexDomain
    labels: list[np.ndarray]

    def _combine(self, draws: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def action_value(self, g, actions) -> np.ndarray:
        return g.values(actions)

    def _draw_indices(self, x, n: int, stream: RandomStream) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        U = stream.uniform((n, self.domain.n_blocks))
        out = np.empty((n, self.domain.n_blocks), dtype=np.int64)
        for j, sl in enumerate(self.domain.block_slices()):
            cums = np.cumsum(x[sl])
            out[:, j] = np.searchsorted(cums, U[:, j], side="right")
        return out

    def sample(self, x, stream: RandomStream):
        return self._combine(self._draw_indices(x, 1, stream))[0]

    def sample_many(self, x, n: int, stream: RandomStream) -> np.ndarray:
        return self._combine(self._draw_indices(x, n, stream))

    def outcome_count(self) -> int:
        return math.prod(k + 1 for k in self.domain.simplex_dims)

    def _enumerate(self, x):
        """All outcomes with their (polynomial) probabilities at x."""
        n = self.outcome_count()
        if n > ENUMERATION_BUDGET:
            raise CapacityError(f"{n} outcomes exceed the enumeration budget of {ENUMERATION_BUDGET}")
        x = np.asarray(x, dtype=float)
        X = np.atleast_2d(x)
        grids = [np.arange(k + 1) for k in self.domain.simplex_dims]
        mesh = np.meshgrid(*grids, indexing="ij")
        draws = np.stack([m.reshape(-1) for m in mesh], axis=1)
        probs = np.ones((X.shape[0], draws.shape[0]))
        for j, sl in enumerate(self.domain.block_slices()):
            xb = X[:, sl]
            p = np.concatenate([xb, 1.0 - xb.sum(axis=1, keepdims=True)], axis=1)
            probs *= p[:, draws[:, j]]
        return draws, probs

    def exact_extension(self, g, x):
        """E_{A ~ EXT(x)} g(A) by enumerating every outcome."""
        draws, probs = self._enumerate(x)
        vals = self.action_value(g, self._combine(draws))
        out = probs @ vals
        return float(out[0]) if np.ndim(x) == 1 else out

    def extension_polynomial(self, g) -> MultilinearPolynomial:
        """The exact extension as an explicit multilinear polynomial.

        The enumerated expectation is multilinear in x, so it is pinned down
        by its values at the 2^d cube corners (outside the domain the
        'probabilities' may be negative, which the identity tolerates)."""
        d = self.domain.dim
        if d > 20:
            raise CapacityError("too many coordinates for a dense polynomial")
        corners = ((np.arange(2**d)[:, None] >> np.arange(d)) & 1).astype(float)
        vals = self.exact_extension(g, corners)
        return MultilinearPolynomial(mobius_transform(vals), name="extension")

    def vertex_for(self, action) -> np.ndarray:
        raise NotImplementedError


class PartitionMatroidExtension(ExtensionMapping):
    """One simplex over G_k for each of the r_k slots of block k; the action
    is the union of the drawn elements."""

    def __init__(self, matroid: PartitionMatroid):
        self.matroid = matroid
        dims, labels, owner = [], [], []
        for k, (b, r) in enumerate(zip(matroid.blocks, matroid.capacities)):
            for _ in range(r):
                dims.append(len(b))
                labels.append(np.asarray(b, dtype=np.int64))
                owner.append(k)
        self.domain = ProductSimplexDomain(tuple(dims))
        self.labels = labels
        self.owner = owner
        self._bits = [np.append(np.left_shift(1, lab), 0) for lab in labels]

    def _combine(self, draws):
        mask = np.zeros(draws.shape[0], dtype=np.int64)
        for j, bits in enumerate(self._bits):
            mask |= bits[draws[:, j]]
        return mask

    @property
    def lipschitz_bound_factor(self) -> float:
        """sqrt(sum_k r_k |G_k|); the extension is M times this Lipschitz."""
        return math.sqrt(self.domain.dim)

    def vertex_for(self, action) -> np.ndarray:
        mask = int(action)
        if not self.matroid.is_feasible(mask):
            raise ContractError("set is not feasible")
        x = np.zeros(self.domain.dim)
        slots = [[j for j, o in enumerate(self.owner) if o == k] for k in range(len(self.matroid.blocks))]
        for k, b in enumerate(self.matroid.blocks):
            chosen = [e for e in b if mask >> e & 1]
            for j, e in zip(slots[k], chosen):
                pos = int(np.flatnonzero(self.labels[j] == e)[0])
                x[self.domain.offsets[j] + pos] = 1.0
        return x


class OrderedListExtension(ExtensionMapping):
    """Position i draws from its own simplex over the alphabet; leftover mass
    goes to the dummy."""

    def __init__(self, space: OrderedListSpace):
        self.space = space
        self.domain = ProductSimplexDomain((space.alphabet,) * space.length)
        self.labels = [np.arange(space.alphabet)] * space.length

    def _combine(self, draws):
        return np.where(draws >= self.space.alphabet, -1, draws)

    @property
    def lipschitz_bound_factor(self) -> float:
        return float(self.space.length)

    def vertex_for(self, action) -> np.ndarray:
        lst = np.asarray(action, dtype=np.int64)
        x = np.zeros(self.domain.dim)
        for i, a in enumerate(lst):
            if a >= 0:
                x[self.domain.offsets[i] + a] = 1.0
        return x


def ext_pm_domain(matroid: PartitionMatroid) -> ProductSimplexDomain:
    return PartitionMatroidExtension(matroid).domain


def ext_pm_sample(matroid: PartitionMatroid, x, stream: RandomStream) -> int:
    return int(PartitionMatroidExtension(matroid).sample(x, stream))


def ext_pm_exact_extension(matroid: PartitionMatroid, g: SetFunction, x) -> float:
    return PartitionMatroidExtension(matroid).exact_extension(g, x)


def ext_ss_domain(space: OrderedListSpace) -> ProductSimplexDomain:
    return OrderedListExtension(space).domain


def ext_ss_sample(space: OrderedListSpace, x, stream: RandomStream) -> np.ndarray:
    return OrderedListExtension(space).sample(x, stream)


def ext_ss_exact_extension(space: OrderedListSpace, g: SequentialObjective, x) -> float:
    return OrderedListExtension(space).exact_extension(g, x)


# ----------------------------------------------------------------- wrapper


class ExtensionFeedback:
    """Feeds the continuous learner the discrete reward of an action sampled
    from EXT(y); records the discrete actions as it goes."""

    def __init__(self, mapping: ExtensionMapping, env, stream: RandomStream):
        self.mapping = mapping
        self.env = env
        self.stream = stream
        self.horizon = env.horizon
        probe = mapping.sample(np.zeros(mapping.domain.dim), RandomStream(0))
        shape = (self.horizon,) + np.shape(probe)
        self.actions = np.zeros(shape, dtype=np.int64)

    def play(self, t: int, y) -> float:
        a = self.mapping.sample(y, self.stream)
        self.actions[t] = a
        return self.env.reward(t, a)

    def play_constant(self, t0: int, t1: int, y, skip: int | None = None) -> np.ndarray:
        # the whole block is drawn, including the exploration round, which is
        # overwritten by play(); this keeps stream consumption per block fixed
        acts = self.mapping.sample_many(y, t1 - t0, self.stream)
        self.actions[t0:t1] = acts
        return self.env.rewards(t0, t1, acts)

    def finish(self, history: RunHistory):
        history.discrete_actions = self.actions
        if getattr(self.env, "mean", None) is not None:
            history.mean_rewards = self.env.mean_rewards(self.actions)


def run_mlsm_wrapper(
    mapping: ExtensionMapping,
    barrier: ProductSimplexBarrier | None,
    discrete_env,
    params: LearnerParams,
    stream: RandomStream,
    dual_check=None,
) -> RunHistory:
    """Run the simplex learner with g_t(S_t), S_t ~ EXT(y_t), as feedback."""
    barrier = barrier or ProductSimplexBarrier(mapping.domain)
    feedback = ExtensionFeedback(mapping, discrete_env, stream.child(1))
    return run_bandit_mlsm4ps(mapping.domain, barrier, feedback, params, stream.child(0), dual_check=dual_check)


def random_feasible_baseline(env, constraint) -> float:
    """Expected total reward of a uniformly random feasible action each round
    (mean function in stochastic mode)."""
    actions = np.asarray(constraint.enumerate_actions())
    return float(env.average_values(actions).mean() * env.horizon)


class MLSMWrapper(BaseEstimator):
    """Estimator-style front end for :func:`run_mlsm_wrapper`."""

    def __init__(self, mapping=None, eta="auto", block_length="auto", preset=None, eta_scale=1.0,
                 block_scale=1.0, random_state=0):
        self.mapping = mapping
        self.eta = eta
        self.block_length = block_length
        self.preset = preset
        self.eta_scale = eta_scale
        self.block_scale = block_scale
        self.random_state = random_state

    def fit(self, env):
        if self.mapping is None:
            raise ContractError("MLSMWrapper needs an extension mapping")
        dom = self.mapping.domain
        auto = default_params("mlsm4ps", dom.dim, env.horizon, D=dom.diameter, preset=self.preset,
                              eta_scale=self.eta_scale, block_scale=self.block_scale)
        self.params_ = LearnerParams(
            eta=auto.eta if self.eta == "auto" else float(self.eta),
            block_length=auto.block_length if self.block_length == "auto" else int(self.block_length),
            raw_block_length=auto.raw_block_length, preset=auto.preset,
        )
        stream = self.random_state if isinstance(self.random_state, RandomStream) else RandomStream(
            int(self.random_state or 0)
        )
        self.history_ = run_mlsm_wrapper(self.mapping, None, env, self.params_, stream)
        return self

    def predict(self, X=None):
        if not hasattr(self, "history_"):
            raise NotFittedError("MLSMWrapper is not fitted yet")
        return self.history_.iterates[-1].copy()
