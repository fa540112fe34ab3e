import math

import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from drbandit import estimators as est
from drbandit.environments import make_oblivious_sequence
from drbandit.errors import ContractError
from drbandit.geometry import ProductSimplexBarrier, analytic_center, make_domain
from drbandit.learners import (
    RUNNERS,
    BanditDRSM,
    BanditMLSM,
    BanditMLSM4PS,
    BlockSchedule,
    LearnerParams,
    default_params,
    replay_iterates,
)
from drbandit.objectives import LinearObjective, probabilistic_coverage
from drbandit.sampling import RandomStream, z_cdf

TRI = make_domain((2,))


def linear_env(T, dom=TRI, w=(1.0, 0.0)):
    return make_oblivious_sequence(
        {"generator": "constant", "functions": [LinearObjective(w)], "horizon": T, "domain": dom}
    )


def run(alg, env, params, seed=0, dom=TRI):
    return RUNNERS[alg](dom, ProductSimplexBarrier(dom), env, params, RandomStream(seed))


# ------------------------------------------------------------- parameters


def test_default_params_mlsm_small():
    p = default_params("mlsm", 2, 1000)
    assert p.raw_block_length == pytest.approx(2 ** (-4 / 3) * 10, rel=1e-12)
    assert p.raw_block_length == pytest.approx(3.969, abs=1e-3)
    assert p.block_length == 4
    assert p.eta == pytest.approx(2 ** (-8 / 3) * 1000 ** (-1 / 3))


def test_default_params_degenerate_block():
    p = default_params("mlsm", 10, 100)
    assert p.raw_block_length < 1
    assert p.block_length == 1


@pytest.mark.parametrize("alg", ["mlsm", "drsm", "mlsm4ps"])
@pytest.mark.parametrize("d, T", [(1, 1), (1, 10**6), (50, 3), (7, 12345)])
def test_default_params_clamps(alg, d, T):
    p = default_params(alg, d, T)
    assert p.block_length >= 1
    if p.delta is not None:
        assert 0 < p.delta <= 1


def test_theorem_preset_is_selectable():
    p = default_params("mlsm", 2, 1000, preset="stated")
    assert p.eta == pytest.approx(2.0**-4 * 1000 ** (-2 / 3))
    assert p.raw_block_length == pytest.approx(2.0**-2 * 10)


def test_default_params_rejects_bad_inputs():
    with pytest.raises(ContractError):
        default_params("nope", 2, 10)
    with pytest.raises(ContractError):
        default_params("mlsm", 0, 10)
    with pytest.raises(ContractError):
        default_params("mlsm", 2, 10, preset="bogus")
    with pytest.raises(ContractError):
        LearnerParams(eta=0.1, block_length=0)


# --------------------------------------------------------------- schedule


def test_block_schedule_partial_tail():
    s = BlockSchedule(10, 4)
    assert (s.n_blocks, s.n_full_blocks) == (3, 2)
    assert s.bounds(2) == (8, 10) and not s.is_full(2)


@pytest.mark.parametrize("alg", ["mlsm", "drsm", "mlsm4ps"])
def test_single_block_explores_once(alg):
    T = 16
    p = LearnerParams(eta=0.1, block_length=T, delta=0.5 if alg == "drsm" else None)
    h = run(alg, linear_env(T), p, seed=1)
    assert h.exploration.sum() == 1
    acts = h.actions()
    others = acts[~h.exploration]
    np.testing.assert_allclose(others, np.tile(analytic_center(TRI), (T - 1, 1)))


@pytest.mark.parametrize("alg", ["mlsm", "drsm", "mlsm4ps"])
def test_exploration_count_is_full_blocks(alg):
    T, L = 103, 10
    p = LearnerParams(eta=0.05, block_length=L, delta=0.5 if alg == "drsm" else None)
    h = run(alg, linear_env(T), p, seed=2)
    assert h.exploration.sum() == T // L
    assert not h.exploration[(T // L) * L:].any()
    assert np.all(TRI.contains(h.actions(), tol=1e-9))


def test_drsm_interval_exploration_in_unit_interval():
    dom = make_domain((1,))
    p = LearnerParams(eta=0.05, block_length=4, delta=1.0)
    h = run("drsm", linear_env(400, dom, (1.0,)), p, seed=3, dom=dom)
    a = h.exploration_actions[:, 0]
    assert np.all((a >= 0) & (a <= 1))


def test_actions_feasible_on_product():
    dom = make_domain((3, 2))
    f = probabilistic_coverage([[0.5, 0.1, 0.2, 0.3, 0.1], [0.1, 0.4, 0.1, 0.2, 0.6]], [1.0, 1.0])
    env = make_oblivious_sequence({"generator": "constant", "functions": [f], "horizon": 600, "domain": dom})
    for alg in ("mlsm", "drsm", "mlsm4ps"):
        p = default_params(alg, dom.dim, 600)
        h = run(alg, env, p, seed=4, dom=dom)
        assert np.all(dom.contains(h.actions(), tol=1e-9))


def test_ps_branch_statistics():
    T = 10_000
    p = LearnerParams(eta=1e-4, block_length=1)
    h = run("mlsm4ps", linear_env(T), p, seed=5)
    low = np.array([g.trace.variant == est.PS_LOW for g in h.estimates])
    assert low.size == T
    prob = z_cdf(0.5)
    assert abs(low.mean() - prob) <= 3 * math.sqrt(prob * (1 - prob) / T)


# ------------------------------------------------------ determinism, replay


@pytest.mark.parametrize("alg", ["mlsm", "drsm", "mlsm4ps"])
def test_determinism(alg):
    p = default_params(alg, 2, 500)
    a = run(alg, linear_env(500), p, seed=9)
    b = run(alg, linear_env(500), p, seed=9)
    np.testing.assert_array_equal(a.rewards, b.rewards)
    np.testing.assert_array_equal(a.iterates, b.iterates)
    c = run(alg, linear_env(500), p, seed=10)
    assert not np.array_equal(a.rewards, c.rewards)


@pytest.mark.parametrize("alg", ["mlsm", "drsm", "mlsm4ps"])
def test_replay_reproduces_iterates(alg):
    p = default_params(alg, 2, 800)
    h = run(alg, linear_env(800), p, seed=11)
    np.testing.assert_array_equal(replay_iterates(TRI, h)[: len(h.estimates) + 1], h.iterates[: len(h.estimates) + 1])


# ---------------------------------------------------------- estimator API


def test_estimator_api():
    m = BanditMLSM(block_length=5)
    assert m.get_params()["block_length"] == 5
    with pytest.raises(NotFittedError):
        m.predict()
    m.fit(linear_env(200))
    assert TRI.is_interior(m.predict())
    assert m.params_.block_length == 5
    d = BanditDRSM(delta=0.3).fit(linear_env(200))
    assert d.params_.delta == 0.3
    ps = BanditMLSM4PS(random_state=3).set_params(eta=0.2).fit(linear_env(200))
    assert ps.params_.eta == 0.2


# ----------------------------------------------------- linear reward floors

FLOOR_SEEDS = range(5)


def final_quartile_mean(alg, T=100_000):
    means = []
    for s in FLOOR_SEEDS:
        p = default_params(alg, 2, T)
        h = run(alg, linear_env(T), p, seed=s)
        means.append(h.rewards[3 * T // 4:].mean())
    return float(np.mean(means))


@pytest.mark.slow
def test_mlsm_linear_floor():
    assert final_quartile_mean("mlsm") >= 0.80


@pytest.mark.slow
def test_drsm_linear_floor():
    assert final_quartile_mean("drsm") >= 0.75


@pytest.mark.slow
def test_mlsm4ps_linear_floor():
    assert final_quartile_mean("mlsm4ps") >= 0.80
