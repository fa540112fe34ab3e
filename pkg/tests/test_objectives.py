import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drbandit.errors import ContractError
from drbandit.geometry import make_domain
from drbandit.objectives import (
    AuxiliaryFunction,
    LinearObjective,
    MultilinearPolynomial,
    SaturatingObjective,
    SetFunction,
    aux_gradient,
    aux_value,
    average_polynomial,
    concave_over_modular,
    coverage_function,
    facility_location,
    mask_members,
    mixture,
    mobius_transform,
    modular_function,
    multilinear_extension_build,
    multilinear_gradient,
    probabilistic_coverage,
    random_library_instance,
    to_mask,
    verify_monotone_dr,
    verify_set_function,
)

ALPHA = 1 - math.exp(-1)
CUBE2 = make_domain((1, 1))


def brute_extension(g: SetFunction, x):
    """sum_S g(S) prod_{i in S} x_i prod_{i not in S} (1 - x_i), term by term."""
    total = 0.0
    for m in range(2**g.n):
        p = 1.0
        for i in range(g.n):
            p *= x[i] if (m >> i) & 1 else 1 - x[i]
        total += g.table[m] * p
    return total


def moment(k: int) -> float:
    """int_0^1 e^{z-1} z^k dz via m_0 = 1 - 1/e, m_k = 1 - k m_{k-1}."""
    m = 1 - math.exp(-1)
    for j in range(1, k + 1):
        m = 1 - j * m
    return m


def closed_form_aux(poly: MultilinearPolynomial, x) -> float:
    # term c_S prod x_S contributes c_S prod x_S int e^{z-1} z^{|S|-1} dz
    return sum(c * np.prod([x[i] for i in S]) * moment(len(S) - 1) for S, c in poly.terms().items())


# ------------------------------------------------------------ set functions


def test_mask_round_trip():
    assert to_mask({0, 2}) == 5
    assert mask_members(5) == (0, 2)


def test_set_function_contract():
    with pytest.raises(ContractError):
        SetFunction([1.0, 1.0])
    with pytest.raises(ContractError):
        SetFunction([0.0, -1.0])
    with pytest.raises(ValueError):
        SetFunction([0.0, 1.0, 2.0])


def test_set_function_call_and_bound():
    g = coverage_function([[0, 1], [1], [2]])
    assert g({0}) == 2 and g({1, 2}) == 2 and g({0, 1, 2}) == 3
    assert g.bound == 3


@pytest.mark.parametrize(
    "g",
    [
        modular_function([1.0, 2.0, 0.5]),
        coverage_function([[0, 1], [1, 2], [3]], [1, 2, 3, 4]),
        concave_over_modular([1.0, 2.0, 3.0], "sqrt"),
        concave_over_modular([1.0, 2.0, 3.0], "log1p"),
        concave_over_modular([1.0, 2.0, 3.0], "saturate"),
        facility_location([[0.2, 0.9], [0.5, 0.1], [0.3, 0.3]]),
    ],
)
def test_shipped_set_functions_are_monotone_submodular(g):
    assert verify_set_function(g).passed


def test_supermodular_set_function_is_flagged():
    g = SetFunction([0.0, 0.0, 0.0, 1.0])  # 1 iff both elements present
    rep = verify_set_function(g)
    assert rep.monotone and not rep.submodular
    assert rep.violations[0][0] == "submodular"


def test_mixture_is_convex_combination():
    a, b = modular_function([1, 0, 2]), coverage_function([[0], [0, 1], [2]])
    m = mixture([a, b], [0.25, 0.75])
    np.testing.assert_allclose(m.table, 0.25 * a.table + 0.75 * b.table)
    assert verify_set_function(m).passed


# --------------------------------------------------------------- extensions


def test_extension_of_indicator():
    f = multilinear_extension_build(SetFunction([0.0, 1.0, 0.0, 1.0]))
    assert f.terms() == {(0,): 1.0}


def test_extension_of_cardinality():
    f = multilinear_extension_build(modular_function([1.0, 1.0]))
    assert f.terms() == {(0,): 1.0, (1,): 1.0}


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_mobius_matches_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    table = np.concatenate([[0.0], rng.uniform(0, 5, 2**n - 1)])
    g = SetFunction(table)
    f = multilinear_extension_build(g)
    for x in rng.uniform(0, 1, (5, n)):
        assert f.value(x) == pytest.approx(brute_extension(g, x), abs=1e-10)
    corners = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(float)
    np.testing.assert_allclose(f.value(corners), table, atol=1e-10)


def test_mobius_of_corner_values_is_inverse_zeta():
    c = np.array([0.0, 1.0, 2.0, -0.5])
    f = MultilinearPolynomial(c)
    corners = ((np.arange(4)[:, None] >> np.arange(2)) & 1).astype(float)
    np.testing.assert_allclose(mobius_transform(f.value(corners)), c, atol=1e-12)


def test_product_value_and_gradient():
    f = MultilinearPolynomial.from_terms(2, {(0, 1): 1.0})
    assert f.value([0.5, 0.5]) == pytest.approx(0.25)
    np.testing.assert_allclose(multilinear_gradient(f, [0.5, 0.5]), [0.5, 0.5])


def test_gradient_secant_is_exact_for_any_pair():
    f = multilinear_extension_build(coverage_function([[0, 1], [1, 2], [0, 2]]))
    x = np.array([0.3, 0.6, 0.2])
    for i in range(3):
        lo, hi = x.copy(), x.copy()
        lo[i], hi[i] = 0.1, 0.9
        sec = (f.value(hi) - f.value(lo)) / 0.8
        assert sec == pytest.approx(f.gradient(x)[i], abs=1e-14)


def test_coverage_gradient_vs_finite_differences():
    f = multilinear_extension_build(coverage_function([[0, 1], [1, 2], [0, 2]], [1.0, 2.0, 0.5]))
    rng = np.random.default_rng(2)
    h = 1e-5
    for x in rng.uniform(0.1, 0.9, (10, 3)):
        fd = [(f.value(x + h * e) - f.value(x - h * e)) / (2 * h) for e in np.eye(3)]
        np.testing.assert_allclose(f.gradient(x), fd, atol=1e-10)


def test_batched_value_matches_single():
    f = probabilistic_coverage([[0.5, 0.2, 0.9], [0.1, 0.7, 0.3]], [1.0, 2.0])
    X = np.random.default_rng(0).uniform(0, 1, (7, 3))
    np.testing.assert_allclose(f.value(X), [f.value(x) for x in X])
    np.testing.assert_allclose(f.gradient(X), [f.gradient(x) for x in X])


def test_probabilistic_coverage_formula():
    P = np.array([[0.5, 0.2], [0.1, 0.7]])
    w = np.array([1.0, 2.0])
    f = probabilistic_coverage(P, w)
    x = np.array([0.4, 0.8])
    direct = sum(w[k] * (1 - np.prod(1 - P[k] * x)) for k in range(2))
    assert f.value(x) == pytest.approx(direct, abs=1e-14)


def test_lipschitz_of_polynomial():
    f = MultilinearPolynomial.from_terms(2, {(0,): 1.0, (1,): 1.0, (0, 1): -1.0})
    # gradient (1 - x2, 1 - x1) is largest at the origin
    assert f.lipschitz == pytest.approx(math.sqrt(2))
    assert f.bound == pytest.approx(1.0)


def test_polynomial_arithmetic():
    a = LinearObjective([1.0, 2.0])
    b = MultilinearPolynomial.from_terms(2, {(0, 1): -1.0})
    s = a + b * 0.5
    assert s.terms() == {(0,): 1.0, (1,): 2.0, (0, 1): -0.5}
    avg = average_polynomial([a, b])
    np.testing.assert_allclose(avg.coefficients, (a.coefficients + b.coefficients) / 2)


# ------------------------------------------------------------ saturating


def test_saturating_derivatives():
    f = SaturatingObjective([[1.0, 0.5, 0.0], [0.0, 0.5, 1.0]], [1.0, 0.5])
    x = np.array([0.2, 0.3, 0.1])
    h = 1e-6
    fd_g = [(f.value(x + h * e) - f.value(x - h * e)) / (2 * h) for e in np.eye(3)]
    np.testing.assert_allclose(f.gradient(x), fd_g, atol=1e-8)
    fd_H = np.array([(f.gradient(x + h * e) - f.gradient(x - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(f.hessian(x), fd_H, atol=1e-7)
    assert np.all(f.hessian(x) <= 1e-15)
    assert f.lipschitz == pytest.approx(np.linalg.norm([1.0, 0.75, 0.5]))
    assert f.smoothness == pytest.approx(np.linalg.norm(f.hessian(np.zeros(3)), 2))


def test_saturating_rejects_negative_weights():
    with pytest.raises(ContractError):
        SaturatingObjective([[1.0, -0.1]])


# ------------------------------------------------------------- auxiliary


def test_moments_recursion():
    # independent check of the recursion by direct quadrature
    from scipy.integrate import quad

    for k in range(6):
        assert moment(k) == pytest.approx(quad(lambda z: math.exp(z - 1) * z**k, 0, 1)[0], abs=1e-12)


def test_aux_of_linear():
    w = np.array([0.3, 1.2, 0.7])
    F = AuxiliaryFunction(LinearObjective(w))
    x = np.array([0.2, 0.5, 0.1])
    assert aux_value(F, x) == pytest.approx(ALPHA * w @ x, abs=1e-10)
    np.testing.assert_allclose(aux_gradient(F, x), ALPHA * w, atol=1e-10)
    assert aux_value(F, np.zeros(3)) == 0.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_aux_matches_closed_form_moments(seed):
    rng = np.random.default_rng(seed)
    f = random_library_instance(rng)
    F = AuxiliaryFunction(f)
    x = rng.uniform(0, 1, f.dim)
    assert F.value(x) == pytest.approx(closed_form_aux(f, x), abs=1e-10)
    # gradient: term c_S prod x_S differentiates to c_S prod x_{S-i} with moment m_{|S|-1}
    g = np.zeros(f.dim)
    for S, c in f.terms().items():
        for i in S:
            g[i] += c * np.prod([x[j] for j in S if j != i]) * moment(len(S) - 1)
    np.testing.assert_allclose(F.gradient(x), g, atol=1e-10)


def test_aux_rejects_nonzero_origin():
    f = MultilinearPolynomial.from_terms(1, {(): 1.0, (0,): 1.0})
    with pytest.raises(ContractError):
        AuxiliaryFunction(f)


def test_aux_integrand_limit():
    f = LinearObjective([2.0])
    F = AuxiliaryFunction(f)
    assert F.integrand(0.0, [0.5]) == pytest.approx(math.exp(-1) * 1.0)
    assert F.integrand(1e-9, [0.5]) == pytest.approx(F.integrand(0.0, [0.5]), rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_aux_inequality_on_library(seed):
    rng = np.random.default_rng(seed)
    f = random_library_instance(rng)
    F = AuxiliaryFunction(f)
    x, y = rng.uniform(0, 1, (2, f.dim))
    assert (y - x) @ F.gradient(x) >= ALPHA * f.value(y) - f.value(x) - 1e-8


# ------------------------------------------------------------ DR verifier


def test_dr_verifier_accepts_cover():
    f = MultilinearPolynomial.from_terms(2, {(0,): 1.0, (1,): 1.0, (0, 1): -1.0})
    rep = verify_monotone_dr(f, CUBE2, 200, 0)
    assert rep.passed and not rep.violations
    # the raised-corner difference is (1 - x1)(1 - x2) times the mixed partial -1
    assert -1.0 <= rep.max_mixed_difference < 0.0


def test_dr_verifier_rejects_product_with_witness():
    f = MultilinearPolynomial.from_terms(2, {(0, 1): 1.0})
    rep = verify_monotone_dr(f, CUBE2, 20, 0)
    assert not rep.passed
    kind, x, i, j, amount = rep.violations[0]
    assert kind == "mixed" and (i, j) == (0, 1)
    assert amount == pytest.approx((1 - x[0]) * (1 - x[1]))


def test_dr_verifier_zero_function():
    assert verify_monotone_dr(MultilinearPolynomial(np.zeros(4)), CUBE2, 10, 0).passed


def test_dr_verifier_flags_decreasing():
    f = MultilinearPolynomial.from_terms(2, {(0,): -1.0})
    rep = verify_monotone_dr(f, CUBE2, 10, 0)
    assert not rep.passed and rep.violations[0][0] == "partial"


def test_dr_verifier_on_saturating():
    f = SaturatingObjective([[1.0, 0.5, 0.0], [0.0, 0.5, 1.0]])
    assert verify_monotone_dr(f, make_domain((3,)), 100, 1, tol=1e-12).passed


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 5))
def test_average_of_dr_polynomials_is_dr(seed, k):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 5))
    polys = [random_library_instance(rng, d) for _ in range(k)]
    w = rng.dirichlet(np.ones(k))
    avg = average_polynomial(polys, w)
    assert verify_monotone_dr(avg, make_domain((1,) * d), 50, rng).passed


def test_library_is_monotone_dr():
    rng = np.random.default_rng(0)
    for _ in range(50):
        f = random_library_instance(rng)
        assert abs(f.value(np.zeros(f.dim))) <= 1e-12
        assert verify_monotone_dr(f, make_domain((1,) * f.dim), 30, rng).passed


def test_extension_preserves_corner_values_all_sets():
    g = facility_location([[0.2, 0.9], [0.5, 0.1], [0.3, 0.3]])
    f = multilinear_extension_build(g)
    for S in itertools.chain.from_iterable(itertools.combinations(range(3), r) for r in range(4)):
        x = np.zeros(3)
        x[list(S)] = 1
        assert f.value(x) == pytest.approx(g(S))
