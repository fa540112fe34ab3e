"""Property suites behind ``drbandit verify``.

Each suite returns a list of :class:`Check` records carrying the measured
statistic, so the command line can print one line per property.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import estimators as est
from .geometry import (
    ProductSimplexBarrier,
    make_domain,
    random_unit_vectors,
    rftl_argmin,
)
from .objectives import (
    AuxiliaryFunction,
    MultilinearPolynomial,
    coverage_function,
    facility_location,
    smoothed_aux_gradient,
    verify_monotone_dr,
)
from .reductions import (
    OrderedListExtension,
    OrderedListSpace,
    PartitionMatroid,
    PartitionMatroidExtension,
    SequentialObjective,
)
from .sampling import (
    Z_MEAN,
    RandomStream,
    sample_exploration_index,
    sample_unit_ball,
    sample_unit_sphere,
    sample_z,
    z_cdf,
)


@dataclass
class Check:
    name: str
    passed: bool
    statistic: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.statistic}"


# ----------------------------------------------------------------- barrier


def finite_difference_errors(domain, points, step: float = 1e-6) -> tuple[float, float]:
    """Max relative error of the analytic gradient and Hessian against central
    differences (relative to the largest entry of each point's result)."""
    bar = ProductSimplexBarrier(domain)
    d = domain.dim
    g_err = h_err = 0.0
    eye = np.eye(d)
    for x in points:
        h = step * min(1.0, float(x.min()), float((1.0 - domain.block_sums(x)).min()))
        g = bar.gradient(x)
        H = bar.hessian(x)
        fd_g = np.array([(bar.value(x + h * e) - bar.value(x - h * e)) / (2 * h) for e in eye])
        fd_H = np.array([(bar.gradient(x + h * e) - bar.gradient(x - h * e)) / (2 * h) for e in eye])
        g_err = max(g_err, float(np.abs(fd_g - g).max() / np.abs(g).max()))
        h_err = max(h_err, float(np.abs(fd_H - H).max() / np.abs(H).max()))
    return g_err, h_err


def barrier_parameter_ratio(domain, points) -> float:
    """max over points of g' Hess^{-1} g / nu (must stay <= 1)."""
    bar = ProductSimplexBarrier(domain)
    worst = 0.0
    for x in points:
        g = bar.gradient(x)
        worst = max(worst, float(g @ np.linalg.solve(bar.hessian(x), g)) / bar.nu)
    return worst


def third_derivative(domain, x, h) -> float:
    """D^3 phi(x)[h, h, h] in closed form."""
    s = domain.block_sums(x)
    hs = domain.block_sums(h)
    return float(-2.0 * np.sum(h**3 / x**3) + 2.0 * np.sum(hs**3 / (1.0 - s) ** 3))


def self_concordance_ratio(domain, points, rng) -> float:
    """max |D^3 phi[h,h,h]| / (2 (D^2 phi[h,h])^{3/2}) over random directions."""
    bar = ProductSimplexBarrier(domain)
    worst = 0.0
    for x in points:
        h = rng.standard_normal(domain.dim)
        q = float(h @ bar.hessian(x) @ h)
        worst = max(worst, abs(third_derivative(domain, x, h)) / (2.0 * q**1.5))
    return worst


def dikin_containment(domain, n: int, rng) -> float:
    """Fraction of random (x, v) with x + Hv in the closed domain."""
    bar = ProductSimplexBarrier(domain)
    X = domain.sample_interior(rng, n)
    V = random_unit_vectors(rng, n, domain.dim)
    inside = 0
    for x, v in zip(X, V):
        inside += bool(domain.contains(x + bar.metric(x).dikin @ v, tol=1e-12))
    return inside / n


def newton_monotone(domain, n: int, rng) -> tuple[int, int]:
    """(#solves with a non-decreasing residual step, max iterations)."""
    bad = 0
    worst = 0
    for _ in range(n):
        acc = rng.normal(0.0, 50.0, domain.dim)
        warm = domain.sample_interior(rng)
        _, info = rftl_argmin(domain, acc, 1.0, warm_start=warm, return_info=True)
        path = np.asarray(info.residual_path)
        bad += int(np.any(np.diff(path) >= 0))
        worst = max(worst, info.iterations)
    return bad, worst


def barrier_suite(seed: int = 0, n_points: int = 200) -> list[Check]:
    rng = np.random.default_rng(seed)
    dom = make_domain((3, 4))
    pts = dom.sample_interior(rng, n_points)
    g_err, h_err = finite_difference_errors(dom, pts)
    ratio = barrier_parameter_ratio(dom, pts)
    sc = self_concordance_ratio(dom, pts, rng)
    shapes = [make_domain((1,)), make_domain((3,)), make_domain((2, 3, 1))]
    frac = min(dikin_containment(s, 1000, rng) for s in shapes)
    bad, iters = newton_monotone(dom, 50, rng)
    return [
        Check("barrier gradient vs finite differences", g_err <= 1e-6, f"max rel err {g_err:.2e}"),
        Check("barrier Hessian vs finite differences", h_err <= 1e-5, f"max rel err {h_err:.2e}"),
        Check("barrier parameter g'H^-1g <= nu", ratio <= 1.0 + 1e-9, f"max ratio {ratio:.6f}"),
        Check("self-concordance |D3| <= 2 (D2)^1.5", sc <= 1.0 + 1e-9, f"max ratio {sc:.6f}"),
        Check("Dikin ellipsoid inside domain", frac == 1.0, f"fraction inside {frac:.4f}"),
        Check("Newton residual decreases every step", bad == 0, f"{bad} bad solves, max {iters} iterations"),
    ]


# -------------------------------------------------------------- estimators


REFERENCE_POLY = MultilinearPolynomial.from_terms(2, {(0,): 1.0, (1,): 1.0, (0, 1): -1.0})


@dataclass
class EstimatorSample:
    gradients: np.ndarray
    scalars: np.ndarray
    dual_norm_sq: np.ndarray
    actions: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.gradients.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        return self.gradients.std(axis=0, ddof=1) / np.sqrt(self.gradients.shape[0])


def draw_estimates(variant: str, f, x, domain, n: int, seed: int, delta: float | None = None) -> EstimatorSample:
    """``n`` independent single-point estimates at the fixed anchor ``x``."""
    x = np.asarray(x, dtype=float)
    metric = ProductSimplexBarrier(domain).metric(x)
    stream = RandomStream(seed)
    G = np.empty((n, x.size))
    S = np.empty(n)
    N = np.empty(n)
    A = np.empty((n, x.size))
    for k in range(n):
        if variant == est.MLSM:
            tr = est.mlsm_propose(x, metric, stream, domain)
            g = est.mlsm_ingest(tr, float(f.value(tr.action)))
        elif variant == "mlsm4ps":
            tr = est.ps_propose(x, metric, stream, domain)
            g = est.ps_ingest(tr, float(f.value(tr.action)))
        elif variant == est.DRSM:
            tr = est.drsm_propose(x, metric, delta, stream, domain)
            g = est.drsm_ingest(tr, float(f.value(tr.action)))
        else:
            raise ValueError(f"unknown estimator {variant!r}")
        G[k] = g.gradient
        S[k] = g.scalar
        N[k] = g.dual_norm_sq()
        A[k] = tr.action
    return EstimatorSample(G, S, N, A)


def smoothed_oracle(f, x, domain, delta: float, n_ball: int, seed: int):
    """Nested Monte-Carlo target of the DRSM estimate: (mean, stderr)."""
    metric = ProductSimplexBarrier(domain).metric(np.asarray(x, float))
    W = sample_unit_ball(RandomStream(seed, (7,)), domain.dim, n_ball)
    return smoothed_aux_gradient(f, x, metric.dikin, delta, W)


def estimator_suite(seed: int = 0, n_draws: int = 20_000) -> list[Check]:
    f = REFERENCE_POLY
    dom = make_domain((2,))
    x = np.array([0.3, 0.2])
    delta = 0.5
    target = AuxiliaryFunction(f).gradient(x)
    lip = f.lipschitz
    M = f.bound
    out = []
    for variant in (est.MLSM, "mlsm4ps", est.DRSM):
        s = draw_estimates(variant, f, x, dom, n_draws, seed, delta=delta)
        if variant == est.DRSM:
            oracle, o_se = smoothed_oracle(f, x, dom, delta, 20_000, seed)
        else:
            oracle, o_se = target, np.zeros_like(target)
        z = np.abs(s.mean - oracle) / np.sqrt(s.stderr**2 + o_se**2)
        out.append(Check(f"{variant} estimate unbiased", bool(np.all(z <= 3.0)),
                         f"max |z| {z.max():.2f} over {n_draws} draws"))
        if variant == est.MLSM:
            bound = est.mlsm_dual_bound(lip, dom.diameter, dom.dim)
            viol = int(np.sum(s.dual_norm_sq > bound * (1 + 1e-12)))
        elif variant == est.DRSM:
            bound = est.drsm_dual_bound(lip, dom.diameter, dom.dim, delta)
            viol = int(np.sum(s.dual_norm_sq > bound * (1 + 1e-12)))
        else:
            bound = est.ps_scalar_bound(M, dom.dim)
            viol = int(np.sum(np.abs(s.scalars) > bound * (1 + 1e-12)))
        out.append(Check(f"{variant} per-draw bound", viol == 0, f"{viol} violations (bound {bound:.4g})"))
        inside = bool(np.all(dom.contains(s.actions, tol=1e-9)))
        out.append(Check(f"{variant} actions feasible", inside, "all inside" if inside else "left the domain"))
    return out


# -------------------------------------------------------------- reductions


def reduction_instances():
    """Small enumerable (mapping, discrete objective) pairs."""
    pm = PartitionMatroid(((0, 1), (2, 3)), (1, 1))
    g_cov = coverage_function([[0, 1], [1], [2, 3], [3]])
    card = PartitionMatroid.cardinality(4, 2)
    g_fac = facility_location(np.array([[0.9, 0.1], [0.4, 0.6], [0.2, 0.8], [0.5, 0.5]]))
    space = OrderedListSpace(2, 2)
    seq = SequentialObjective([1.0, 1.0], [coverage_function([[0], [1]]), coverage_function([[0], [0, 1]])])
    return [
        ("partition matroid, coverage", PartitionMatroidExtension(pm), g_cov),
        ("cardinality 2 of 4, facility location", PartitionMatroidExtension(card), g_fac),
        ("ordered lists, sequential coverage", OrderedListExtension(space), seq),
    ]


def domain_vertices(domain) -> np.ndarray:
    """Vertices of the product of simplexes: per block either 0 or a unit vector."""
    parts = []
    for k in domain.simplex_dims:
        parts.append(np.vstack([np.zeros(k), np.eye(k)]))
    idx = np.stack([m.reshape(-1) for m in np.meshgrid(*[np.arange(len(p)) for p in parts], indexing="ij")], axis=1)
    return np.concatenate([p[idx[:, j]] for j, p in enumerate(parts)], axis=1)


def corner_gradient_sup(poly: MultilinearPolynomial, domain) -> float:
    """sup-norm of the gradient over the domain. The extension is affine in
    each block, so every partial attains its extremes at product vertices."""
    return float(np.abs(poly.gradient(domain_vertices(domain))).max())


def reduction_suite(seed: int = 0, n_points: int = 200, n_samples: int = 4000) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    for label, mapping, g in reduction_instances():
        poly = mapping.extension_polynomial(g)
        rep = verify_monotone_dr(poly, mapping.domain, n_points, rng)
        out.append(Check(f"{label}: monotone DR", rep.passed,
                         f"min partial {rep.min_partial:.3g}, max mixed {rep.max_mixed_difference:.3g}"))
        f0 = float(poly.value(np.zeros(poly.dim)))
        out.append(Check(f"{label}: f(0) = 0", abs(f0) <= 1e-12, f"f(0) = {f0:.3g}"))
        M = float(g.bound)
        sup = corner_gradient_sup(poly, mapping.domain)
        out.append(Check(f"{label}: corner gradient <= M", sup <= M + 1e-12, f"sup {sup:.4g}, M {M:.4g}"))
        x = mapping.domain.sample_interior(rng)
        acts = mapping.sample_many(x, n_samples, RandomStream(seed, (3,)))
        vals = mapping.action_value(g, acts)
        exact = float(mapping.exact_extension(g, x))
        zstat = abs(vals.mean() - exact) / (vals.std(ddof=1) / np.sqrt(n_samples) + 1e-300)
        out.append(Check(f"{label}: sampler matches extension", zstat <= 3.0, f"|z| {zstat:.2f}"))
    return out


# ----------------------------------------------------------- distributions


def z_sample(seed: int, n: int) -> np.ndarray:
    return np.asarray(sample_z(RandomStream(seed), n), dtype=float)


def distribution_suite(seed: int = 0, n: int = 100_000) -> list[Check]:
    z = z_sample(seed, n)
    ks = stats.kstest(z, z_cdf)
    zmean = (z.mean() - Z_MEAN) / (z.std(ddof=1) / np.sqrt(n))
    s = RandomStream(seed, (1,))
    idx = np.array([sample_exploration_index(s, 3) for _ in range(40_000)])
    counts = np.array([np.sum(idx == k) for k in (-1, 0, 1, 2)])
    chi = stats.chisquare(counts, f_exp=40_000 * np.array([0.5, 1 / 6, 1 / 6, 1 / 6]))
    s2 = RandomStream(seed, (2,))
    V = np.array([sample_unit_sphere(s2, 3) for _ in range(20_000)])
    norm_err = float(np.abs(np.linalg.norm(V, axis=1) - 1).max())
    vz = np.abs(V.mean(axis=0)) / (V.std(axis=0, ddof=1) / np.sqrt(len(V)))
    # projections of a uniform sphere point in R^3 are uniform on [-1, 1]
    ks_sph = stats.kstest(V[:, 0], stats.uniform(loc=-1, scale=2).cdf)
    return [
        Check("z matches its CDF (KS)", ks.statistic <= 0.01, f"KS {ks.statistic:.5f} at n={n}"),
        Check("z mean is 1/(e-1)", abs(zmean) <= 3.0, f"mean {z.mean():.6f}, z-score {zmean:.2f}"),
        Check("exploration index law", chi.pvalue >= 1e-3, f"chi2 p = {chi.pvalue:.3f}"),
        Check("sphere draws have unit norm", norm_err <= 1e-12, f"max |norm - 1| {norm_err:.1e}"),
        Check("sphere draws centred", bool(np.all(vz <= 4.0)), f"max |z| {vz.max():.2f}"),
        Check("sphere coordinate uniform on [-1,1]", ks_sph.pvalue >= 1e-3, f"KS p = {ks_sph.pvalue:.3f}"),
    ]


SUITES = {
    "barrier": barrier_suite,
    "estimators": estimator_suite,
    "reductions": reduction_suite,
    "distributions": distribution_suite,
}


def run_suite(name: str) -> list[Check]:
    if name == "all":
        return [c for fn in SUITES.values() for c in fn()]
    return SUITES[name]()
