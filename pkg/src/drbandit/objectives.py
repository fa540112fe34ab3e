"""Objectives: set functions, multilinear polynomials, smooth DR-submodular
functions, the non-oblivious auxiliary function and the verifiers used as
test oracles."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import CapacityError, ContractError
from .geometry import ProductSimplexDomain

MAX_VARIABLES = 20
ONE_MINUS_E_INV = 1.0 - np.exp(-1.0)


def _popcount(masks: np.ndarray) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.int64)
    out = np.zeros(masks.shape, dtype=np.int64)
    m = masks.copy()
    while np.any(m):
        out += m & 1
        m >>= 1
    return out


def to_mask(S) -> int:
    if isinstance(S, (int, np.integer)):
        return int(S)
    mask = 0
    for i in S:
        mask |= 1 << int(i)
    return mask


def mask_members(mask: int) -> tuple[int, ...]:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


# ---------------------------------------------------------------- set functions


class SetFunction:
    """Value oracle over subsets of {0..n-1}, stored as a table indexed by bitmask.

    ``g(set())`` must be 0 and all values non-negative; ``bound`` is the
    largest value, used as M.
    """

    def __init__(self, table, name: str = "set-function", params: dict | None = None):
        table = np.asarray(table, dtype=float)
        n = int(round(np.log2(table.size))) if table.size else -1
        if table.ndim != 1 or n < 0 or 2**n != table.size:
            raise ValueError("table length must be a power of two")
        if n > MAX_VARIABLES:
            raise CapacityError(f"ground set of size {n} exceeds {MAX_VARIABLES}")
        if abs(table[0]) > 1e-12:
            raise ContractError(f"g(empty set) must be 0, got {table[0]}")
        if np.any(table < -1e-12):
            raise ContractError("set function takes negative values")
        self.table = table
        self.table.setflags(write=False)
        self.n = n
        self.name = name
        self.params = dict(params or {})

    @classmethod
    def from_callable(cls, n: int, fn: Callable[[frozenset], float], name="set-function"):
        if n > MAX_VARIABLES:
            raise CapacityError(f"ground set of size {n} exceeds {MAX_VARIABLES}")
        table = [fn(frozenset(mask_members(m))) for m in range(2**n)]
        return cls(table, name=name)

    @property
    def bound(self) -> float:
        return float(self.table.max())

    def __call__(self, S) -> float:
        return float(self.table[to_mask(S)])

    def values(self, masks) -> np.ndarray:
        return self.table[np.asarray(masks, dtype=np.int64)]

    def __repr__(self):
        return f"SetFunction({self.name!r}, n={self.n})"


def modular_function(weights: Sequence[float]) -> SetFunction:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ContractError("modular weights must be non-negative")
    masks = np.arange(2 ** len(w))
    bits = (masks[:, None] >> np.arange(len(w))) & 1
    return SetFunction(bits @ w, name="modular", params={"weights": w.tolist()})


def coverage_function(
    covers: Sequence[Iterable[int]], item_weights: Sequence[float] | None = None
) -> SetFunction:
    """Weighted coverage: element i covers the items listed in ``covers[i]``."""
    covers = [frozenset(int(a) for a in c) for c in covers]
    n_items = 1 + max((max(c) for c in covers if c), default=-1)
    w = np.ones(n_items) if item_weights is None else np.asarray(item_weights, dtype=float)
    if w.size < n_items or np.any(w < 0):
        raise ContractError("item weights must be non-negative and cover every item")
    n = len(covers)
    item_masks = np.zeros(n, dtype=np.int64)
    for i, c in enumerate(covers):
        for a in c:
            item_masks[i] |= 1 << a
    union = np.zeros(2**n, dtype=np.int64)
    for m in range(1, 2**n):
        low = m & -m
        i = low.bit_length() - 1
        union[m] = union[m ^ low] | item_masks[i]
    item_bits = (union[:, None] >> np.arange(w.size)) & 1
    table = item_bits @ w
    return SetFunction(
        table,
        name="coverage",
        params={"covers": [sorted(c) for c in covers], "item_weights": w.tolist()},
    )


_CONCAVE = {
    "sqrt": np.sqrt,
    "log1p": np.log1p,
    "saturate": lambda t: 1.0 - np.exp(-t),
}


def concave_over_modular(weights: Sequence[float], concave: str = "sqrt") -> SetFunction:
    """g(S) = phi(sum_{i in S} w_i) with phi concave, increasing and phi(0) = 0."""
    if concave not in _CONCAVE:
        raise ContractError(f"unknown concave transform {concave!r}")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ContractError("weights must be non-negative")
    masks = np.arange(2 ** len(w))
    bits = (masks[:, None] >> np.arange(len(w))) & 1
    return SetFunction(
        _CONCAVE[concave](bits @ w),
        name="concave-over-modular",
        params={"weights": w.tolist(), "concave": concave},
    )


def facility_location(utility) -> SetFunction:
    """g(S) = sum_j max_{i in S} utility[i, j] (0 for the empty set)."""
    u = np.asarray(utility, dtype=float)
    if np.any(u < 0):
        raise ContractError("utilities must be non-negative")
    n = u.shape[0]
    best = np.zeros((2**n, u.shape[1]))
    for m in range(1, 2**n):
        low = m & -m
        best[m] = np.maximum(best[m ^ low], u[low.bit_length() - 1])
    return SetFunction(best.sum(axis=1), name="facility-location", params={"utility": u.tolist()})


def mixture(functions: Sequence[SetFunction], probs: Sequence[float]) -> SetFunction:
    p = np.asarray(probs, dtype=float)
    tables = np.stack([g.table for g in functions])
    return SetFunction(p @ tables, name="mixture")


@dataclass
class SetFunctionReport:
    monotone: bool
    submodular: bool
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.monotone and self.submodular


def verify_set_function(g: SetFunction, tol: float = 1e-12, max_violations: int = 10) -> SetFunctionReport:
    """Exhaustive first-difference and exchange-inequality check."""
    n = g.n
    t = g.table
    masks = np.arange(2**n)
    viol = []
    mono = True
    sub = True
    for i in range(n):
        bi = 1 << i
        base = masks[(masks & bi) == 0]
        gain_i = t[base | bi] - t[base]
        bad = np.flatnonzero(gain_i < -tol)
        if bad.size:
            mono = False
            for k in bad[: max_violations - len(viol)]:
                viol.append(("monotone", mask_members(int(base[k])), i, None, float(gain_i[k])))
        for j in range(i + 1, n):
            bj = 1 << j
            base2 = base[(base & bj) == 0]
            lhs = t[base2 | bi | bj] - t[base2 | bi]
            rhs = t[base2 | bj] - t[base2]
            bad = np.flatnonzero(lhs - rhs > tol)
            if bad.size:
                sub = False
                for k in bad[: max(0, max_violations - len(viol))]:
                    viol.append(
                        ("submodular", mask_members(int(base2[k])), i, j, float(lhs[k] - rhs[k]))
                    )
    return SetFunctionReport(monotone=mono, submodular=sub, violations=viol)


# -------------------------------------------------------------- continuous objectives


class Objective:
    """Interface for continuous rewards. ``value``/``gradient`` accept a point
    of shape (d,) or a batch of shape (m, d)."""

    dim: int

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)

    @property
    def lipschitz(self) -> float:
        raise NotImplementedError

    @property
    def bound(self) -> float:
        """Upper bound M on values over [0,1]^d (value at the all-ones corner;
        exact for monotone objectives)."""
        return float(self.value(np.ones(self.dim)))


class MultilinearPolynomial(Objective):
    """f(x) = sum_S c_S prod_{i in S} x_i with dense coefficients indexed by bitmask.

    Bit ``i`` of the index says whether x_i appears in the term.
    """

    def __init__(self, coefficients, name: str = "multilinear"):
        c = np.asarray(coefficients, dtype=float)
        d = int(round(np.log2(c.size))) if c.size else -1
        if c.ndim != 1 or d < 0 or 2**d != c.size:
            raise ValueError("coefficient vector length must be a power of two")
        if d > MAX_VARIABLES:
            raise CapacityError(f"{d} variables exceeds the cap of {MAX_VARIABLES}")
        self.coefficients = c
        self.coefficients.setflags(write=False)
        self.dim = d
        self.name = name

    @classmethod
    def from_terms(cls, d: int, terms: Mapping, name: str = "multilinear"):
        """``terms`` maps tuples of variable indices (or bitmasks) to coefficients."""
        if d > MAX_VARIABLES:
            raise CapacityError(f"{d} variables exceeds the cap of {MAX_VARIABLES}")
        c = np.zeros(2**d)
        for key, val in terms.items():
            m = to_mask(key)
            if m >= 2**d:
                raise ValueError(f"term {key} uses a variable beyond dimension {d}")
            c[m] += float(val)
        return cls(c, name=name)

    def terms(self, tol: float = 0.0) -> dict[tuple[int, ...], float]:
        nz = np.flatnonzero(np.abs(self.coefficients) > tol)
        return {mask_members(int(m)): float(self.coefficients[m]) for m in nz}

    def value(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {X.shape[1]}")
        C = np.broadcast_to(self.coefficients, (X.shape[0], self.coefficients.size))
        for i in range(self.dim):
            C = C.reshape(X.shape[0], -1, 2)
            C = C[:, :, 0] + X[:, i, None] * C[:, :, 1]
        out = C[:, 0]
        return float(out[0]) if single else out

    def gradient(self, x):
        """Exact partials: f(x with x_i = 1) - f(x with x_i = 0)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        m, d = X.shape
        hi = np.repeat(X[:, None, :], d, axis=1)
        lo = hi.copy()
        idx = np.arange(d)
        hi[:, idx, idx] = 1.0
        lo[:, idx, idx] = 0.0
        g = (self.value(hi.reshape(-1, d)) - self.value(lo.reshape(-1, d))).reshape(m, d)
        return g[0] if single else g

    def mixed_partials(self, x) -> np.ndarray:
        """Matrix of second partials at a single point (zero diagonal)."""
        x = np.asarray(x, dtype=float)
        d = self.dim
        pts = []
        for i in range(d):
            for j in range(d):
                for a in (1.0, 0.0):
                    for b in (1.0, 0.0):
                        p = x.copy()
                        p[i] = a
                        p[j] = b
                        pts.append(p)
        v = self.value(np.array(pts)).reshape(d, d, 4)
        out = v[..., 0] - v[..., 1] - v[..., 2] + v[..., 3]
        np.fill_diagonal(out, 0.0)
        return out

    @property
    def lipschitz(self) -> float:
        """Largest gradient norm over the 2^d corners of the unit cube."""
        corners = ((np.arange(2**self.dim)[:, None] >> np.arange(self.dim)) & 1).astype(float)
        g = self.gradient(corners)
        return float(np.max(np.linalg.norm(g, axis=1)))

    def __add__(self, other: "MultilinearPolynomial"):
        if not isinstance(other, MultilinearPolynomial) or other.dim != self.dim:
            return NotImplemented
        return MultilinearPolynomial(self.coefficients + other.coefficients)

    def __mul__(self, s: float):
        return MultilinearPolynomial(self.coefficients * float(s), name=self.name)

    __rmul__ = __mul__

    def __repr__(self):
        return f"MultilinearPolynomial({self.name!r}, d={self.dim}, terms={len(self.terms())})"


def average_polynomial(polys: Sequence[MultilinearPolynomial], weights=None) -> MultilinearPolynomial:
    w = np.full(len(polys), 1.0 / len(polys)) if weights is None else np.asarray(weights, float)
    return MultilinearPolynomial(w @ np.stack([p.coefficients for p in polys]), name="average")


def multilinear_extension_build(g: SetFunction) -> MultilinearPolynomial:
    """Coefficients of sum_S g(S) prod_{S} x_i prod_{not S} (1 - x_i).

    Expanding the products gives c_T = sum_{S subset T} (-1)^{|T - S|} g(S),
    computed with the in-place Moebius transform.
    """
    if g.n > MAX_VARIABLES:
        raise CapacityError(f"ground set of size {g.n} exceeds {MAX_VARIABLES}")
    return MultilinearPolynomial(mobius_transform(g.table), name=f"extension({g.name})")


def mobius_transform(values) -> np.ndarray:
    """Coefficients of the multilinear polynomial taking ``values[mask]`` at
    the cube corner with indicator ``mask``."""
    c = np.array(values, dtype=float)
    n = int(round(np.log2(c.size)))
    for i in range(n):
        c = c.reshape(-1, 2, 2**i)
        c[:, 1, :] -= c[:, 0, :]
        c = c.reshape(-1)
    return c


def multilinear_eval(f: MultilinearPolynomial, x):
    return f.value(x)


def multilinear_gradient(f: MultilinearPolynomial, x):
    return f.gradient(x)


class SaturatingObjective(Objective):
    """f(x) = sum_k c_k (1 - exp(-<w_k, x>)) with non-negative c, w.

    Smooth, monotone and DR-submodular (the Hessian is
    -sum_k c_k e^{-<w_k,x>} w_k w_k'), not multilinear.
    """

    def __init__(self, weights, coefs=None, name: str = "saturating"):
        W = np.atleast_2d(np.asarray(weights, dtype=float))
        c = np.ones(W.shape[0]) if coefs is None else np.asarray(coefs, dtype=float)
        if np.any(W < 0) or np.any(c < 0):
            raise ContractError("weights and coefficients must be non-negative")
        self.W = W
        self.c = c
        self.dim = W.shape[1]
        self.name = name

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return (1.0 - np.exp(-(x @ self.W.T))) @ self.c

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return (np.exp(-(x @ self.W.T)) * self.c) @ self.W

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = np.exp(-(self.W @ x)) * self.c
        return -(self.W.T * s) @ self.W

    @property
    def lipschitz(self) -> float:
        # gradient entries decrease in every coordinate, so x = 0 is worst
        return float(np.linalg.norm(self.c @ self.W))

    @property
    def smoothness(self) -> float:
        return float(np.linalg.norm(self.hessian(np.zeros(self.dim)), 2))


class LinearObjective(MultilinearPolynomial):
    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        super().__init__(
            MultilinearPolynomial.from_terms(len(w), {(i,): wi for i, wi in enumerate(w)}).coefficients,
            name="linear",
        )


# ------------------------------------------------------------ auxiliary function


def gauss_legendre_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to (0, 1)."""
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


class AuxiliaryFunction:
    """F(x) = int_0^1 e^{z-1}/z f(z x) dz and its gradient
    int_0^1 e^{z-1} grad f(z x) dz, by Gauss-Legendre quadrature.

    The nodes are interior to (0, 1), so the integrand f(zx)/z is only ever
    evaluated where it is finite; its z -> 0 limit <grad f(0), x> is exposed
    through :meth:`integrand` for completeness.
    """

    def __init__(self, f: Objective, n_nodes: int = 64, f0_tol: float = 1e-12):
        f0 = float(f.value(np.zeros(f.dim)))
        if abs(f0) > f0_tol:
            raise ContractError(f"auxiliary function needs f(0) = 0, got {f0}")
        self.f = f
        self.n_nodes = int(n_nodes)
        self.nodes, self.weights = gauss_legendre_unit(self.n_nodes)
        self._kernel = self.weights * np.exp(self.nodes - 1.0)

    @property
    def dim(self) -> int:
        return self.f.dim

    def integrand(self, z: float, x) -> float:
        x = np.asarray(x, dtype=float)
        if z <= 0.0:
            return float(self.f.gradient(np.zeros_like(x)) @ x) * np.exp(-1.0)
        return float(np.exp(z - 1.0) * self.f.value(z * x) / z)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        X = np.atleast_2d(x)
        pts = self.nodes[None, :, None] * X[:, None, :]
        vals = np.asarray(self.f.value(pts.reshape(-1, X.shape[1]))).reshape(X.shape[0], -1)
        out = (vals / self.nodes) @ self._kernel
        return float(out[0]) if x.ndim == 1 else out

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        X = np.atleast_2d(x)
        m, d = X.shape
        pts = self.nodes[None, :, None] * X[:, None, :]
        g = np.asarray(self.f.gradient(pts.reshape(-1, d))).reshape(m, self.n_nodes, d)
        out = np.einsum("j,mjd->md", self._kernel, g)
        return out[0] if x.ndim == 1 else out


def aux_value(F: AuxiliaryFunction, x):
    return F.value(x)


def aux_gradient(F: AuxiliaryFunction, x):
    return F.gradient(x)


def smoothed_aux_gradient(
    f: Objective, x, dikin: np.ndarray, delta: float, ball_points: np.ndarray, n_nodes: int = 64
) -> tuple[np.ndarray, np.ndarray]:
    """Ball average of the auxiliary gradient at x + delta*H*w over given ball
    points ``w``. Returns (mean, standard error) over the ball sample."""
    x = np.asarray(x, dtype=float)
    nodes, weights = gauss_legendre_unit(n_nodes)
    kern = weights * np.exp(nodes - 1.0)
    centres = x + delta * ball_points @ dikin.T
    per = np.empty_like(centres)
    chunk = max(1, 200_000 // n_nodes)
    for a in range(0, centres.shape[0], chunk):
        c = centres[a : a + chunk]
        pts = nodes[None, :, None] * c[:, None, :]
        g = np.asarray(f.gradient(pts.reshape(-1, x.size))).reshape(c.shape[0], n_nodes, x.size)
        per[a : a + chunk] = np.einsum("j,mjd->md", kern, g)
    n = per.shape[0]
    return per.mean(axis=0), per.std(axis=0, ddof=1) / np.sqrt(n)


# ----------------------------------------------------------------- verifiers


@dataclass
class DRReport:
    passed: bool
    n_points: int
    min_partial: float
    max_mixed_difference: float
    violations: list = field(default_factory=list)


def verify_monotone_dr(
    f: Objective,
    domain: ProductSimplexDomain,
    trials: int,
    rng: np.random.Generator | int | None = None,
    tol: float = 1e-12,
    points: np.ndarray | None = None,
    max_violations: int = 10,
) -> DRReport:
    """First partials >= -tol and mixed second differences
    f(x v a_i v a_j) - f(x v a_i) - f(x v a_j) + f(x) <= tol, with a_i raising
    coordinate i to 1. Exact up to rounding for multilinear f."""
    if points is None:
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        points = domain.sample_interior(rng, trials)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = points.shape[1]
    viol = []
    min_partial = np.inf
    max_mixed = -np.inf
    eye = np.arange(d)
    iu, ju = np.triu_indices(d, k=1)
    for x in points:
        if isinstance(f, MultilinearPolynomial):
            g = f.gradient(x)
        else:
            g = np.asarray(f.gradient(x))
        min_partial = min(min_partial, float(g.min()))
        for i in np.flatnonzero(g < -tol):
            if len(viol) < max_violations:
                viol.append(("partial", x.copy(), int(i), None, float(g[i])))
        if d < 2:
            continue
        xi = np.repeat(x[None], d, axis=0)
        xi[eye, eye] = np.maximum(x, 1.0)
        xij = np.repeat(x[None], iu.size, axis=0)
        xij[np.arange(iu.size), iu] = np.maximum(x[iu], 1.0)
        xij[np.arange(iu.size), ju] = np.maximum(x[ju], 1.0)
        fx = float(f.value(x))
        fi = np.asarray(f.value(xi))
        fij = np.asarray(f.value(xij))
        mixed = fij - fi[iu] - fi[ju] + fx
        max_mixed = max(max_mixed, float(mixed.max()))
        for k in np.flatnonzero(mixed > tol):
            if len(viol) < max_violations:
                viol.append(("mixed", x.copy(), int(iu[k]), int(ju[k]), float(mixed[k])))
    if d < 2:
        max_mixed = 0.0
    passed = min_partial >= -tol and max_mixed <= tol
    return DRReport(
        passed=bool(passed),
        n_points=points.shape[0],
        min_partial=float(min_partial),
        max_mixed_difference=float(max_mixed),
        violations=viol,
    )


# ------------------------------------------------------------ instance library


def probabilistic_coverage(probs, weights=None, name="probabilistic-coverage") -> MultilinearPolynomial:
    """f(x) = sum_k w_k (1 - prod_i (1 - p_ki x_i)), multilinear, monotone, DR."""
    P = np.atleast_2d(np.asarray(probs, dtype=float))
    if np.any(P < 0) or np.any(P > 1):
        raise ContractError("coverage probabilities must lie in [0, 1]")
    K, d = P.shape
    w = np.ones(K) if weights is None else np.asarray(weights, dtype=float)
    masks = np.arange(2**d)
    bits = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
    c = np.zeros(2**d)
    for k in range(K):
        # 1 - prod(1 - p x) = -sum_{S nonempty} prod_{S} (-p_i x_i)
        term = np.where(bits, -P[k], 1.0).prod(axis=1)
        term[0] = 0.0
        c -= w[k] * term
    return MultilinearPolynomial(c, name=name)


def random_library_instance(rng: np.random.Generator, d: int | None = None) -> MultilinearPolynomial:
    """Random member of the shipped monotone DR multilinear families."""
    d = int(rng.integers(1, 6)) if d is None else d
    kind = int(rng.integers(0, 4))
    if kind == 0:
        K = int(rng.integers(1, 4))
        return probabilistic_coverage(rng.uniform(0, 1, (K, d)), rng.uniform(0.2, 1.0, K))
    if kind == 1:
        n_items = int(rng.integers(1, 6))
        covers = [list(np.flatnonzero(rng.random(n_items) < 0.5)) for _ in range(d)]
        return multilinear_extension_build(coverage_function(covers, rng.uniform(0.1, 1, n_items)))
    if kind == 2:
        conc = ["sqrt", "log1p", "saturate"][int(rng.integers(0, 3))]
        return multilinear_extension_build(concave_over_modular(rng.uniform(0, 2, d), conc))
    return multilinear_extension_build(facility_location(rng.uniform(0, 1, (d, 3))))
