"""Log barrier over products of standard simplexes, local metrics and the
damped-Newton solver behind the regularized-leader step."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, DomainError, NumericError

# every log argument must stay above this to count as interior
INTERIOR_FLOOR = 1e-12


@dataclass(frozen=True)
class ProductSimplexDomain:
    """Product of standard simplexes {x >= 0, sum(x_block) <= 1}.

    Coordinates are laid out block after block, so block ``i`` occupies
    ``offsets[i]:offsets[i] + simplex_dims[i]``.
    """

    simplex_dims: tuple[int, ...]
    offsets: np.ndarray = field(init=False, repr=False, compare=False)
    block_of: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(k) for k in self.simplex_dims)
        if not dims:
            raise ValueError("a domain needs at least one simplex")
        if any(k < 1 for k in dims):
            raise ValueError(f"simplex dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "simplex_dims", dims)
        offsets = np.concatenate([[0], np.cumsum(dims)]).astype(np.intp)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "block_of", np.repeat(np.arange(len(dims)), dims))

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    @property
    def n_blocks(self) -> int:
        return len(self.simplex_dims)

    @property
    def diameter(self) -> float:
        """Radius D of the smallest origin-centred ball holding the domain."""
        return float(np.sqrt(self.n_blocks))

    def block_slices(self) -> list[slice]:
        return [slice(int(a), int(b)) for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def block_sums(self, x: np.ndarray) -> np.ndarray:
        """Per-block coordinate sums; works on a point or a batch (last axis)."""
        x = np.asarray(x, dtype=float)
        return np.add.reduceat(x, self.offsets[:-1], axis=-1)

    def contains(self, x, tol: float = 1e-12) -> bool | np.ndarray:
        """Closed-domain membership, with slack ``tol`` for rounding."""
        x = np.asarray(x, dtype=float)
        ok = np.all(x >= -tol, axis=-1) & np.all(self.block_sums(x) <= 1.0 + tol, axis=-1)
        return bool(ok) if np.ndim(ok) == 0 else ok

    def is_interior(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,) or not np.all(np.isfinite(x)):
            return False
        return bool(np.all(x >= INTERIOR_FLOOR) and np.all(1.0 - self.block_sums(x) >= INTERIOR_FLOOR))

    def check_interior(self, x) -> np.ndarray:
        """Return ``x`` as a float array or raise naming the violated constraint."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DomainError(f"expected a point of shape ({self.dim},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError("point has non-finite coordinates")
        low = np.flatnonzero(x < INTERIOR_FLOOR)
        if low.size:
            j = int(low[0])
            raise DomainError(
                f"coordinate {j} (block {int(self.block_of[j])}) is {x[j]!r}, not strictly positive"
            )
        slack = 1.0 - self.block_sums(x)
        bad = np.flatnonzero(slack < INTERIOR_FLOOR)
        if bad.size:
            i = int(bad[0])
            raise DomainError(f"block {i} sums to {1.0 - slack[i]!r}, not strictly below 1")
        return x

    def sample_interior(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        """Uniform draws from the domain (Dirichlet(1,..,1) per block, slack dropped).

        Points are nudged off the boundary so they are usable as barrier inputs.
        """
        size = 1 if n is None else int(n)
        parts = []
        for k in self.simplex_dims:
            w = rng.dirichlet(np.ones(k + 1), size=size)
            parts.append(w[:, :k])
        x = np.concatenate(parts, axis=1)
        # pull towards the centre by a hair so no coordinate or slack underflows
        centre = analytic_center(self)
        x = (1.0 - 1e-9) * x + 1e-9 * centre
        return x[0] if n is None else x


@dataclass(frozen=True)
class LocalMetric:
    """Hessian of the barrier at ``anchor`` with its inverse square root.

    ``dikin`` maps the unit ball onto the Dikin ellipsoid; ``dikin_inv`` is its
    inverse, i.e. the Hessian square root.
    """

    anchor: np.ndarray
    hessian: np.ndarray
    dikin: np.ndarray
    dikin_inv: np.ndarray

    def local_norm(self, h) -> float:
        h = np.asarray(h, dtype=float)
        return float(np.sqrt(h @ self.hessian @ h))

    def dual_norm(self, g) -> float:
        # H^2 is the inverse Hessian, so |H g|^2 = g' Hess^{-1} g
        w = self.dikin @ np.asarray(g, dtype=float)
        return float(np.sqrt(w @ w))


class ProductSimplexBarrier:
    """phi(x) = -sum_i log(1 - sum x_i) - sum_ij log x_ij, self-concordant with
    parameter nu = sum_i (d_i + 1)."""

    def __init__(self, domain: ProductSimplexDomain):
        self.domain = domain
        self.nu = float(sum(k + 1 for k in domain.simplex_dims))

    def value(self, x) -> float:
        x = self.domain.check_interior(x)
        slack = 1.0 - self.domain.block_sums(x)
        return float(-np.sum(np.log(slack)) - np.sum(np.log(x)))

    def gradient(self, x) -> np.ndarray:
        x = self.domain.check_interior(x)
        return _gradient(self.domain, x)

    def hessian(self, x) -> np.ndarray:
        x = self.domain.check_interior(x)
        d = self.domain.dim
        out = np.zeros((d, d))
        slack = 1.0 - self.domain.block_sums(x)
        for i, sl in enumerate(self.domain.block_slices()):
            out[sl, sl] = 1.0 / slack[i] ** 2
        out[np.diag_indices(d)] += 1.0 / x**2
        return out

    def metric(self, x) -> LocalMetric:
        """Hessian plus Dikin transform from per-block eigendecompositions."""
        x = self.domain.check_interior(x)
        hess = self.hessian(x)
        d = self.domain.dim
        dikin = np.zeros((d, d))
        dikin_inv = np.zeros((d, d))
        for sl in self.domain.block_slices():
            lam, vec = np.linalg.eigh(hess[sl, sl])
            if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
                raise NumericError(f"barrier Hessian block has eigenvalues {lam}")
            root = np.sqrt(lam)
            dikin[sl, sl] = (vec / root) @ vec.T
            dikin_inv[sl, sl] = (vec * root) @ vec.T
        return LocalMetric(anchor=x.copy(), hessian=hess, dikin=dikin, dikin_inv=dikin_inv)

    def analytic_center(self) -> np.ndarray:
        return analytic_center(self.domain)


def _gradient(domain: ProductSimplexDomain, x: np.ndarray) -> np.ndarray:
    slack = 1.0 - domain.block_sums(x)
    return 1.0 / slack[domain.block_of] - 1.0 / x


def barrier_value(domain: ProductSimplexDomain, x) -> float:
    return ProductSimplexBarrier(domain).value(x)


def barrier_gradient(domain: ProductSimplexDomain, x) -> np.ndarray:
    return ProductSimplexBarrier(domain).gradient(x)


def barrier_hessian(domain: ProductSimplexDomain, x) -> LocalMetric:
    return ProductSimplexBarrier(domain).metric(x)


def analytic_center(domain: ProductSimplexDomain) -> np.ndarray:
    """Zero of the barrier gradient: 1/(d_i + 1) on every coordinate of block i."""
    dims = np.asarray(domain.simplex_dims, dtype=float)
    return (1.0 / (dims + 1.0))[domain.block_of]


def _newton_direction(domain: ProductSimplexDomain, x: np.ndarray, resid: np.ndarray) -> np.ndarray:
    # each Hessian block is diag(1/x^2) + b 11', so Sherman-Morrison solves it
    slack = 1.0 - domain.block_sums(x)
    b = 1.0 / slack**2
    dinv = x**2
    starts = domain.offsets[:-1]
    s_r = np.add.reduceat(dinv * resid, starts)
    s_1 = np.add.reduceat(dinv, starts)
    coef = (b * s_r / (1.0 + b * s_1))[domain.block_of]
    return -(dinv * resid - coef * dinv)


def _max_step(domain: ProductSimplexDomain, x: np.ndarray, p: np.ndarray) -> float:
    """Largest step keeping every log argument at or above the interior floor."""
    t = np.inf
    neg = p < 0
    if np.any(neg):
        t = min(t, float(np.min((x[neg] - INTERIOR_FLOOR) / -p[neg])))
    slack = 1.0 - domain.block_sums(x)
    dp = domain.block_sums(p)
    pos = dp > 0
    if np.any(pos):
        t = min(t, float(np.min((slack[pos] - INTERIOR_FLOOR) / dp[pos])))
    return t


def _residual_floor(domain: ProductSimplexDomain, x: np.ndarray) -> float:
    """Rounding noise of the residual itself: 1 - sum(x) carries an absolute
    error of a few ulps, which 1/slack amplifies by 1/slack^2."""
    slack = 1.0 - domain.block_sums(x)
    worst = max(float(np.max(1.0 / x)), float(np.max(1.0 / slack))) ** 2
    return 16.0 * np.finfo(float).eps * worst * math.sqrt(domain.dim)


@dataclass
class NewtonInfo:
    iterations: int
    residual: float
    residual_path: list[float]


def rftl_argmin(
    domain: ProductSimplexDomain,
    accumulated,
    eta: float,
    warm_start=None,
    *,
    tol: float = 1e-8,
    max_newton_iters: int = 200,
    return_info: bool = False,
):
    """Minimise <-eta * accumulated, x> + phi(x) over the domain interior.

    Damped Newton from ``warm_start`` (analytic centre when omitted). Steps are
    clamped to 0.99 of the distance to the interior floor, then halved until
    the squared residual shows Armijo decrease with constant 1e-4; the
    residual therefore shrinks at every accepted step. Iteration stops at
    ``tol`` or, for iterates within ~1e-5 of the boundary, at the rounding
    floor of the residual evaluation when that is larger.
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    c = eta * np.asarray(accumulated, dtype=float)
    if c.shape != (domain.dim,):
        raise ValueError(f"accumulated has shape {c.shape}, expected ({domain.dim},)")
    if not np.all(np.isfinite(c)):
        raise NumericError("accumulated gradient sum is not finite")
    x = analytic_center(domain) if warm_start is None else domain.check_interior(warm_start).copy()

    resid = _gradient(domain, x) - c
    rnorm = float(np.linalg.norm(resid))
    path = [rnorm]
    it = 0
    while rnorm > max(tol, _residual_floor(domain, x)):
        if it >= max_newton_iters:
            raise ConvergenceError(
                f"Newton stalled after {it} iterations, residual {rnorm:.3e}", residual=rnorm
            )
        p = _newton_direction(domain, x, resid)
        t = min(1.0, 0.99 * _max_step(domain, x, p))
        accepted = False
        while t > 1e-30:
            x_new = x + t * p
            r_new = _gradient(domain, x_new) - c
            n_new = float(np.linalg.norm(r_new))
            # merit 0.5|r|^2 has directional derivative -|r|^2 along p
            if n_new**2 <= (1.0 - 2e-4 * t) * rnorm**2:
                accepted = True
                break
            t *= 0.5
        it += 1
        if not accepted:
            raise ConvergenceError(
                f"line search failed at iteration {it}, residual {rnorm:.3e}", residual=rnorm
            )
        x, resid, rnorm = x_new, r_new, n_new
        path.append(rnorm)
    if return_info:
        return x, NewtonInfo(iterations=it, residual=rnorm, residual_path=path)
    return x


def random_unit_vectors(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def make_domain(dims: Sequence[int] | int) -> ProductSimplexDomain:
    if isinstance(dims, (int, np.integer)):
        dims = (int(dims),)
    return ProductSimplexDomain(tuple(dims))
