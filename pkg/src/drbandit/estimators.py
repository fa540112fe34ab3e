"""One-point gradient estimators, each split into a propose step (choose the
exploration action) and an ingest step (turn the single observed reward into
an estimate of the auxiliary gradient at the anchor)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InvariantError
from .geometry import LocalMetric, ProductSimplexDomain
from .sampling import (
    RandomStream,
    sample_exploration_index,
    sample_unit_sphere,
    sample_z,
)

ONE_MINUS_E_INV = 1.0 - np.exp(-1.0)
Z_FLOOR = 1e-12

MLSM = "mlsm"
PS_LOW = "mlsm4ps-low-z"
DRSM = "drsm"


@dataclass(frozen=True)
class ExplorationTrace:
    """Everything drawn for one exploration round plus the action played.

    ``coordinate`` is the index of u (or -1 for u = 0). ``branch`` is only
    meaningful for the low-z PS variant: 1 when the half step along u was added.
    ``step_scales`` holds the per-coordinate shrink factors c_i of the MLSM
    proposal (all ones unless a coordinate step would leave the domain).
    """

    variant: str
    z: float
    direction: np.ndarray
    coordinate: int
    anchor: np.ndarray
    metric: LocalMetric
    action: np.ndarray
    hv: np.ndarray
    delta: float | None = None
    branch: int = 0
    step_scales: np.ndarray | None = None
    block: int | None = None
    round: int | None = None

    @property
    def dim(self) -> int:
        return self.anchor.size

    @property
    def coordinate_vector(self) -> np.ndarray:
        u = np.zeros(self.dim)
        if self.coordinate >= 0:
            u[self.coordinate] = 1.0
        return u


@dataclass(frozen=True)
class GradientEstimate:
    gradient: np.ndarray
    scalar: float
    trace: ExplorationTrace

    def dual_norm_sq(self) -> float:
        """g' Hess^{-1} g at the anchor."""
        w = self.trace.metric.dikin @ self.gradient
        return float(w @ w)


def _check_member(domain: ProductSimplexDomain | None, y: np.ndarray, what: str):
    if domain is not None and not domain.contains(y, tol=1e-9):
        raise InvariantError(f"{what} action left the domain: {y}")


def _assemble(scalar: float, trace: ExplorationTrace) -> GradientEstimate:
    grad = trace.dim * scalar * (trace.metric.dikin_inv @ trace.direction)
    return GradientEstimate(gradient=grad, scalar=float(scalar), trace=trace)


def mlsm_propose(
    x_q,
    metric: LocalMetric,
    stream: RandomStream,
    domain: ProductSimplexDomain | None = None,
    block: int | None = None,
    round: int | None = None,
    strict: bool = False,
) -> ExplorationTrace:
    """Draw (z, v, u) and play y = z x + c_i z <Hv, e_i> e_i (y = z x if u = 0).

    The coordinate step x + <Hv, e_i> e_i is not always inside the domain
    (it need not lie in the Dikin ellipsoid), so each step is shrunk by the
    largest c_i in (0, 1] that keeps y feasible. The ingest step divides by
    c_i and reweights the u = 0 branch by mean(1/c), which keeps the estimate
    unbiased. With ``strict`` an infeasible unshrunk step raises instead.
    """
    x = np.asarray(x_q, dtype=float)
    d = x.size
    z = sample_z(stream)
    v = sample_unit_sphere(stream, d)
    i = sample_exploration_index(stream, d)
    return _mlsm_trace(x, metric, z, v, i, domain, block, round, strict)


def coordinate_step_scales(x: np.ndarray, hv: np.ndarray, z: float, domain: ProductSimplexDomain | None):
    """Largest c_i <= 1 with z x + c_i z hv_i e_i in the domain.

    Without a domain the unit cube is assumed ([0,1] per coordinate)."""
    c = np.ones(x.size)
    if z <= 0.0:
        return c
    if domain is not None:
        room = (1.0 - z * domain.block_sums(x))[domain.block_of]
    else:
        room = 1.0 - z * x
    up = hv > 0
    c[up] = np.minimum(1.0, np.maximum(room[up], 0.0) / (z * hv[up]))
    down = hv < 0
    c[down] = np.minimum(c[down], x[down] / -hv[down])
    return c


def _mlsm_trace(x, metric, z, v, i, domain, block, round, strict=False) -> ExplorationTrace:
    hv = metric.dikin @ v
    scales = coordinate_step_scales(x, hv, z, domain)
    if strict and np.any(scales < 1.0):
        raise InvariantError(f"coordinate step leaves the domain (scales {scales})")
    y = z * x
    if i >= 0:
        y = y.copy()
        y[i] += scales[i] * z * hv[i]
    _check_member(domain, y, "MLSM exploration")
    return ExplorationTrace(
        variant=MLSM, z=z, direction=v, coordinate=i, anchor=x, metric=metric,
        action=y, hv=hv, block=block, round=round, step_scales=scales,
    )


def mlsm_ingest(trace: ExplorationTrace, observed: float) -> GradientEstimate:
    """l = -2(1-1/e)(d/z) f(y) when u = 0, +2(1-1/e)(d/z) f(y) otherwise;
    zero when z underflows. Shrunk steps divide by c_i and the u = 0 branch
    is multiplied by mean(1/c)."""
    if trace.z < Z_FLOOR:
        return _assemble(0.0, trace)
    mag = 2.0 * ONE_MINUS_E_INV * trace.dim / trace.z * float(observed)
    c = trace.step_scales
    if trace.coordinate < 0:
        if c is not None:
            mag *= float(np.mean(1.0 / c))
        return _assemble(-mag, trace)
    if c is not None:
        mag /= float(c[trace.coordinate])
    return _assemble(mag, trace)


def ps_propose(
    x_q,
    metric: LocalMetric,
    stream: RandomStream,
    domain: ProductSimplexDomain | None = None,
    block: int | None = None,
    round: int | None = None,
    strict: bool = False,
) -> ExplorationTrace:
    """MLSM proposal when z >= 1/2. Otherwise pick a uniform coordinate u and
    play z x or z x + u/2 with equal probability."""
    x = np.asarray(x_q, dtype=float)
    d = x.size
    z = sample_z(stream)
    v = sample_unit_sphere(stream, d)
    if z >= 0.5:
        i = sample_exploration_index(stream, d)
        return _mlsm_trace(x, metric, z, v, i, domain, block, round, strict)
    i = int(stream.integers(0, d))
    branch = int(stream.uniform() < 0.5)
    y = z * x
    if branch:
        y = y.copy()
        y[i] += 0.5
    _check_member(domain, y, "low-z exploration")
    return ExplorationTrace(
        variant=PS_LOW, z=z, direction=v, coordinate=i, anchor=x, metric=metric,
        action=y, hv=metric.dikin @ v, branch=branch, block=block, round=round,
    )


def ps_ingest(trace: ExplorationTrace, observed: float) -> GradientEstimate:
    if trace.variant == MLSM:
        return mlsm_ingest(trace, observed)
    if trace.variant != PS_LOW:
        raise ContractError(f"cannot ingest a {trace.variant} trace as PS")
    mag = 4.0 * ONE_MINUS_E_INV * trace.dim * trace.hv[trace.coordinate] * float(observed)
    return _assemble(mag if trace.branch else -mag, trace)


def drsm_propose(
    x_q,
    metric: LocalMetric,
    delta: float,
    stream: RandomStream,
    domain: ProductSimplexDomain | None = None,
    block: int | None = None,
    round: int | None = None,
) -> ExplorationTrace:
    """Play y = z x + delta z H v with H anchored at x."""
    if not 0.0 < delta <= 1.0:
        raise ContractError(f"delta must lie in (0, 1], got {delta}")
    x = np.asarray(x_q, dtype=float)
    z = sample_z(stream)
    v = sample_unit_sphere(stream, x.size)
    hv = metric.dikin @ v
    y = z * (x + delta * hv)
    _check_member(domain, y, "DRSM exploration")
    return ExplorationTrace(
        variant=DRSM, z=z, direction=v, coordinate=-1, anchor=x, metric=metric,
        action=y, hv=hv, delta=float(delta), block=block, round=round,
    )


def drsm_ingest(trace: ExplorationTrace, observed: float) -> GradientEstimate:
    """(1-1/e) (d/(delta z)) f(y) H^{-1} v, written as d * l * H^{-1} v."""
    if trace.z < Z_FLOOR:
        return _assemble(0.0, trace)
    return _assemble(ONE_MINUS_E_INV * float(observed) / (trace.delta * trace.z), trace)


# ------------------------------------------------------------------ bounds


def mlsm_dual_bound(lipschitz: float, diameter: float, d: int) -> float:
    """4 (1-1/e)^2 L1^2 D^2 d^4."""
    return 4.0 * ONE_MINUS_E_INV**2 * lipschitz**2 * diameter**2 * d**4


def ps_scalar_bound(bound: float, d: int) -> float:
    """4 (1-1/e) d M."""
    return 4.0 * ONE_MINUS_E_INV * d * bound


def drsm_dual_bound(lipschitz: float, diameter: float, d: int, delta: float) -> float:
    """(1-1/e)^2 d^2 L1^2 D^2 / delta^2."""
    return ONE_MINUS_E_INV**2 * d**2 * lipschitz**2 * diameter**2 / delta**2
