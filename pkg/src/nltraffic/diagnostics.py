"""Measurement machinery: variation norms, deviation bounds, entropy
residuals, rearrangements and semigroup stability ratios.

Everything here is a pure function of trajectories and fields; nothing
feeds back into the solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .core import DensityField, DomainError, ShapeError
from .kernel import AveragedField


class SupportError(ValueError):
    """A test function's support is not covered by the trajectory."""


class InsufficientDataError(ValueError):
    """Operation needs more snapshots than the trajectory carries."""


# ---------------------------------------------------------------------------
# variation and distance
# ---------------------------------------------------------------------------

def total_variation(f: DensityField) -> float:
    """Sum of absolute jumps between neighbouring cells.

    Periodic grids include the wrap-around pair, so a discretized closed
    profile measures its full variation.
    """
    v = f.values
    tv = float(np.sum(np.abs(np.diff(v))))
    if f.grid.periodic:
        tv += abs(float(v[0] - v[-1]))
    return tv


def l1_distance(f1: DensityField, f2: DensityField) -> float:
    if f1.grid != f2.grid:
        raise ShapeError("fields live on different grids")
    return float(np.sum(np.abs(f1.values - f2.values))) * f1.grid.dx


def kernel_deviation(rho: DensityField, q: AveragedField) -> tuple[float, float]:
    """L1 distance between the density and its average, with its bound.

    Returns (deviation, bound) where deviation = ||q - rho||_L1 and
    bound = eps * TV(rho).  The averaging kernel cannot displace more mass
    than eps per unit of variation, so deviation <= bound holds for every
    BV field; callers assert deviation <= bound * (1 + tol).
    """
    if rho.grid != q.grid:
        raise ShapeError("density and averaged field live on different grids")
    deviation = float(np.sum(np.abs(q.values - rho.values))) * rho.grid.dx
    bound = q.epsilon.epsilon * total_variation(rho)
    return deviation, bound


# ---------------------------------------------------------------------------
# space-time test functions and the entropy residual
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpTestFunction:
    """Nonnegative C^2 bump phi(t, x) with closed-form derivatives.

    phi = s(theta) * s(xi) with s(r) = (1 - r^2)^3 on |r| < 1, where
    theta = (t - center_t)/radius_t and xi = (x - center_x)/radius_x.
    The support is the rectangle |theta| <= 1, |xi| <= 1; phi and its
    first two derivatives vanish on its boundary.  Being a perfect cube
    of a nonnegative C^2 function is what the rearrangement argument
    behind the entropy estimate needs.
    """

    center_x: float
    center_t: float
    radius_x: float
    radius_t: float

    def __post_init__(self):
        if self.radius_x <= 0 or self.radius_t <= 0:
            raise DomainError("bump radii must be positive")

    @staticmethod
    def _s(r: np.ndarray) -> np.ndarray:
        inside = np.abs(r) < 1.0
        return np.where(inside, (1.0 - r * r) ** 3, 0.0)

    @staticmethod
    def _ds(r: np.ndarray) -> np.ndarray:
        inside = np.abs(r) < 1.0
        return np.where(inside, -6.0 * r * (1.0 - r * r) ** 2, 0.0)

    @staticmethod
    def _d2s(r: np.ndarray) -> np.ndarray:
        inside = np.abs(r) < 1.0
        rr = r * r
        return np.where(inside, (1.0 - rr) * (30.0 * rr - 6.0), 0.0)

    def _scaled(self, t, x):
        theta = (np.asarray(t, dtype=float) - self.center_t) / self.radius_t
        xi = (np.asarray(x, dtype=float) - self.center_x) / self.radius_x
        return theta, xi

    def phi(self, t, x) -> np.ndarray:
        theta, xi = self._scaled(t, x)
        return self._s(theta) * self._s(xi)

    def phi_t(self, t, x) -> np.ndarray:
        theta, xi = self._scaled(t, x)
        return self._ds(theta) / self.radius_t * self._s(xi)

    def phi_x(self, t, x) -> np.ndarray:
        theta, xi = self._scaled(t, x)
        return self._s(theta) * self._ds(xi) / self.radius_x

    def phi_xx(self, t, x) -> np.ndarray:
        theta, xi = self._scaled(t, x)
        return self._s(theta) * self._d2s(xi) / self.radius_x ** 2

    @property
    def t_support(self) -> tuple[float, float]:
        return (self.center_t - self.radius_t, self.center_t + self.radius_t)

    @property
    def x_support(self) -> tuple[float, float]:
        return (self.center_x - self.radius_x, self.center_x + self.radius_x)


def entropy_residual(traj, fe, phis) -> list[float]:
    """Weak-form entropy residual of a trajectory against bump functions.

    For each phi returns

        R(phi) = - sum_{n,i} [eta(rho) phi_t + psi(rho) phi_x](t*, x_i) dx dt

    with phi derivatives at time midpoints between adjacent snapshots, the
    entropy values averaged over the two snapshots (second order in time)
    and trapezoid summation in space.  phi is compactly supported inside
    the space-time window, so no boundary terms arise.  An entropy
    admissible evolution gives R(phi) <= 0 for phi >= 0, up to
    discretization; positive values measure entropy production.
    """
    snaps = traj.snapshots
    if len(snaps) < 2:
        raise InsufficientDataError("need at least two snapshots")
    times = np.array([s.t for s in snaps])
    grid = snaps[0].rho.grid
    x = grid.cell_centers()
    t_lo, t_hi = times[0], times[-1]

    eta_vals = np.stack([fe.eta(s.rho.values) for s in snaps])
    psi_vals = np.stack([fe.psi(s.rho.values) for s in snaps])

    results = []
    for phi in phis:
        lo, hi = phi.t_support
        if lo < t_lo - 1e-12 or hi > t_hi + 1e-12:
            raise SupportError(
                f"phi time support [{lo}, {hi}] exceeds trajectory window "
                f"[{t_lo}, {t_hi}]")
        xlo, xhi = phi.x_support
        if xlo < grid.x_min - 1e-12 or xhi > grid.x_max + 1e-12:
            raise SupportError(
                f"phi space support [{xlo}, {xhi}] exceeds the domain "
                f"[{grid.x_min}, {grid.x_max}]")
        covering = (times[1:] >= lo) & (times[:-1] <= hi)
        spacing = np.diff(times)[covering]
        if spacing.size and float(np.max(spacing)) > phi.radius_t / 16.0:
            raise SupportError(
                f"snapshot spacing {np.max(spacing):.3g} too coarse for "
                f"radius_t {phi.radius_t} (need <= radius_t/16)")

        acc = 0.0
        for n in range(len(snaps) - 1):
            dt = times[n + 1] - times[n]
            if dt <= 0:
                continue
            t_mid = 0.5 * (times[n] + times[n + 1])
            eta_mid = 0.5 * (eta_vals[n] + eta_vals[n + 1])
            psi_mid = 0.5 * (psi_vals[n] + psi_vals[n + 1])
            integrand = (eta_mid * phi.phi_t(t_mid, x)
                         + psi_mid * phi.phi_x(t_mid, x))
            acc += float(np.sum(integrand)) * grid.dx * dt
        results.append(-acc)
    return results


# ---------------------------------------------------------------------------
# rearrangements
# ---------------------------------------------------------------------------

def _center_out_order(n: int) -> np.ndarray:
    """Indices ordered by distance from the center, right before left on ties."""
    center = n // 2
    idx = np.arange(n)
    dist = np.abs(idx - center)
    right_first = np.where(idx >= center, 0, 1)
    return idx[np.lexsort((right_first, dist))]


def symmetric_rearrangement(g) -> np.ndarray:
    """Symmetric decreasing rearrangement of a nonnegative sequence.

    Values are sorted descending and placed center-out (largest at index
    n//2, then alternating right/left, right first on ties).  The output is
    a permutation of the input, nondecreasing up to the peak and
    nonincreasing after it.
    """
    arr = np.asarray(g, dtype=float)
    if arr.ndim != 1:
        raise ShapeError("expected a 1-D sequence")
    if arr.size and float(np.min(arr)) < 0.0:
        raise DomainError("rearrangement requires nonnegative entries")
    out = np.empty_like(arr)
    out[_center_out_order(arr.size)] = np.sort(arr)[::-1]
    return out


def hardy_littlewood_gap(g1, g2) -> float:
    """How much the rearranged inner product exceeds the raw one.

    Returns sum(g1* g2*) - sum(g1 g2) where * is the symmetric decreasing
    rearrangement.  Both rearrangements use the same center-out placement,
    so the rearranged product pairs k-th largest with k-th largest; the gap
    is therefore nonnegative and the rearranged sum is the maximum of
    sum(g1 * permuted g2) over all permutations.
    """
    a = np.asarray(g1, dtype=float)
    b = np.asarray(g2, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size and (float(np.min(a)) < 0.0 or float(np.min(b)) < 0.0):
        raise DomainError("rearrangement requires nonnegative entries")
    raw = float(np.dot(a, b))
    rearranged = float(np.dot(symmetric_rearrangement(a),
                              symmetric_rearrangement(b)))
    return rearranged - raw


def max_permuted_product(g1, g2) -> float:
    """Brute-force max of sum(g1 * permuted g2); exponential, keep inputs short."""
    a = np.asarray(g1, dtype=float)
    best = -math.inf
    for perm in permutations(np.asarray(g2, dtype=float)):
        best = max(best, float(np.dot(a, perm)))
    return best


def shifted_product_check(h, shift: int) -> tuple[float, float]:
    """Compare sum h(i)^2 h(i+shift) against sum h(i)^3, cyclically.

    The level sets of h^2 and h coincide, so the aligned (shift 0) product
    dominates every shifted one: lhs <= rhs for all shifts.
    """
    arr = np.asarray(h, dtype=float)
    if arr.size and float(np.min(arr)) < 0.0:
        raise DomainError("shifted_product_check requires nonnegative entries")
    shifted = np.roll(arr, -int(shift))
    lhs = float(np.sum(arr * arr * shifted))
    rhs = float(np.sum(arr * arr * arr))
    return lhs, rhs


# ---------------------------------------------------------------------------
# semigroup stability
# ---------------------------------------------------------------------------

def stability_gap(traj1, traj2) -> tuple[float, np.ndarray, np.ndarray]:
    """Growth of an initial L1 perturbation along two trajectories.

    ratio(t) = ||rho1(t) - rho2(t)||_L1 / ||rho1(0) - rho2(0)||_L1,
    evaluated at the common snapshot times.  Returns
    (sup_ratio, times, ratios); ratio(0) is 1 by construction.  The
    semigroup is L1-Lipschitz with a time-dependent constant, so the sup
    is reported, never asserted against a universal bound.
    """
    s1, s2 = traj1.snapshots, traj2.snapshots
    if len(s1) != len(s2):
        raise ShapeError("trajectories carry different snapshot counts")
    t1 = np.array([s.t for s in s1])
    t2 = np.array([s.t for s in s2])
    if not np.array_equal(t1, t2):
        raise ShapeError("trajectories sampled at different times")
    if s1[0].rho.grid != s2[0].rho.grid:
        raise ShapeError("trajectories live on different grids")
    denom = l1_distance(s1[0].rho, s2[0].rho)
    if denom == 0.0:
        raise DomainError("initial data are identical; ratio is undefined")
    ratios = np.array([l1_distance(a.rho, b.rho) / denom
                       for a, b in zip(s1, s2)])
    return float(np.max(ratios)), t1, ratios


# ---------------------------------------------------------------------------
# named metric bundles
# ---------------------------------------------------------------------------

@dataclass
class DiagnosticsReport:
    """Named scalar metrics with a short provenance string for each."""

    metrics: dict[str, float] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)

    def add(self, name: str, value: float, provenance: str = ""):
        value = float(value)
        if not np.isfinite(value):
            raise DomainError(f"metric {name!r} is not finite: {value}")
        self.metrics[name] = value
        if provenance:
            self.provenance[name] = provenance

    def as_dict(self) -> dict:
        return {"metrics": dict(self.metrics),
                "provenance": dict(self.provenance)}
