"""Relaxation-system view of the nonlocal model.

In tilted coordinates tau = t - x/K, y = x (with a constant K > v(0)) the
density/average pair becomes a strictly hyperbolic 2x2 system with a stiff
source.  With the dependent variables

    u = ln rho,            z = ln(K - v(q)),

the system is diagonal:

    u_tau + K (K e^{-z} - 1) u_y =  (K/eps) Lambda(u, z),
    z_tau - K z_y               = -(K/eps) Lambda(u, z),

    Lambda(u, z) = (e^u - q(z)) * v'(q(z)) / (K - v(q(z))),
    q(z) = v_inverse(K - e^z).

The frozen characteristic speeds are lambda1 = -K and
lambda2 = K v(q)/(K - v(q)); the equilibrium manifold is z = g(u) with
g(u) = ln(K - v(e^u)), on which the dynamics reduce to the local
conservation law with speed lambda* = K f'/(K - f').  This module holds
the coordinate machinery, the stability condition checks, a monitor for
the tilted total variation, and an IMEX integrator for the system used to
cross-validate the physical solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (BlowupError, CheckResult, DensityField, DomainError,
                   Grid, KernelScale, NumericsError, PositivityError,
                   SolverConfig, VelocityModel)
from .kernel import AveragedField, edge_to_center
from .trajectory import DtSummary, Trajectory


class FrameError(ValueError):
    """Relaxation frame parameters are inconsistent (needs K > v(0))."""


class SourceBandError(ValueError):
    """z left the band [ln(K - v(0)), ln K] where q(z) is defined."""


class StiffSourceError(NumericsError):
    """Implicit source solve failed to converge in a cell."""


_BAND_SLACK = 1e-9


@dataclass(frozen=True)
class RelaxationFrame:
    """Tilt speed K, kernel scale and velocity model, with K > v(0)."""

    K: float
    eps: KernelScale
    model: VelocityModel

    def __post_init__(self):
        v0 = self.model.v_max
        if not self.K > v0:
            raise FrameError(
                f"K = {self.K} must strictly exceed v(0) = {v0}")

    @property
    def z_band(self) -> tuple[float, float]:
        """Admissible z interval [ln(K - v(0)), ln K]."""
        return (math.log(self.K - self.model.v_max), math.log(self.K))


@dataclass(frozen=True)
class UZFields:
    """Logarithmic variables u = ln rho and z = ln(K - v(q)) on a grid."""

    grid: Grid
    u: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if u.shape != (self.grid.n_cells,) or z.shape != (self.grid.n_cells,):
            from .core import ShapeError
            raise ShapeError("u, z must have one value per grid cell")
        u, z = u.copy(), z.copy()
        u.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "z", z)


# ---------------------------------------------------------------------------
# speeds and stability conditions
# ---------------------------------------------------------------------------

def speeds(q_value: float, frame: RelaxationFrame) -> tuple[float, float]:
    """Frozen characteristic speeds (lambda1, lambda2) at average q."""
    if not (0.0 <= q_value <= frame.model.rho_jam):
        raise DomainError(
            f"q = {q_value} outside [0, {frame.model.rho_jam}]")
    vq = float(frame.model.v(q_value))
    if frame.K <= vq:
        raise FrameError(f"K = {frame.K} <= v(q) = {vq}")
    return (-frame.K, frame.K * vq / (frame.K - vq))


def equilibrium_speed(rho: float, frame: RelaxationFrame) -> float:
    """Equilibrium characteristic speed lambda* = K f'/(K - f')."""
    model = frame.model
    if not (0.0 <= rho <= model.rho_jam):
        raise DomainError(f"rho = {rho} outside [0, {model.rho_jam}]")
    df = float(model.v(rho) + rho * model.dv(rho))
    if frame.K <= df:
        # unreachable when K > v(0) >= f', guarded all the same
        raise FrameError(f"K = {frame.K} <= f'(rho) = {df}")
    return frame.K * df / (frame.K - df)


@dataclass(frozen=True)
class SubcharacteristicReport:
    n_samples: int
    min_margin_lower: float   # min over samples of lambda* - lambda1
    min_margin_upper: float   # min over samples of lambda2 - lambda*
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def check_subcharacteristic(frame: RelaxationFrame,
                            n_samples: int) -> SubcharacteristicReport:
    """Verify lambda1 < lambda* < lambda2 at equilibrium (rho = q).

    Samples the open midpoint lattice rho_j = (j + 1/2) rho_jam / n.
    The vacuum endpoint rho = 0 is deliberately excluded: there f' = v(0)
    exactly, so lambda* and lambda2 coincide and the upper margin
    degenerates to zero; strict separation holds on (0, rho_jam].
    """
    if n_samples < 2:
        raise DomainError(f"need n_samples >= 2, got {n_samples}")
    rho = (np.arange(n_samples) + 0.5) * frame.model.rho_jam / n_samples
    lam_star = np.array([equilibrium_speed(float(r), frame) for r in rho])
    lam2 = np.array([speeds(float(r), frame)[1] for r in rho])
    lower = lam_star + frame.K
    upper = lam2 - lam_star
    min_lower = float(np.min(lower))
    min_upper = float(np.min(upper))
    checks = (
        CheckResult("lambda_star_above_lambda1", min_lower > 0.0, min_lower,
                    f"min(lambda* - lambda1) = {min_lower:.6g}"),
        CheckResult("lambda_star_below_lambda2", min_upper > 0.0, min_upper,
                    f"min(lambda2 - lambda*) = {min_upper:.6g}"),
    )
    return SubcharacteristicReport(n_samples, min_lower, min_upper, checks)


@dataclass(frozen=True)
class BVConditionReport:
    """Verdicts on the variation-monotonicity conditions.

    ``range_margin`` is the slack of the range-restricted condition
    min |v'| >= (rho2 - rho1)(||v''|| + ||v'||^2/(K - ||v||)); it controls
    whether the tilted total variation is non-increasing on data confined
    to [rho1, rho2].  ``uniform_margin`` is min |v'| - rho_jam ||v''||, the
    K-independent version.  For affine models ``min_K_affine`` is the
    smallest K for which the range condition holds on the full density
    range.  ``lambda_u_max`` / ``lambda_z_min`` are finite-difference
    extrema of the source partials over the sampled band (need
    Lambda_u <= 0 <= Lambda_z).
    """

    rho_range: tuple[float, float]
    range_margin: float
    uniform_margin: float
    min_K_affine: float | None
    lambda_u_max: float
    lambda_z_min: float
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def check_bv_conditions(frame: RelaxationFrame,
                        rho_range: tuple[float, float],
                        n_samples: int = 513) -> BVConditionReport:
    model = frame.model
    rho1, rho2 = float(rho_range[0]), float(rho_range[1])
    if not (0.0 <= rho1 < rho2 <= model.rho_jam):
        raise DomainError(
            f"need 0 <= rho1 < rho2 <= rho_jam, got ({rho1}, {rho2})")

    full = np.linspace(0.0, model.rho_jam, n_samples)
    sub = np.linspace(rho1, rho2, n_samples)
    v_sup = float(np.max(np.abs(model.v(full))))
    dv_sup = float(np.max(np.abs(model.dv(full))))
    d2v_sup = float(np.max(np.abs(model.d2v(full))))
    dv_min_sub = float(np.min(np.abs(model.dv(sub))))
    dv_min_full = float(np.min(np.abs(model.dv(full))))

    range_rhs = (rho2 - rho1) * (d2v_sup + dv_sup ** 2 / (frame.K - v_sup))
    range_margin = dv_min_sub - range_rhs
    uniform_margin = dv_min_full - model.rho_jam * d2v_sup

    min_k = None
    affine_checks = ()
    if model.is_affine:
        # rho_jam ||v'||^2 / (K - ||v||) <= min |v'| solved for K
        min_k = v_sup + model.rho_jam * dv_sup ** 2 / dv_min_full
        affine_margin = dv_min_full - model.rho_jam * dv_sup ** 2 \
            / (frame.K - v_sup)
        affine_checks = (CheckResult(
            "affine_full_range", affine_margin >= 0.0, affine_margin,
            f"holds for K >= {min_k:.6g}; margin {affine_margin:.6g}"),)

    lam_u_max, lam_z_min = _source_partial_extrema(frame, rho1, rho2)

    checks = (
        CheckResult("range_condition", range_margin >= 0.0, range_margin,
                    f"min|v'| - rhs = {range_margin:.6g}"),
        CheckResult("uniform_condition", uniform_margin > 0.0, uniform_margin,
                    f"min|v'| - rho_jam ||v''|| = {uniform_margin:.6g}"),
        CheckResult("source_u_sign", lam_u_max <= 1e-8, -lam_u_max,
                    f"max Lambda_u = {lam_u_max:.6g} (need <= 0)"),
        CheckResult("source_z_sign", lam_z_min >= -1e-8, lam_z_min,
                    f"min Lambda_z = {lam_z_min:.6g} (need >= 0)"),
    ) + affine_checks
    return BVConditionReport(
        rho_range=(rho1, rho2), range_margin=range_margin,
        uniform_margin=uniform_margin, min_K_affine=min_k,
        lambda_u_max=lam_u_max, lambda_z_min=lam_z_min, checks=checks)


def _source_partial_extrema(frame: RelaxationFrame, rho1: float, rho2: float,
                            n: int = 33) -> tuple[float, float]:
    """Finite-difference extrema of Lambda_u, Lambda_z over a (u, z) lattice."""
    model = frame.model
    rho_lo = max(rho1, 1e-8 * model.rho_jam)
    u_grid = np.log(np.linspace(rho_lo, rho2, n))
    q_grid = np.linspace(max(rho1, 1e-12), rho2, n)
    z_grid = np.log(frame.K - model.v(q_grid))
    uu, zz = np.meshgrid(u_grid, z_grid, indexing="ij")
    h = 1e-6
    lam_up = _source_value(uu + h, zz, frame)
    lam_um = _source_value(uu - h, zz, frame)
    lam_zp = _source_value(uu, zz + h, frame)
    lam_zm = _source_value(uu, zz - h, frame)
    lam_u = (lam_up - lam_um) / (2 * h)
    lam_z = (lam_zp - lam_zm) / (2 * h)
    return float(np.max(lam_u)), float(np.min(lam_z))


# ---------------------------------------------------------------------------
# coordinate maps and the source term
# ---------------------------------------------------------------------------

def to_uz(rho: DensityField, q: AveragedField,
          frame: RelaxationFrame) -> UZFields:
    """Map (rho, q) to the logarithmic variables (u, z).

    Entries are paired index-wise; requires uniformly positive rho.
    exp(u) recovers rho and K - exp(z) recovers v(q) exactly.
    """
    if rho.grid != q.grid:
        from .core import ShapeError
        raise ShapeError("density and averaged field live on different grids")
    if float(np.min(rho.values)) <= 0.0:
        raise PositivityError(
            "u = ln(rho) needs uniformly positive density")
    vq = frame.model.v(q.values)
    if float(np.max(vq)) >= frame.K:
        raise FrameError("K must exceed v(q) everywhere")
    return UZFields(rho.grid, np.log(rho.values), np.log(frame.K - vq))


def from_uz(uz: UZFields, frame: RelaxationFrame
            ) -> tuple[np.ndarray, np.ndarray]:
    """Invert the logarithmic map: returns (rho, q) cell arrays."""
    rho = np.exp(uz.u)
    q = frame.model.v_inverse(frame.K - np.exp(uz.z))
    return rho, q


def _source_value(u, z, frame: RelaxationFrame) -> np.ndarray:
    model = frame.model
    q = np.clip(model.v_inverse(frame.K - np.exp(z)), 0.0, model.rho_jam)
    vq = model.v(q)
    return (np.exp(u) - q) * model.dv(q) / (frame.K - vq)


def equilibrium_z(u, frame: RelaxationFrame) -> np.ndarray:
    """Monotone equilibrium map g(u) = ln(K - v(e^u))."""
    return np.log(frame.K - frame.model.v(np.exp(u)))


def lambda_source(u: float, z: float,
                  frame: RelaxationFrame) -> tuple[float, float]:
    """Source strength Lambda(u, z) and the equilibrium value g(u).

    Lambda vanishes exactly on z = g(u); its sign drives z toward
    equilibrium.  z must lie in the band [ln(K - v(0)), ln K] where
    q(z) = v_inverse(K - e^z) is defined.
    """
    lo, hi = frame.z_band
    if not (lo - _BAND_SLACK <= z <= hi + _BAND_SLACK):
        raise SourceBandError(
            f"z = {z} outside the admissible band [{lo:.6g}, {hi:.6g}]")
    rho = math.exp(u)
    if rho > frame.model.rho_jam * (1.0 + 1e-12):
        raise DomainError(
            f"exp(u) = {rho} exceeds rho_jam = {frame.model.rho_jam}")
    lam = float(_source_value(u, z, frame))
    return lam, float(equilibrium_z(u, frame))


def _source_partials(u: np.ndarray, z: np.ndarray, frame: RelaxationFrame
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Lambda, Lambda_u, Lambda_z) evaluated cellwise, closed form."""
    model = frame.model
    ez = np.exp(z)
    q = np.clip(model.v_inverse(frame.K - ez), 0.0, model.rho_jam)
    vq = model.v(q)
    dvq = model.dv(q)
    d2vq = model.d2v(q)
    denom = frame.K - vq
    rho = np.exp(u)
    lam = (rho - q) * dvq / denom
    lam_u = rho * dvq / denom
    lam_q = ((rho - q) * (d2vq + dvq * dvq / denom) - dvq) / denom
    lam_z = lam_q * (-ez / dvq)
    return lam, lam_u, lam_z


# ---------------------------------------------------------------------------
# tilted total-variation monitor
# ---------------------------------------------------------------------------

def _time_derivative(prev, cur, nxt, h1: float, h2: float) -> np.ndarray:
    """Three-point centered derivative on possibly uneven spacing."""
    return (nxt * h1 * h1 - prev * h2 * h2 + cur * (h2 * h2 - h1 * h1)) \
        / (h1 * h2 * (h1 + h2))


def _space_derivative(values: np.ndarray, grid) -> np.ndarray:
    if grid.periodic:
        return (np.roll(values, -1) - np.roll(values, 1)) / (2.0 * grid.dx)
    padded = np.concatenate([values[:1], values, values[-1:]])
    return (padded[2:] - padded[:-2]) / (2.0 * grid.dx)


def transformed_tv(traj: Trajectory, frame: RelaxationFrame
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Tilted total variation ||u_y||_L1 + ||z_y||_L1 along a trajectory.

    The tilted derivative is d_y = d_x + K^{-1} d_t.  Spatial parts use
    centered differences; time parts use three-point differencing across
    neighbouring snapshots, so only interior snapshot times are reported.
    When the variation-monotonicity conditions hold this series is
    non-increasing for exact solutions; discretization can perturb it by
    a few per cent, shrinking under refinement.
    """
    snaps = traj.snapshots
    if len(snaps) < 3:
        from .diagnostics import InsufficientDataError
        raise InsufficientDataError(
            "transformed_tv needs at least three snapshots")
    grid = snaps[0].rho.grid
    times = np.array([s.t for s in snaps])

    u_levels, z_levels = [], []
    for s in snaps:
        if s.q is None:
            raise DomainError("trajectory snapshots carry no averaged field")
        uz = to_uz(s.rho, s.q, frame)
        u_levels.append(uz.u)
        z_levels.append(uz.z)

    out_t, out_v = [], []
    for m in range(1, len(snaps) - 1):
        h1 = times[m] - times[m - 1]
        h2 = times[m + 1] - times[m]
        u_t = _time_derivative(u_levels[m - 1], u_levels[m], u_levels[m + 1],
                               h1, h2)
        z_t = _time_derivative(z_levels[m - 1], z_levels[m], z_levels[m + 1],
                               h1, h2)
        u_y = _space_derivative(u_levels[m], grid) + u_t / frame.K
        z_y = _space_derivative(z_levels[m], grid) + z_t / frame.K
        total = (np.sum(np.abs(u_y)) + np.sum(np.abs(z_y))) * grid.dx
        out_t.append(times[m])
        out_v.append(float(total))
    return np.array(out_t), np.array(out_v)


# ---------------------------------------------------------------------------
# IMEX integrator for the tilted system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UZSnapshot:
    tau: float
    fields: UZFields


@dataclass(frozen=True)
class RelaxationTrajectory:
    frame: RelaxationFrame
    snapshots: tuple[UZSnapshot, ...]
    step_count: int
    dt_summary: DtSummary
    newton_iterations_max: int

    @property
    def final(self) -> UZSnapshot:
        return self.snapshots[-1]


def _implicit_source(u_star: np.ndarray, total: np.ndarray, c: float,
                     frame: RelaxationFrame, tol: float,
                     max_iter: int) -> tuple[np.ndarray, int]:
    """Solve U = u_star + c*Lambda(U, total - U) cellwise.

    The source moves (u, z) along lines of constant u + z, so the solve is
    scalar per cell.  Newton with iterates clamped to the band, then
    bisection for any stragglers; the residual derivative is
    1 - c (Lambda_u - Lambda_z) >= 1 whenever the sign conditions hold,
    which keeps Newton safe even for c >> 1.
    """
    lo = total - math.log(frame.K)
    hi = total - math.log(frame.K - frame.model.v_max)
    U = np.clip(u_star, lo, hi)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        lam, lam_u, lam_z = _source_partials(U, total - U, frame)
        resid = U - u_star - c * lam
        slope = 1.0 - c * (lam_u - lam_z)
        step = resid / slope
        U = np.clip(U - step, lo, hi)
        if float(np.max(np.abs(resid))) < tol:
            return U, iterations

    lam, _, _ = _source_partials(U, total - U, frame)
    resid = U - u_star - c * lam
    bad = np.abs(resid) >= tol
    for i in np.nonzero(bad)[0]:
        U[i] = _bisect_cell(float(u_star[i]), float(total[i]), c, frame,
                            float(lo[i]), float(hi[i]), tol, i)
    return U, max_iter


def _bisect_cell(u_star: float, total: float, c: float,
                 frame: RelaxationFrame, lo: float, hi: float,
                 tol: float, cell: int) -> float:
    def resid(val: float) -> float:
        lam = float(_source_value(val, total - val, frame))
        return val - u_star - c * lam

    r_lo, r_hi = resid(lo), resid(hi)
    if r_lo > 0.0 or r_hi < 0.0:
        raise StiffSourceError(
            f"source solve failed in cell {cell}: no sign change on the "
            f"band, residuals ({r_lo:.3e}, {r_hi:.3e})")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r_mid = resid(mid)
        if abs(r_mid) < tol:
            return mid
        if r_mid > 0.0:
            hi = mid
        else:
            lo = mid
    raise StiffSourceError(
        f"source solve failed in cell {cell}: bisection stalled at "
        f"residual {r_mid:.3e}")


def solve_relaxation(initial: UZFields, frame: RelaxationFrame,
                     config: SolverConfig, newton_tol: float = 1e-12,
                     newton_max_iter: int = 50) -> RelaxationTrajectory:
    """IMEX march of the tilted system over tau in [0, t_final].

    Transport is explicit upwind: u moves right with speed
    K(K e^{-z} - 1) >= 0 (fed from the left), z moves left with speed K
    (fed from the right).  The stiff source is implicit Euler; u + z is
    invariant under the source, reducing it to a per-cell scalar solve.
    dtau obeys the CFL bound on max(K, transport speed) and lands exactly
    on requested snapshot times.
    """
    grid = initial.grid
    lo, hi = frame.z_band
    if (float(np.min(initial.z)) < lo - _BAND_SLACK
            or float(np.max(initial.z)) > hi + _BAND_SLACK):
        raise SourceBandError("initial z leaves the admissible band")

    emit = config.emission_times()
    u = initial.u.copy()
    z = initial.z.copy()
    snapshots = [UZSnapshot(0.0, UZFields(grid, u, z))]
    tau = 0.0
    steps = 0
    newton_max_seen = 0
    dt_min, dt_max, dt_sum = np.inf, 0.0, 0.0
    K = frame.K
    ratio_eps = K / frame.eps.epsilon

    for target in emit[1:]:
        while tau < target - 1e-14 * max(1.0, target):
            speed_u = K * (K * np.exp(-z) - 1.0)
            top_speed = max(K, float(np.max(speed_u)))
            dtau = min(config.cfl * grid.dx / top_speed, target - tau)
            if dtau < 1e-14:
                from .core import TimeStepCollapse
                raise TimeStepCollapse(
                    f"dtau = {dtau:.3e} at tau = {tau:.6g}")

            if grid.periodic:
                u_left = np.roll(u, 1)
                z_right = np.roll(z, -1)
            else:
                u_left = np.concatenate([u[:1], u[:-1]])
                z_right = np.concatenate([z[1:], z[-1:]])
            u_star = u - (dtau / grid.dx) * speed_u * (u - u_left)
            z_star = z + (dtau / grid.dx) * K * (z_right - z)

            total = u_star + z_star
            u, its = _implicit_source(u_star, total, dtau * ratio_eps,
                                      frame, newton_tol, newton_max_iter)
            z = total - u
            newton_max_seen = max(newton_max_seen, its)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(z))):
                raise BlowupError(f"non-finite state at step {steps}")

            tau += dtau
            steps += 1
            dt_min, dt_max = min(dt_min, dtau), max(dt_max, dtau)
            dt_sum += dtau
        tau = target
        snapshots.append(UZSnapshot(tau, UZFields(grid, u, z)))

    return RelaxationTrajectory(
        frame=frame, snapshots=tuple(snapshots), step_count=steps,
        dt_summary=DtSummary.collect(steps, dt_min, dt_max, dt_sum),
        newton_iterations_max=newton_max_seen)


# ---------------------------------------------------------------------------
# slanted-slice sampling of a physical trajectory
# ---------------------------------------------------------------------------

def physical_slice(traj: Trajectory, K: float, tau: float
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Sample a physical-time trajectory along the line t = tau + x/K.

    A constant-tau slice of the tilted coordinates is exactly such a
    slanted line in (t, x).  Returns per-cell (rho, q) with q evaluated at
    cell centers, linearly interpolated in time between snapshots; the
    trajectory must cover the whole line and carry averaged fields.
    """
    snaps = traj.snapshots
    times = np.array([s.t for s in snaps])
    grid = snaps[0].rho.grid
    x = grid.cell_centers()
    t_slice = tau + x / K
    if (float(np.min(t_slice)) < times[0] - 1e-12
            or float(np.max(t_slice)) > times[-1] + 1e-12):
        raise DomainError(
            f"slice times [{t_slice.min():.6g}, {t_slice.max():.6g}] not "
            f"covered by snapshots [{times[0]:.6g}, {times[-1]:.6g}]")
    if any(s.q is None for s in snaps):
        raise DomainError("trajectory snapshots carry no averaged field")

    rho_levels = np.stack([s.rho.values for s in snaps])
    qc_levels = np.stack([edge_to_center(s.rho, s.q) for s in snaps])

    idx = np.clip(np.searchsorted(times, t_slice, side="right") - 1,
                  0, len(times) - 2)
    cols = np.arange(grid.n_cells)
    w = (t_slice - times[idx]) / (times[idx + 1] - times[idx])
    w = np.clip(w, 0.0, 1.0)
    rho = (1.0 - w) * rho_levels[idx, cols] + w * rho_levels[idx + 1, cols]
    qc = (1.0 - w) * qc_levels[idx, cols] + w * qc_levels[idx + 1, cols]
    return rho, qc
