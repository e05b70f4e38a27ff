"""Time-ordered solution records shared by all solvers."""

from __future__ import annotations

from dataclasses import dataclass

from .core import DensityField, DomainError, KernelScale, VelocityModel
from .kernel import AveragedField


@dataclass(frozen=True)
class Snapshot:
    t: float
    rho: DensityField
    q: AveragedField | None = None


@dataclass(frozen=True)
class DtSummary:
    count: int
    min: float
    max: float
    mean: float

    @staticmethod
    def collect(count: int, dt_min: float, dt_max: float,
                dt_sum: float) -> "DtSummary":
        if count == 0:
            return DtSummary(0, 0.0, 0.0, 0.0)
        return DtSummary(count, dt_min, dt_max, dt_sum / count)


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of one solve, plus per-run bookkeeping.

    ``rho_min_seen`` / ``rho_max_seen`` track the extrema over EVERY step
    taken, not just the recorded snapshots, so range-preservation can be
    checked without storing the whole history.  ``eps`` is None for the
    local reference solver.
    """

    model: VelocityModel
    eps: KernelScale | None
    snapshots: tuple[Snapshot, ...]
    step_count: int
    dt_summary: DtSummary
    rho_min_seen: float
    rho_max_seen: float

    def __post_init__(self):
        times = [s.t for s in self.snapshots]
        if not times or times[0] != 0.0:
            raise DomainError("first snapshot must be at t = 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DomainError("snapshot times must increase strictly")

    @property
    def times(self) -> list[float]:
        return [s.t for s in self.snapshots]

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    def at_time(self, t: float, tol: float = 1e-12) -> Snapshot:
        for snap in self.snapshots:
            if abs(snap.t - t) <= tol:
                return snap
        raise DomainError(f"no snapshot at t = {t}")
