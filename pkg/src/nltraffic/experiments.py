"""Experiment orchestration: config documents, runs, sweeps, comparisons,
condition checks, and CSV/JSON reporting.

Config documents are flat ``key = value`` text with dotted sections,
``#`` comments and blank lines; lists are comma separated.  The full key
table lives in the README.  Documents are canonicalized and hashed so a
report can always be traced back to its exact configuration.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .core import (Bump, DensityField, DomainError, Grid, KernelScale,
                   MonotoneRamp, NumericsError, Riemann, Sine, SolverConfig,
                   VelocityModel, make_initial, validate_model)
from .diagnostics import (BumpTestFunction, DiagnosticsReport,
                          entropy_residual, kernel_deviation, l1_distance,
                          total_variation)
from .kernel import TRUNCATION_WIDTHS
from .local_lwr import FluxEntropyModel, solve_local
from .nonlocal_fv import solve_nonlocal
from .relaxation import (RelaxationFrame, UZFields, check_bv_conditions,
                         check_subcharacteristic, physical_slice,
                         solve_relaxation)

SWEEP_CSV_COLUMNS = ("epsilon", "l1_to_reference", "tv_final", "tv_bound",
                     "maxp_margin", "kdev_margin", "entropy_pos_part",
                     "runtime_seconds")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

_KINDS = ("run", "sweep", "compare", "check")
_PRESETS = ("riemann", "bump", "sine", "monotone_ramp")

_KNOWN_KEYS = {
    "experiment.kind", "model.kind", "model.a", "model.b",
    "grid.x_min", "grid.x_max", "grid.n_cells", "grid.boundary",
    "initial.preset", "initial.rho_left", "initial.rho_right",
    "initial.x0", "initial.x1", "initial.base", "initial.amplitude",
    "initial.center", "initial.width", "initial.mean", "initial.wavelength",
    "kernel.epsilon", "sweep.epsilons", "solver.cfl", "solver.t_final",
    "solver.snapshots", "relaxation.K", "compare.with_relaxation",
    "output.dir",
}

_REQUIRED_KEYS = ("experiment.kind", "model.kind", "grid.x_min",
                  "grid.x_max", "grid.n_cells", "initial.preset",
                  "solver.t_final")


def _parse_pairs(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _get_float(pairs, key, default=None) -> float:
    if key not in pairs:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return float(pairs[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not a number: {pairs[key]!r}") from exc


def _get_int(pairs, key) -> int:
    if key not in pairs:
        raise ConfigError(f"missing required key {key!r}")
    try:
        return int(pairs[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not an integer: {pairs[key]!r}") from exc


def _get_floats(pairs, key) -> tuple[float, ...]:
    if key not in pairs:
        raise ConfigError(f"missing required key {key!r}")
    try:
        return tuple(float(tok) for tok in pairs[key].split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not a number list: {pairs[key]!r}") from exc


def _get_bool(pairs, key, default: bool) -> bool:
    if key not in pairs:
        return default
    token = pairs[key].lower()
    if token in ("true", "yes", "1"):
        return True
    if token in ("false", "no", "0"):
        return False
    raise ConfigError(f"key {key!r}: not a boolean: {pairs[key]!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model: VelocityModel
    grid: Grid
    preset: object
    solver: SolverConfig
    epsilon: float | None
    epsilons: tuple[float, ...]
    relaxation_K: float
    with_relaxation: bool
    out_dir: str
    config_hash: str
    canonical_text: str

    def initial_field(self) -> DensityField:
        return make_initial(self.grid, self.preset, rho_jam=self.model.rho_jam)


def _build_preset(pairs) -> object:
    name = pairs.get("initial.preset")
    if name not in _PRESETS:
        raise ConfigError(
            f"initial.preset must be one of {_PRESETS}, got {name!r}")
    if name == "riemann":
        return Riemann(_get_float(pairs, "initial.rho_left"),
                       _get_float(pairs, "initial.rho_right"),
                       _get_float(pairs, "initial.x0"))
    if name == "bump":
        return Bump(_get_float(pairs, "initial.base"),
                    _get_float(pairs, "initial.amplitude"),
                    _get_float(pairs, "initial.center"),
                    _get_float(pairs, "initial.width"))
    if name == "sine":
        return Sine(_get_float(pairs, "initial.mean"),
                    _get_float(pairs, "initial.amplitude"),
                    _get_float(pairs, "initial.wavelength"))
    return MonotoneRamp(_get_float(pairs, "initial.rho_left"),
                        _get_float(pairs, "initial.rho_right"),
                        _get_float(pairs, "initial.x0"),
                        _get_float(pairs, "initial.x1"))


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a config document.

    Unknown keys, missing keys, out-of-domain values and inconsistent
    combinations (non-decreasing sweep epsilons, K <= v(0) with relaxation
    diagnostics requested) are all rejected here, before any computation.
    """
    pairs = _parse_pairs(text)
    for key in _REQUIRED_KEYS:
        if key not in pairs:
            raise ConfigError(f"missing required key {key!r}")

    kind = pairs["experiment.kind"]
    if kind not in _KINDS:
        raise ConfigError(
            f"experiment.kind must be one of {_KINDS}, got {kind!r}")

    if pairs["model.kind"] != "affine":
        raise ConfigError(
            "config documents support model.kind = affine only; custom "
            "models are available through the library API")
    model = VelocityModel.affine(_get_float(pairs, "model.a", 1.0),
                                 _get_float(pairs, "model.b", 1.0))

    try:
        grid = Grid(_get_float(pairs, "grid.x_min"),
                    _get_float(pairs, "grid.x_max"),
                    _get_int(pairs, "grid.n_cells"),
                    pairs.get("grid.boundary", "periodic"))
        preset = _build_preset(pairs)
        solver = SolverConfig(
            t_final=_get_float(pairs, "solver.t_final"),
            cfl=_get_float(pairs, "solver.cfl", 0.5),
            snapshot_times=_get_floats(pairs, "solver.snapshots")
            if "solver.snapshots" in pairs else ())
        make_initial(grid, preset, rho_jam=model.rho_jam)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc

    epsilon = (_get_float(pairs, "kernel.epsilon")
               if "kernel.epsilon" in pairs else None)
    epsilons: tuple[float, ...] = ()
    if kind == "sweep":
        epsilons = _get_floats(pairs, "sweep.epsilons")
        if not epsilons:
            raise ConfigError("sweep.epsilons must not be empty")
        if any(e <= 0 for e in epsilons):
            raise ConfigError("sweep.epsilons must be strictly positive")
        if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
            raise ConfigError("sweep.epsilons must be strictly decreasing")
    elif kind in ("run", "compare") and epsilon is None:
        raise ConfigError(f"kind {kind!r} needs kernel.epsilon")
    if epsilon is not None and epsilon <= 0:
        raise ConfigError("kernel.epsilon must be positive")

    relaxation_k = _get_float(pairs, "relaxation.K", 2.0 * model.v_max)
    with_relaxation = _get_bool(pairs, "compare.with_relaxation", False)
    if (kind == "check" or with_relaxation) and relaxation_k <= model.v_max:
        raise ConfigError(
            f"relaxation.K = {relaxation_k} must strictly exceed "
            f"v(0) = {model.v_max}")

    canonical = "\n".join(f"{k} = {pairs[k]}" for k in sorted(pairs)) + "\n"
    digest = hashlib.sha256(canonical.encode()).hexdigest()

    return ExperimentConfig(
        kind=kind, model=model, grid=grid, preset=preset, solver=solver,
        epsilon=epsilon, epsilons=epsilons, relaxation_K=relaxation_k,
        with_relaxation=with_relaxation,
        out_dir=pairs.get("output.dir", "out"),
        config_hash=digest, canonical_text=canonical)


# ---------------------------------------------------------------------------
# sweep rows and reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    l1_to_reference: float
    tv_final: float
    tv_bound: float
    maxp_margin: float
    kdev_margin: float
    entropy_pos_part: float          # max over the test-function set
    runtime_seconds: float
    entropy_pos_per_phi: tuple[float, ...] = ()
    error: str | None = None

    def csv_values(self) -> list[str]:
        vals = [self.epsilon, self.l1_to_reference, self.tv_final,
                self.tv_bound, self.maxp_margin, self.kdev_margin,
                self.entropy_pos_part, self.runtime_seconds]
        return [repr(float(v)) for v in vals]


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]
    slope_l1: float
    slope_entropy: float

    @staticmethod
    def from_rows(rows) -> "SweepReport":
        rows = tuple(sorted(rows, key=lambda r: -r.epsilon))
        good = [r for r in rows if r.error is None]
        slope_l1 = _log_slope([r.epsilon for r in good],
                              [r.l1_to_reference for r in good])
        slope_entropy = _log_slope([r.epsilon for r in good],
                                   [r.entropy_pos_part for r in good])
        return SweepReport(rows, slope_l1, slope_entropy)


def _log_slope(eps_values, values, floor: float = 1e-16) -> float:
    if len(eps_values) < 2:
        return float("nan")
    x = np.log(np.asarray(eps_values, dtype=float))
    y = np.log(np.maximum(np.asarray(values, dtype=float), floor))
    return float(np.polyfit(x, y, 1)[0])


def default_test_functions(grid: Grid, t_final: float
                           ) -> list[BumpTestFunction]:
    """Three bumps spread over the late half of the run, inside the domain."""
    mid = 0.5 * (grid.x_min + grid.x_max)
    rx = 0.12 * grid.length
    rt = 0.12 * t_final
    return [
        BumpTestFunction(center_x=mid, center_t=0.55 * t_final,
                         radius_x=rx, radius_t=rt),
        BumpTestFunction(center_x=mid + 0.5 * rx, center_t=0.70 * t_final,
                         radius_x=rx, radius_t=rt),
        BumpTestFunction(center_x=mid - 0.5 * rx, center_t=0.85 * t_final,
                         radius_x=rx, radius_t=rt),
    ]


def _sweep_snapshot_times(config: ExperimentConfig,
                          phis) -> tuple[float, ...]:
    """User snapshots plus a uniform grid fine enough for the phi quadrature."""
    t_final = config.solver.t_final
    min_radius = min(p.radius_t for p in phis)
    n = max(64, int(np.ceil(20.0 * t_final / min_radius)))
    auto = np.linspace(0.0, t_final, n + 1)
    merged = np.unique(np.concatenate(
        [auto, np.asarray(config.solver.snapshot_times, dtype=float)]))
    return tuple(float(t) for t in merged if 0.0 < t < t_final)


def _sweep_one(config: ExperimentConfig, eps_value: float,
               reference_final: DensityField, phis,
               snapshot_times) -> SweepRow:
    initial = config.initial_field()
    rho_min0 = float(np.min(initial.values))
    rho_max0 = float(np.max(initial.values))
    tv0 = total_variation(initial)
    fe = FluxEntropyModel(config.model)
    solver = SolverConfig(t_final=config.solver.t_final,
                          cfl=config.solver.cfl,
                          snapshot_times=snapshot_times)
    start = time.perf_counter()
    try:
        traj = solve_nonlocal(initial, config.model, KernelScale(eps_value),
                              solver)
        l1 = l1_distance(traj.final.rho, reference_final)
        tv_final = total_variation(traj.final.rho)
        tv_bound = (rho_max0 / rho_min0) * tv0
        maxp = min(traj.rho_min_seen - rho_min0, rho_max0 - traj.rho_max_seen)
        kdev = min(bound - dev for dev, bound in
                   ((kernel_deviation(s.rho, s.q)) for s in traj.snapshots))
        residuals = entropy_residual(traj, fe, phis)
        per_phi = tuple(max(r, 0.0) for r in residuals)
        runtime = time.perf_counter() - start
        return SweepRow(eps_value, l1, tv_final, tv_bound, maxp, kdev,
                        max(per_phi), runtime, entropy_pos_per_phi=per_phi)
    except (NumericsError, DomainError) as exc:
        runtime = time.perf_counter() - start
        nan = float("nan")
        return SweepRow(eps_value, nan, nan, nan, nan, nan, nan, runtime,
                        error=f"{type(exc).__name__}: {exc}")


def run_sweep(config: ExperimentConfig, jobs: int = 1) -> SweepReport:
    """One row per epsilon, decreasing; failures fill their row, never abort.

    Rows are computed against a single local reference solve.  With
    jobs > 1 the epsilon runs execute concurrently; ordering of the report
    is by epsilon regardless of completion order.
    """
    initial = config.initial_field()
    if float(np.min(initial.values)) <= 0.0:
        raise ConfigError(
            "sweep requires uniformly positive initial data (the variation "
            "bound column is undefined otherwise)")
    fe = FluxEntropyModel(config.model)
    phis = default_test_functions(config.grid, config.solver.t_final)
    snapshot_times = _sweep_snapshot_times(config, phis)
    solver = SolverConfig(t_final=config.solver.t_final,
                          cfl=config.solver.cfl,
                          snapshot_times=snapshot_times)
    reference = solve_local(initial, fe, solver)

    def job(eps_value: float) -> SweepRow:
        return _sweep_one(config, eps_value, reference.final.rho, phis,
                          snapshot_times)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(job, config.epsilons))
    else:
        rows = [job(e) for e in config.epsilons]
    return SweepReport.from_rows(rows)


# ---------------------------------------------------------------------------
# relaxation cross-validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RoundtripResult:
    """Relaxation system integrated between two slanted slices of one run."""

    l1_distance: float
    tau_start: float
    delta_tau: float
    x: np.ndarray
    rho_relaxation: np.ndarray
    rho_physical: np.ndarray


def relaxation_roundtrip(initial: DensityField, model: VelocityModel,
                         eps: KernelScale, K: float, delta_tau: float,
                         cfl: float = 0.5) -> RoundtripResult:
    """Cross-validate the tilted-system integrator against the physical one.

    A constant-tau slice of the tilted coordinates is the line t = tau + x/K.
    The physical solver is run once with dense snapshots; its state along
    the starting slice seeds the tilted integrator, which marches delta_tau
    and is compared against the physical state along the final slice.  Both
    discretizations are first order, so the distance shrinks like dx.

    The initial data should be constant near the right boundary over the
    whole needed horizon (waves move right no faster than v(0), and the
    averaging kernel sees about 40 eps ahead), otherwise the two boundary
    closures differ by more than discretization error.
    """
    grid = initial.grid
    tau0 = max(0.0, -grid.x_min / K)
    t_need = tau0 + delta_tau + max(0.0, grid.x_max / K)
    spacing = 2.0 * grid.dx / max(model.v_max, 1e-30)
    n_snap = max(64, int(np.ceil(t_need / spacing)))
    snaps = tuple(np.linspace(0.0, t_need, n_snap + 1)[1:-1])
    traj = solve_nonlocal(initial, model, eps,
                          SolverConfig(t_final=t_need, cfl=cfl,
                                       snapshot_times=snaps))

    frame = RelaxationFrame(K, eps, model)
    rho0, q0 = physical_slice(traj, K, tau0)
    uz0 = UZFields(grid, np.log(rho0), np.log(K - model.v(q0)))
    relax = solve_relaxation(uz0, frame,
                             SolverConfig(t_final=delta_tau, cfl=cfl))
    rho_relax = np.exp(relax.final.fields.u)
    rho_phys, _ = physical_slice(traj, K, tau0 + delta_tau)
    l1 = float(np.sum(np.abs(rho_relax - rho_phys))) * grid.dx
    return RoundtripResult(l1, tau0, delta_tau, grid.cell_centers(),
                           rho_relax, rho_phys)


# ---------------------------------------------------------------------------
# domain coverage check
# ---------------------------------------------------------------------------

def domain_coverage(initial: DensityField, eps_value: float,
                    t_final: float, v_max: float) -> dict:
    """Check that rightward influence stays clear of the right boundary.

    With constant extension the boundary closure is exact only while the
    solution is constant within the kernel's reach of the boundary.  Waves
    move right at most at v(0) and the kernel sees about 40 eps ahead;
    the margin reported is how much room remains at t_final.  Periodic
    grids pass trivially.
    """
    grid = initial.grid
    if grid.periodic:
        return {"applicable": False, "ok": True, "margin": None}
    values = initial.values
    tol = 1e-12 * max(1.0, float(np.max(np.abs(values))))
    nonconst = np.nonzero(np.abs(values - values[-1]) > tol)[0]
    if nonconst.size == 0:
        return {"applicable": True, "ok": True, "margin": grid.length}
    reach = (grid.x_min + (nonconst[-1] + 1) * grid.dx
             + v_max * t_final + TRUNCATION_WIDTHS * eps_value)
    margin = grid.x_max - reach
    return {"applicable": True, "ok": bool(margin >= 0.0),
            "margin": float(margin)}


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------

def sweep_csv(report: SweepReport) -> str:
    lines = [",".join(SWEEP_CSV_COLUMNS)]
    for row in report.rows:
        lines.append(",".join(row.csv_values()))
    return "\n".join(lines) + "\n"


def _json_metadata(config: ExperimentConfig, seed: int | None) -> dict:
    return {
        "config_hash": config.config_hash,
        "seed": seed,
        "grid": {"x_min": config.grid.x_min, "x_max": config.grid.x_max,
                 "n_cells": config.grid.n_cells,
                 "boundary_mode": config.grid.boundary_mode,
                 "dx": config.grid.dx},
        "versions": {"nltraffic": __version__,
                     "numpy": np.__version__,
                     "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }


def sweep_json(report: SweepReport, config: ExperimentConfig,
               seed: int | None = None) -> str:
    payload = _json_metadata(config, seed)
    payload["rows"] = [
        {"epsilon": r.epsilon, "l1_to_reference": r.l1_to_reference,
         "tv_final": r.tv_final, "tv_bound": r.tv_bound,
         "maxp_margin": r.maxp_margin, "kdev_margin": r.kdev_margin,
         "entropy_pos_part": r.entropy_pos_part,
         "entropy_pos_per_phi": list(r.entropy_pos_per_phi),
         "runtime_seconds": r.runtime_seconds, "error": r.error}
        for r in report.rows]
    payload["slopes"] = {"l1_vs_epsilon": report.slope_l1,
                         "entropy_pos_vs_epsilon": report.slope_entropy}
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n"


def emit_report(report, fmt: str) -> str:
    """Serialize a SweepReport or DiagnosticsReport to CSV or JSON text."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown report format {fmt!r}")
    if isinstance(report, SweepReport):
        if fmt == "csv":
            return sweep_csv(report)
        payload = {"rows": [
            {"epsilon": r.epsilon, "l1_to_reference": r.l1_to_reference,
             "tv_final": r.tv_final, "tv_bound": r.tv_bound,
             "maxp_margin": r.maxp_margin, "kdev_margin": r.kdev_margin,
             "entropy_pos_part": r.entropy_pos_part,
             "runtime_seconds": r.runtime_seconds, "error": r.error}
            for r in report.rows],
            "slopes": {"l1_vs_epsilon": report.slope_l1,
                       "entropy_pos_vs_epsilon": report.slope_entropy}}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if isinstance(report, DiagnosticsReport):
        if fmt == "json":
            return json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n"
        lines = ["metric,value,provenance"]
        for name in sorted(report.metrics):
            prov = report.provenance.get(name, "").replace(",", ";")
            lines.append(f"{name},{report.metrics[name]!r},{prov}")
        return "\n".join(lines) + "\n"
    raise ConfigError(f"cannot serialize report of type {type(report).__name__}")


# ---------------------------------------------------------------------------
# top-level experiment driver
# ---------------------------------------------------------------------------

def _trajectory_csv(traj) -> str:
    lines = ["t,x,rho,q"]
    for snap in traj.snapshots:
        x = snap.rho.grid.cell_centers()
        q = snap.q.values if snap.q is not None else np.full(x.size, np.nan)
        t_repr = repr(float(snap.t))
        for xi, ri, qi in zip(x, snap.rho.values, q):
            lines.append(f"{t_repr},{float(xi)!r},{float(ri)!r},{float(qi)!r}")
    return "\n".join(lines) + "\n"


def _run_kind(config: ExperimentConfig, out: Path, seed: int | None) -> dict:
    initial = config.initial_field()
    eps = KernelScale(config.epsilon)
    traj = solve_nonlocal(initial, config.model, eps, config.solver)
    (out / "trajectory.csv").write_text(_trajectory_csv(traj))
    report = DiagnosticsReport()
    report.add("mass_drift",
               traj.final.rho.total_mass() - initial.total_mass(),
               "conservation of the cell-average integral")
    report.add("maxp_margin",
               min(traj.rho_min_seen - float(np.min(initial.values)),
                   float(np.max(initial.values)) - traj.rho_max_seen),
               "solution stays inside the initial range")
    report.add("tv_final", total_variation(traj.final.rho),
               "total variation at t_final")
    payload = _json_metadata(config, seed)
    payload["diagnostics"] = report.as_dict()
    payload["domain_coverage"] = domain_coverage(
        initial, config.epsilon, config.solver.t_final, config.model.v_max)
    payload["step_count"] = traj.step_count
    (out / "run.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return {"files": ["trajectory.csv", "run.json"]}


def _sweep_kind(config: ExperimentConfig, out: Path, jobs: int,
                seed: int | None) -> dict:
    report = run_sweep(config, jobs=jobs)
    (out / "sweep.csv").write_text(sweep_csv(report))
    (out / "sweep.json").write_text(sweep_json(report, config, seed))
    return {"files": ["sweep.csv", "sweep.json"],
            "rows": len(report.rows)}


def _compare_kind(config: ExperimentConfig, out: Path, seed: int | None) -> dict:
    initial = config.initial_field()
    eps = KernelScale(config.epsilon)
    fe = FluxEntropyModel(config.model)
    traj_nl = solve_nonlocal(initial, config.model, eps, config.solver)
    traj_loc = solve_local(initial, fe, config.solver)
    x = config.grid.cell_centers()
    columns = {"x": x,
               "rho_nonlocal": traj_nl.final.rho.values,
               "rho_local": traj_loc.final.rho.values}
    distances = {"l1_nonlocal_local":
                 l1_distance(traj_nl.final.rho, traj_loc.final.rho)}
    if config.with_relaxation:
        rt = relaxation_roundtrip(initial, config.model, eps,
                                  config.relaxation_K,
                                  config.solver.t_final,
                                  cfl=config.solver.cfl)
        # sampled along the slanted slice t = tau + x/K, not at t_final
        columns["rho_relaxation"] = rt.rho_relaxation
        columns["rho_nonlocal_slice"] = rt.rho_physical
        distances["l1_relaxation_roundtrip"] = rt.l1_distance
    header = ",".join(columns)
    body = "\n".join(
        ",".join(repr(float(col[i])) for col in columns.values())
        for i in range(x.size))
    (out / "fields.csv").write_text(header + "\n" + body + "\n")
    payload = _json_metadata(config, seed)
    payload["distances"] = distances
    (out / "compare.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return {"files": ["fields.csv", "compare.json"], "distances": distances}


def _check_kind(config: ExperimentConfig, out: Path, seed: int | None) -> dict:
    model_report = validate_model(config.model, 1001)
    frame = RelaxationFrame(config.relaxation_K, KernelScale(1.0),
                            config.model)
    sub = check_subcharacteristic(frame, 1000)
    bv = check_bv_conditions(frame, (0.0, config.model.rho_jam))
    payload = _json_metadata(config, seed)
    payload["model"] = {
        "passed": model_report.passed,
        "vjam_residual": model_report.vjam_residual,
        "delta_star": model_report.delta_star,
        "d2v_sup": model_report.d2v_sup,
        "inverse_roundtrip_error": model_report.inverse_roundtrip_error,
        "checks": [{"name": c.name, "passed": c.passed, "margin": c.margin,
                    "detail": c.detail} for c in model_report.checks]}
    payload["subcharacteristic"] = {
        "passed": sub.passed,
        "min_margin_lower": sub.min_margin_lower,
        "min_margin_upper": sub.min_margin_upper}
    payload["bv_conditions"] = {
        "passed": bv.passed,
        "range_margin": bv.range_margin,
        "uniform_margin": bv.uniform_margin,
        "min_K_affine": bv.min_K_affine,
        "lambda_u_max": bv.lambda_u_max,
        "lambda_z_min": bv.lambda_z_min,
        "checks": [{"name": c.name, "passed": c.passed, "margin": c.margin,
                    "detail": c.detail} for c in bv.checks]}
    payload["passed"] = bool(model_report.passed and sub.passed and bv.passed)
    (out / "check.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return {"files": ["check.json"], "passed": payload["passed"]}


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None,
                   jobs: int = 1, seed: int | None = None) -> dict:
    """Execute one experiment, writing its reports under out_dir.

    Returns a summary dict listing the files written.  Exceptions
    propagate: ConfigError for bad inputs, NumericsError subclasses for
    solver failures, OSError for unwritable destinations.
    """
    out = Path(out_dir) if out_dir is not None else Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config.kind == "run":
        result = _run_kind(config, out, seed)
    elif config.kind == "sweep":
        result = _sweep_kind(config, out, jobs, seed)
    elif config.kind == "compare":
        result = _compare_kind(config, out, seed)
    else:
        result = _check_kind(config, out, seed)
    result["out_dir"] = str(out)
    result["config_hash"] = config.config_hash
    return result
