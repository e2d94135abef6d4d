"""Benchmark problems, error metrics, reference runs and parameter sweeps.

Four cases: a BBM solitary wave and a two-wave interaction, an NLS soliton
and an NLS breather.  The wave cases with closed-form solutions are compared
against them directly; the other two are compared against a fine-grid
conservative reference run that is generated once and cached on disk
(``CLAWFD_CACHE_DIR`` overrides the location).

Newton tolerances are per case: the residual's roundoff floor scales like
eps * amplitude / (dx^2 dt), which sits above 1e-12 on the coarse BBM grids
and on both reference grids.
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bbm, nls
from .claws import (InvariantTrace, bbm_fallback_density,
                    global_invariant_error, nls_fallback_density)
from .grid import FieldLevel, GridSpec, StencilOps, StencilWindow
from .schemes import SchemeDef
from .solver import NonConvergence, SolverConfig, StepStats, advance, step


class GridMismatch(ValueError):
    """Coarse nodes are not a subset of the reference nodes."""


class PeakNotFound(ValueError):
    """No usable maximum (flat field) when locating a wave peak."""


@dataclasses.dataclass(frozen=True)
class ReferenceRecipe:
    scheme_id: str
    params: dict
    delta_x: float
    delta_t: float
    tol: float


@dataclasses.dataclass(frozen=True)
class BenchmarkCase:
    id: str
    equation: str
    a: float
    b: float
    T: float
    data: dict
    has_exact: bool
    table_dx: float
    table_dt: float
    run_tol: float
    reference: ReferenceRecipe | None = None


CASES = {
    "bbm-soliton": BenchmarkCase(
        id="bbm-soliton", equation="bbm", a=-40.0, b=40.0, T=5.0,
        data={"c": 5.0, "d": 25.0}, has_exact=True,
        table_dx=0.05, table_dt=0.05, run_tol=1e-10),
    "bbm-two-wave": BenchmarkCase(
        id="bbm-two-wave", equation="bbm", a=-100.0, b=100.0, T=15.0,
        data={"c1": 6.0, "c2": 2.0, "d1": 40.0, "d2": 15.0}, has_exact=False,
        table_dx=0.2, table_dt=0.015, run_tol=1e-10,
        reference=ReferenceRecipe("ec10", {"alpha": 0.0}, 0.05, 0.003, 1e-9)),
    "nls-soliton": BenchmarkCase(
        id="nls-soliton", equation="nls", a=-20.0, b=20.0, T=2.0,
        data={"c": 2.5, "d": -5.0}, has_exact=True,
        table_dx=0.1, table_dt=0.02, run_tol=1e-12),
    "nls-breather": BenchmarkCase(
        id="nls-breather", equation="nls", a=-5.0, b=5.0, T=60.0,
        data={}, has_exact=False,
        table_dx=0.05, table_dt=0.2, run_tol=1e-12,
        reference=ReferenceRecipe("ec6", {"lam": 0.0}, 0.0125, 0.005, 1e-9)),
}


def exact_bbm_soliton(x, t, c: float = 5.0, d: float = 25.0):
    """Solitary wave 3c sech^2((x + c t - d)/2), moving left with speed c."""
    return 3.0 * c / np.cosh(0.5 * (x + c * t - d)) ** 2


def exact_nls_soliton(x, t, c: float = 2.5, d: float = -5.0):
    """Single soliton: sqrt(2) sech envelope with a linear chirp phase."""
    env = np.sqrt(2.0) / np.cosh(x - d - 2.0 * c * t)
    phase = c * (x - d) - (c * c - 1.0) * t
    return env * np.cos(phase), env * np.sin(phase)


def exact_solution(case: BenchmarkCase, x: np.ndarray, t: float) -> np.ndarray:
    if case.id == "bbm-soliton":
        return exact_bbm_soliton(x, t, **case.data)[None, :]
    if case.id == "nls-soliton":
        u, v = exact_nls_soliton(x, t, **case.data)
        return np.stack([u, v])
    raise ValueError(f"case {case.id} has no exact solution")


def initial_level(case: BenchmarkCase, grid: GridSpec) -> FieldLevel:
    x = grid.x_nodes()
    if case.has_exact:
        return FieldLevel(exact_solution(case, x, 0.0), 0)
    if case.id == "bbm-two-wave":
        d = case.data
        u0 = (3.0 * d["c1"] / np.cosh(0.5 * (x - d["d1"])) ** 2
              + 3.0 * d["c2"] / np.cosh(0.5 * (x - d["d2"])) ** 2)
        return FieldLevel(u0[None, :], 0)
    if case.id == "nls-breather":
        u0 = (1.0 + 0.1 * np.cos(x / np.sqrt(2.0))) / np.sqrt(2.0)
        return FieldLevel(np.stack([u0, np.zeros_like(u0)]), 0)
    raise KeyError(case.id)


def startup_levels(case: BenchmarkCase, grid: GridSpec, scheme: SchemeDef,
                   config: SolverConfig) -> list[FieldLevel]:
    """Initial levels for a scheme; the two-step box scheme bootstraps its
    second level with one step of the (mass-conserving, same-stencil) LS
    scheme at the run's own step size."""
    lvl0 = initial_level(case, grid)
    if scheme.nlevels == 2:
        return [lvl0]
    ls = bbm.build("ls")
    lvl1, _ = step(ls, [lvl0], grid, config)
    return [lvl0, lvl1]


def grid_for(case: BenchmarkCase, delta_x: float | None = None,
             delta_t: float | None = None) -> GridSpec:
    return GridSpec.from_steps(case.a, case.b,
                               delta_x if delta_x is not None else case.table_dx,
                               delta_t if delta_t is not None else case.table_dt,
                               case.T)


def solution_error(values: np.ndarray, exact: np.ndarray) -> float:
    """Relative discrete l2 error over all components at one time."""
    num = float(np.sum((values - exact) ** 2))
    den = float(np.sum(exact ** 2))
    return float(np.sqrt(num / den))


def restrict_reference(ref_values: np.ndarray, ref_grid: GridSpec,
                       coarse_grid: GridSpec) -> np.ndarray:
    if (ref_grid.a != coarse_grid.a or ref_grid.b != coarse_grid.b
            or ref_grid.M % coarse_grid.M != 0):
        raise GridMismatch(
            f"reference grid M={ref_grid.M} does not contain coarse "
            f"M={coarse_grid.M}")
    ratio = ref_grid.M // coarse_grid.M
    return ref_values[:, ::ratio]


def locate_peak(values: np.ndarray, grid: GridSpec) -> tuple[float, float]:
    """Peak abscissa by 3-point quadratic interpolation and at node level."""
    i = int(np.argmax(values))
    y0 = values[i]
    ym = values[(i - 1) % grid.M]
    yp = values[(i + 1) % grid.M]
    denom = ym - 2.0 * y0 + yp
    if denom == 0.0 or (y0 == ym and y0 == yp):
        raise PeakNotFound("flat field around the maximal node")
    shift = 0.5 * (ym - yp) / denom
    x_node = grid.a + i * grid.delta_x
    return x_node + shift * grid.delta_x, x_node


def phase_shift_error(computed: np.ndarray, coarse_grid: GridSpec,
                      reference: np.ndarray, ref_grid: GridSpec
                      ) -> tuple[float, float]:
    """Signed displacement x_max(reference) - x_max(computed) of the highest
    peak, interpolated and node-level."""
    xr, xr_node = locate_peak(reference, ref_grid)
    xc, xc_node = locate_peak(computed, coarse_grid)
    return xr - xc, xr_node - xc_node


@dataclasses.dataclass(frozen=True)
class RunReport:
    case: str
    scheme: str
    params: dict
    delta_x: float
    delta_t: float
    err1: float | None
    err2: float | None
    err3: float | None
    err_sources: tuple[str, str, str]
    solution_error: float | None
    phase_shift: float | None
    phase_shift_node: float | None
    max_newton_iters: int
    total_newton_iters: int
    max_newton_residual: float
    solver: SolverConfig
    failed: bool = False
    failure: str | None = None


_LAW_BY_ALPHA = {
    "bbm": {1: "mass", 2: "momentum", 3: "energy"},
    "nls": {1: "charge", 2: "momentum", 3: "energy"},
}


def invariant_errors(trajectory: Sequence[FieldLevel], grid: GridSpec,
                     scheme: SchemeDef) -> tuple[list[float], list[str]]:
    """Err_1..Err_3 from native densities where the scheme has them, from
    the fallback densities otherwise."""
    errs, sources = [], []
    natives = {law.name: law for law in scheme.conservation_laws()}
    for alpha in (1, 2, 3):
        name = _LAW_BY_ALPHA[scheme.equation][alpha]
        if name in natives:
            law = natives[name]
            src = "native"
        else:
            if scheme.equation == "bbm":
                law = bbm_fallback_density(alpha, scheme.fallback_shifted_v)
            else:
                law = nls_fallback_density(alpha)
            src = "fallback"
        errs.append(global_invariant_error(trajectory, grid, law).err)
        sources.append(src)
    return errs, sources


def _build_scheme(equation: str, scheme_id: str, params: dict) -> SchemeDef:
    mod = bbm if equation == "bbm" else nls
    return mod.build(scheme_id, **params)


def run_benchmark(equation: str, scheme_id: str, params: dict, case_id: str,
                  delta_x: float | None = None, delta_t: float | None = None,
                  solver: SolverConfig | None = None,
                  reference: "Reference | None" = None,
                  keep_trajectory: bool = False):
    """One full table row: advance, invariant drifts, solution error.

    Returns (RunReport, trajectory-or-final-levels).
    """
    case = CASES[case_id]
    if case.equation != equation:
        raise ValueError(f"case {case_id} is a {case.equation} case")
    grid = grid_for(case, delta_x, delta_t)
    scheme = _build_scheme(equation, scheme_id, params)
    config = solver if solver is not None else SolverConfig(tol=case.run_tol)

    def failed_report(msg: str) -> RunReport:
        return RunReport(case=case_id, scheme=scheme_id, params=params,
                         delta_x=grid.delta_x, delta_t=grid.delta_t,
                         err1=None, err2=None, err3=None,
                         err_sources=("", "", ""), solution_error=None,
                         phase_shift=None, phase_shift_node=None,
                         max_newton_iters=0, total_newton_iters=0,
                         max_newton_residual=float("nan"), solver=config,
                         failed=True, failure=msg)

    try:
        init = startup_levels(case, grid, scheme, config)
        traj, stats = advance(scheme, init, grid, config)
    except NonConvergence as exc:
        return failed_report(f"non-convergence at step {exc.step_index}"), None

    if grid.N == 0:
        report = RunReport(case=case_id, scheme=scheme_id, params=params,
                           delta_x=grid.delta_x, delta_t=grid.delta_t,
                           err1=0.0, err2=0.0, err3=0.0,
                           err_sources=("", "", ""), solution_error=0.0,
                           phase_shift=None, phase_shift_node=None,
                           max_newton_iters=0, total_newton_iters=0,
                           max_newton_residual=0.0, solver=config)
        return report, traj

    errs, sources = invariant_errors(traj, grid, scheme)
    final = traj[-1]

    sol_err = None
    shift = shift_node = None
    if case.has_exact:
        exact = exact_solution(case, grid.x_nodes(), grid.T)
        sol_err = solution_error(final.values, exact)
    elif reference is not None:
        ref_vals = restrict_reference(reference.values, reference.grid, grid)
        sol_err = solution_error(final.values, ref_vals)
        if case.id == "bbm-two-wave":
            shift, shift_node = phase_shift_error(
                final.values[0], grid, reference.values[0], reference.grid)

    report = RunReport(
        case=case_id, scheme=scheme_id, params=params,
        delta_x=grid.delta_x, delta_t=grid.delta_t,
        err1=errs[0], err2=errs[1], err3=errs[2],
        err_sources=tuple(sources), solution_error=sol_err,
        phase_shift=shift, phase_shift_node=shift_node,
        max_newton_iters=max(st.iterations for st in stats),
        total_newton_iters=sum(st.iterations for st in stats),
        max_newton_residual=max(st.final_residual for st in stats),
        solver=config)
    return report, (traj if keep_trajectory else traj[-scheme.nlevels:])


@dataclasses.dataclass(frozen=True)
class Reference:
    case_id: str
    grid: GridSpec
    values: np.ndarray            # final level, shape (q, M)
    drifts: dict
    meta: dict


def default_cache_dir() -> Path:
    env = os.environ.get("CLAWFD_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "clawfd"


def _reference_path(case: BenchmarkCase, recipe: ReferenceRecipe,
                    cache_dir: Path) -> Path:
    tag = (f"{case.id}__{recipe.scheme_id}"
           f"__dx{recipe.delta_x}__dt{recipe.delta_t}")
    return cache_dir / f"ref_v1_{tag}.npz"


def generate_reference(case_id: str, cache_dir: Path | None = None,
                       force: bool = False,
                       recipe: ReferenceRecipe | None = None) -> Reference:
    """Fine-grid conservative run treated as the exact solution.

    The trajectory is streamed (never stored): invariant sums of the
    scheme's own laws are accumulated per level and only the final level is
    kept.  Results are cached on disk with the grid metadata.
    """
    case = CASES[case_id]
    recipe = recipe if recipe is not None else case.reference
    if recipe is None:
        raise ValueError(f"case {case_id} has no reference recipe")
    cache_dir = cache_dir if cache_dir is not None else default_cache_dir()
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = _reference_path(case, recipe, cache_dir)
    if path.exists() and not force:
        return load_reference(path)

    grid = grid_for(case, recipe.delta_x, recipe.delta_t)
    scheme = _build_scheme(case.equation, recipe.scheme_id, recipe.params)
    config = SolverConfig(tol=recipe.tol)
    laws = scheme.conservation_laws()
    sums: dict[str, list[float]] = {law.name: [] for law in laws}
    holder: dict = {}

    def observer(window: StencilWindow) -> None:
        for law in laws:
            vals = sums[law.name]
            if not vals:
                vals.append(grid.delta_x * float(np.sum(law.density(window, 0))))
            vals.append(grid.delta_x * float(np.sum(law.density(window, 1))))
        holder["final"] = window.levels[-1]

    init = startup_levels(case, grid, scheme, config)
    advance(scheme, init, grid, config, observer=observer, store=False)
    drifts = {name: InvariantTrace(np.asarray(v)).err
              for name, v in sums.items()}
    meta = {
        "case": case_id, "scheme": recipe.scheme_id, "params": recipe.params,
        "delta_x": recipe.delta_x, "delta_t": recipe.delta_t,
        "tol": recipe.tol, "T": case.T, "format": 1,
    }
    ref = Reference(case_id=case_id, grid=grid,
                    values=holder["final"].values, drifts=drifts, meta=meta)
    np.savez_compressed(
        path, values=ref.values,
        grid=np.array([grid.a, grid.b, grid.M, grid.delta_t, grid.N]),
        meta=json.dumps(meta), drifts=json.dumps(drifts))
    return ref


def load_reference(path: Path) -> Reference:
    with np.load(path, allow_pickle=False) as dat:
        g = dat["grid"]
        grid = GridSpec(a=float(g[0]), b=float(g[1]), M=int(g[2]),
                        delta_t=float(g[3]), N=int(g[4]))
        meta = json.loads(str(dat["meta"]))
        drifts = json.loads(str(dat["drifts"]))
        return Reference(case_id=meta["case"], grid=grid,
                         values=dat["values"], drifts=drifts, meta=meta)


def parameter_sweep(equation: str, scheme_id: str, case_id: str,
                    param_grid: Sequence[dict],
                    delta_x: float | None = None, delta_t: float | None = None,
                    solver: SolverConfig | None = None,
                    reference: Reference | None = None
                    ) -> tuple[list[RunReport], dict | None]:
    """Reports for every parameter point plus the argmin by solution error."""
    reports = []
    for params in param_grid:
        rep, _ = run_benchmark(equation, scheme_id, params, case_id,
                               delta_x=delta_x, delta_t=delta_t,
                               solver=solver, reference=reference)
        reports.append(rep)
    ok = [r for r in reports if not r.failed and r.solution_error is not None]
    best = min(ok, key=lambda r: r.solution_error).params if ok else None
    return reports, best


def convergence_study(equation: str, scheme_id: str, params: dict,
                      case_id: str, base_dx: float, base_dt: float,
                      levels: int, solver: SolverConfig | None = None
                      ) -> tuple[list[tuple[float, float, float]], float | None]:
    """Solution errors under dyadic refinement and the fitted order."""
    case = CASES[case_id]
    if not case.has_exact:
        raise ValueError("convergence study needs an exact-solution case")
    rows = []
    for k in range(levels):
        dx, dt = base_dx / 2 ** k, base_dt / 2 ** k
        rep, _ = run_benchmark(equation, scheme_id, params, case_id,
                               delta_x=dx, delta_t=dt, solver=solver)
        if rep.failed:
            raise NonConvergence(f"run failed at dx={dx}", np.empty(0), [])
        rows.append((dx, dt, rep.solution_error))
    order = None
    if len(rows) >= 2:
        logs = np.log([r[2] for r in rows])
        logh = np.log([r[0] for r in rows])
        order = float(np.polyfit(logh, logs, 1)[0])
    return rows, order
