"""Discrete conservation laws: densities, fluxes, characteristics and checks.

A scheme residual written in characteristic form satisfies, identically on
any grid data,

    sum_a  residual_a * Q_a  =  D_m F + D_n G,

for the law's flux F, density G and characteristic Q.  That identity is a
finite algebraic statement on a periodic lattice, so it can be verified to
roundoff on random windows; this module provides that check plus the global
invariant-drift metrics used by the benchmark tables.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Sequence

import numpy as np

from .grid import (FieldLevel, GridFn, GridSpec, StencilOps, StencilWindow,
                   diff_space, diff_time)


class MismatchedFamily(TypeError):
    """Scheme and conservation law use different component counts."""


class EmptyTrajectory(ValueError):
    """An invariant trace was requested for an empty trajectory."""


@dataclasses.dataclass(frozen=True)
class LawParts:
    """Flux/density term lists and characteristic for one law on one window.

    ``G = sum(density_terms)`` and ``F = sum(flux_terms)``; keeping the
    printed top-level summands separate lets mutation tests flip a single
    term's sign.
    """

    density_terms: tuple[GridFn, ...]
    flux_terms: tuple[GridFn, ...]
    characteristic: tuple[GridFn, ...]


@dataclasses.dataclass(frozen=True)
class ConservationLawDef:
    """A named discrete conservation law of a particular scheme."""

    name: str                     # "mass" | "charge" | "momentum" | "energy"
    ncomp: int
    extent: tuple[int, int]       # spatial stencil (A, B) all evaluators respect
    builder: Callable[[StencilOps], LawParts]
    density_levels: int = 1       # time levels the density reads (2 for PB)
    density_sign_flips: tuple[int, ...] = ()
    flux_sign_flips: tuple[int, ...] = ()

    def parts(self, ops: StencilOps) -> LawParts:
        parts = self.builder(ops)
        if self.density_sign_flips or self.flux_sign_flips:
            dens = tuple(-t if k in self.density_sign_flips else t
                         for k, t in enumerate(parts.density_terms))
            flux = tuple(-t if k in self.flux_sign_flips else t
                         for k, t in enumerate(parts.flux_terms))
            parts = LawParts(dens, flux, parts.characteristic)
        return parts

    def density(self, window: StencilWindow, tbase: int = 0) -> np.ndarray:
        parts = self.parts(StencilOps(window, tbase))
        return _sum_terms(parts.density_terms)

    def flux(self, window: StencilWindow, tbase: int = 0) -> np.ndarray:
        parts = self.parts(StencilOps(window, tbase))
        return _sum_terms(parts.flux_terms)

    def characteristic(self, window: StencilWindow) -> np.ndarray:
        parts = self.parts(StencilOps(window))
        return np.stack([q(0, 0) for q in parts.characteristic])

    def n_terms(self, part: str, window: StencilWindow) -> int:
        parts = self.builder(StencilOps(window))
        terms = parts.flux_terms if part == "flux" else parts.density_terms
        return len(terms)

    def mutated(self, part: str, index: int) -> "ConservationLawDef":
        """Copy of this law with one printed term's sign flipped."""
        if part == "flux":
            return dataclasses.replace(
                self, flux_sign_flips=self.flux_sign_flips + (index,))
        if part == "density":
            return dataclasses.replace(
                self, density_sign_flips=self.density_sign_flips + (index,))
        raise ValueError(f"part must be 'flux' or 'density', got {part!r}")


@dataclasses.dataclass(frozen=True)
class FallbackDensity:
    """A density used for Err reporting when a scheme lacks a native one."""

    name: str
    ncomp: int
    builder: Callable[[StencilOps], GridFn]
    density_levels: int = 1

    def density(self, window: StencilWindow, tbase: int = 0) -> np.ndarray:
        return self.builder(StencilOps(window, tbase))(0, 0)


def _sum_terms(terms: Sequence[GridFn], i: int = 0, j: int = 0) -> np.ndarray:
    total = terms[0](i, j)
    for t in terms[1:]:
        total = total + t(i, j)
    return total


def characteristic_identity_residual(scheme, law: ConservationLawDef,
                                     window: StencilWindow) -> float:
    """Max-node defect of residual.Q = D_m F + D_n G on arbitrary window data.

    Normalized by max(1, data sup-norm)**4 to absorb the quartic terms in the
    NLS fluxes, so the tolerance is scale-free.
    """
    if scheme.ncomp != law.ncomp:
        raise MismatchedFamily(
            f"scheme {scheme.id} has {scheme.ncomp} components, "
            f"law {law.name} expects {law.ncomp}")
    ops = StencilOps(window)
    res = scheme.residual_fns(ops)
    parts = law.parts(ops)
    lhs = res[0](0, 0) * parts.characteristic[0](0, 0)
    for r, q in zip(res[1:], parts.characteristic[1:]):
        lhs = lhs + r(0, 0) * q(0, 0)

    ftot = parts.flux_terms[0]
    for t in parts.flux_terms[1:]:
        ftot = ftot + t
    gtot = parts.density_terms[0]
    for t in parts.density_terms[1:]:
        gtot = gtot + t
    rhs = diff_space(ftot, ops.dx)(0, 0) + diff_time(gtot, ops.dt)(0, 0)

    scale = max(1.0, window.data_norm()) ** 4
    return float(np.max(np.abs(lhs - rhs))) / scale


@dataclasses.dataclass(frozen=True)
class InvariantTrace:
    """dx * sum_i G(x_i, t_j) per time level, and its drift from the start."""

    values: np.ndarray

    @property
    def err(self) -> float:
        return float(np.max(np.abs(self.values - self.values[0])))


def global_invariant_error(trajectory: Sequence[FieldLevel], grid: GridSpec,
                           law) -> InvariantTrace:
    """Invariant trace of a completed run for a native law or a fallback.

    For densities reading a single level the trace has one entry per level;
    two-level densities give one entry per window, with the first available
    window as the baseline.
    """
    if len(trajectory) == 0:
        raise EmptyTrajectory("no levels in trajectory")
    if len(trajectory) < 2:
        raise ValueError("invariant trace needs at least one time step")
    dx = grid.delta_x
    values = []
    if law.density_levels == 1:
        for j in range(len(trajectory) - 1):
            w = StencilWindow(grid, trajectory[j:j + 2])
            values.append(dx * float(np.sum(law.density(w, tbase=0))))
        w = StencilWindow(grid, trajectory[-2:])
        values.append(dx * float(np.sum(law.density(w, tbase=1))))
    else:
        span = law.density_levels
        for j in range(len(trajectory) - span + 1):
            w = StencilWindow(grid, trajectory[j:j + span])
            values.append(dx * float(np.sum(law.density(w, tbase=0))))
    return InvariantTrace(values=np.asarray(values))


def local_claw_residual_on_solution(trajectory: Sequence[FieldLevel],
                                    grid: GridSpec, scheme,
                                    law: ConservationLawDef) -> float:
    """Max over all nodes and steps of |D_m F + D_n G| on a computed run.

    On a trajectory whose scheme residual is below the Newton tolerance this
    is bounded by tolerance times the local characteristic magnitude, since
    the divergence equals residual.Q identically.
    """
    if len(trajectory) < scheme.nlevels:
        raise ValueError("trajectory shorter than one scheme window")
    worst = 0.0
    for j in range(len(trajectory) - scheme.nlevels + 1):
        w = StencilWindow(grid, trajectory[j:j + scheme.nlevels])
        ops = StencilOps(w)
        parts = law.parts(ops)
        ftot = parts.flux_terms[0]
        for t in parts.flux_terms[1:]:
            ftot = ftot + t
        gtot = parts.density_terms[0]
        for t in parts.density_terms[1:]:
            gtot = gtot + t
        div = diff_space(ftot, ops.dx)(0, 0) + diff_time(gtot, ops.dt)(0, 0)
        worst = max(worst, float(np.max(np.abs(div))))
    return worst


def bbm_fallback_density(alpha: int, shifted_v: bool) -> FallbackDensity:
    """Momentum/energy density used when a BBM scheme lacks a native one.

    ``shifted_v`` selects v = mu_m u_{i-1,j} (8- and 12-point stencils)
    instead of v = u (6- and 10-point stencils).
    """
    if alpha not in (2, 3):
        raise ValueError("BBM fallback densities exist for alpha in {2, 3}")

    def vfield(ops: StencilOps) -> GridFn:
        u = ops.field()
        return ops.sh(ops.mum(u), -1) if shifted_v else u

    if alpha == 2:
        def build(ops: StencilOps) -> GridFn:
            V = vfield(ops)
            return 0.5 * (V * V + ops.mum(ops.sh(ops.Dm(V), -1) ** 2))
        return FallbackDensity("momentum", 1, build)

    def build(ops: StencilOps) -> GridFn:
        V = vfield(ops)
        return V ** 3 / 3.0
    return FallbackDensity("energy", 1, build)


def nls_fallback_density(alpha: int) -> FallbackDensity:
    """Charge/momentum/energy density used when an NLS scheme lacks one."""
    if alpha == 1:
        def build(ops: StencilOps) -> GridFn:
            u, v = ops.fields()
            return u * u + v * v
        return FallbackDensity("charge", 2, build)
    if alpha == 2:
        def build(ops: StencilOps) -> GridFn:
            u, v = ops.fields()
            return (u * ops.sh(ops.Dm(ops.mum(v)), -1)
                    - v * ops.sh(ops.Dm(ops.mum(u)), -1))
        return FallbackDensity("momentum", 2, build)
    if alpha == 3:
        def build(ops: StencilOps) -> GridFn:
            u, v = ops.fields()
            sq = u * u + v * v
            return (ops.sh(ops.mum(ops.Dm(u) ** 2 + ops.Dm(v) ** 2), -1)
                    - 0.5 * sq * sq)
        return FallbackDensity("energy", 2, build)
    raise ValueError("NLS fallback densities exist for alpha in {1, 2, 3}")


def random_window(rng: np.random.Generator, ncomp: int, M: int = 16,
                  nlevels: int = 2, amplitude: float = 1.0,
                  dx_range: tuple[float, float] = (0.25, 1.0),
                  dt_range: tuple[float, float] = (0.25, 1.0)) -> StencilWindow:
    """Uniform random window data for identity checks."""
    dx = float(rng.uniform(*dx_range))
    dt = float(rng.uniform(*dt_range))
    grid = GridSpec(a=0.0, b=M * dx, M=M, delta_t=dt, N=nlevels - 1)
    levels = [FieldLevel(rng.uniform(-amplitude, amplitude, size=(ncomp, M)), j)
              for j in range(nlevels)]
    return StencilWindow(grid, levels)
