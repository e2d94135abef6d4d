"""Shared plumbing for implicit one- and two-step finite difference schemes."""

from __future__ import annotations

import dataclasses
from typing import Any, Callable

import numpy as np

from .claws import ConservationLawDef
from .grid import GridFn, StencilOps, StencilWindow


class WindowTooShort(ValueError):
    """A scheme was evaluated on fewer levels than its stencil needs."""


class BadComponentCount(ValueError):
    """Window component count does not match the scheme's equation."""


@dataclasses.dataclass(frozen=True)
class SchemeDef:
    """A named implicit scheme bound to concrete parameter values.

    ``extent = (A, B)`` is the spatial stencil in node offsets; the residual,
    its conservation laws and their characteristics read only nodes inside
    it.  ``nlevels`` is the window size (2 for one-step schemes, 3 for the
    two-step box scheme).
    """

    id: str
    equation: str                 # "bbm" | "nls"
    ncomp: int
    nlevels: int
    extent: tuple[int, int]
    params: Any
    conserved: tuple[str, ...]
    fallback_shifted_v: bool      # BBM Err fallback: v = mu_m u_{i-1,j} if True
    _residual_builder: Callable[[StencilOps, Any], tuple[GridFn, ...]]
    _laws_builder: Callable[["SchemeDef"], tuple[ConservationLawDef, ...]]
    # Residuals carrying an outer spatial average annihilate the (-1)^i mode
    # on even-M periodic grids, leaving the step's checkerboard component
    # undetermined; the solver pins it when this flag is set.
    checkerboard_null: bool = False

    def residual_fns(self, ops: StencilOps) -> tuple[GridFn, ...]:
        return self._residual_builder(ops, self.params)

    def residual(self, window: StencilWindow) -> np.ndarray:
        """Residual of the scheme at every node of the window base level."""
        if len(window.levels) < self.nlevels:
            raise WindowTooShort(
                f"{self.id} needs {self.nlevels} levels, window has "
                f"{len(window.levels)}")
        if window.ncomp != self.ncomp:
            raise BadComponentCount(
                f"{self.id} expects {self.ncomp} components, window has "
                f"{window.ncomp}")
        fns = self.residual_fns(StencilOps(window))
        return np.stack([f(0, 0) for f in fns])

    def conservation_laws(self) -> tuple[ConservationLawDef, ...]:
        return self._laws_builder(self)

    def law(self, name: str) -> ConservationLawDef:
        for law in self.conservation_laws():
            if law.name == name:
                return law
        raise KeyError(f"{self.id} does not preserve a {name!r} law")

    def characteristic(self, window: StencilWindow) -> np.ndarray:
        """Characteristic of the scheme's second preserved law (or the only one)."""
        laws = self.conservation_laws()
        target = laws[1] if len(laws) > 1 else laws[0]
        return target.characteristic(window)

    @property
    def stencil_center(self) -> tuple[float, float]:
        """Midpoint of the stencil bounding box, in (dx, dt) units.

        Residuals are second-order approximations of the PDE operator at this
        point; densities and fluxes are second-order half a step below/left.
        """
        A, B = self.extent
        return (0.5 * (A + B), 0.5 * (self.nlevels - 1))


def scaled(value: float, dmax: float, what: str = "parameter") -> float:
    """Scale a free parameter by dmax**2 and enforce the sanity bound."""
    lam = value * dmax * dmax
    if not np.isfinite(lam) or abs(lam) >= 1.0:
        raise ValueError(f"scaled {what} {lam} out of sane range (|.| < 1)")
    return lam
