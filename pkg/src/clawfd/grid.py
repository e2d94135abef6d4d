"""Periodic space-time lattice, field storage and elementary stencil operators.

Everything downstream (scheme residuals, discrete densities, fluxes and
characteristics) is composed from four operators acting on grid functions:
forward shift, forward difference and forward average, each in space and in
time.  A grid function is a lazy accessor ``f(i, j) -> ndarray`` that returns
the values of the (offset) function at every spatial node simultaneously,
so a single call vectorizes over the whole spatial period.

Spatial indices wrap periodically (``i mod M`` with non-negative modulus);
time offsets address the levels stored in a :class:`StencilWindow` and raise
:class:`WindowExhausted` past the newest stored level.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Iterable, Sequence

import numpy as np


class WindowExhausted(IndexError):
    """A time offset beyond the stored levels of a window was requested."""


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Uniform periodic lattice on [a, b] x [0, T].

    ``M`` spatial nodes x_i = a + i*dx (x = b identified with x = a, not
    stored twice) and ``N`` time steps of size ``delta_t``.
    """

    a: float
    b: float
    M: int
    delta_t: float
    N: int

    def __post_init__(self) -> None:
        if self.M < 5:
            raise ValueError(f"M must be >= 5 to fit the widest stencil, got {self.M}")
        if not self.b > self.a:
            raise ValueError("b must exceed a")
        if not self.delta_t > 0:
            raise ValueError("delta_t must be positive")
        if self.N < 0:
            raise ValueError("N must be non-negative")

    @property
    def delta_x(self) -> float:
        return (self.b - self.a) / self.M

    @property
    def T(self) -> float:
        return self.N * self.delta_t

    def x_nodes(self) -> np.ndarray:
        return self.a + self.delta_x * np.arange(self.M)

    @classmethod
    def from_steps(cls, a: float, b: float, delta_x: float, delta_t: float,
                   T: float) -> "GridSpec":
        """Build a spec from step sizes, requiring them to tile the domain."""
        M = round((b - a) / delta_x)
        N = round(T / delta_t)
        if not math.isclose(M * delta_x, b - a, rel_tol=1e-12):
            raise ValueError(f"delta_x={delta_x} does not tile [{a}, {b}]")
        if not math.isclose(N * delta_t, T, rel_tol=1e-12):
            raise ValueError(f"delta_t={delta_t} does not tile [0, {T}]")
        return cls(a=a, b=b, M=M, delta_t=delta_t, N=N)


@dataclasses.dataclass(frozen=True)
class FieldLevel:
    """Values of all solution components at one time level.

    ``values`` has shape (q, M); BBM stores q = 1, the NLS real system q = 2
    (u then v).
    """

    values: np.ndarray
    time_index: int

    def __post_init__(self) -> None:
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", v)

    @property
    def ncomp(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    def assert_finite(self) -> "FieldLevel":
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError(
                f"non-finite field values at time level {self.time_index}")
        return self


class StencilWindow:
    """Two (or, for two-step schemes, three) consecutive field levels.

    ``take(c, di, dj)`` returns component ``c`` shifted by ``di`` nodes in
    space (periodic wrap) at stored level ``dj``; results are cached per
    window so repeated reads of the same offset cost one roll.  An optional
    ``access_log`` set collects every ``(c, di, dj)`` triple read through the
    window, which lets tests verify declared stencil extents.
    """

    __slots__ = ("grid", "levels", "_cache", "access_log")

    def __init__(self, grid: GridSpec, levels: Sequence[FieldLevel],
                 access_log: set | None = None):
        levels = tuple(levels)
        if not 2 <= len(levels) <= 3:
            raise ValueError(f"window must hold 2 or 3 levels, got {len(levels)}")
        for prev, nxt in zip(levels, levels[1:]):
            if nxt.time_index != prev.time_index + 1:
                raise ValueError("window levels must have consecutive time indices")
        if any(lvl.M != grid.M for lvl in levels):
            raise ValueError("level length does not match grid")
        if len({lvl.ncomp for lvl in levels}) != 1:
            raise ValueError("levels disagree on component count")
        self.grid = grid
        self.levels = levels
        self._cache: dict = {}
        self.access_log = access_log

    @property
    def ncomp(self) -> int:
        return self.levels[0].ncomp

    @property
    def M(self) -> int:
        return self.grid.M

    def take(self, c: int, di: int, dj: int) -> np.ndarray:
        if not 0 <= dj < len(self.levels):
            raise WindowExhausted(
                f"time offset {dj} outside window of {len(self.levels)} levels")
        if self.access_log is not None:
            self.access_log.add((c, di, dj))
        key = (c, di % self.M, dj)
        out = self._cache.get(key)
        if out is None:
            out = np.roll(self.levels[dj].values[c], -(di % self.M))
            self._cache[key] = out
        return out

    def data_norm(self) -> float:
        return max(float(np.max(np.abs(lvl.values))) for lvl in self.levels)


class GridFn:
    """Lazy grid-function accessor with arithmetic.

    Calling with offsets ``(i, j)`` evaluates the function shifted by ``i``
    nodes in space and ``j`` levels in time, at every spatial node at once.
    Evaluations are memoized per instance, so shared subexpressions are
    computed once per window.
    """

    __slots__ = ("_fn", "_cache")

    def __init__(self, fn: Callable[[int, int], np.ndarray]):
        self._fn = fn
        self._cache: dict = {}

    def __call__(self, i: int = 0, j: int = 0) -> np.ndarray:
        key = (i, j)
        out = self._cache.get(key)
        if out is None:
            out = self._fn(i, j)
            self._cache[key] = out
        return out

    def __add__(self, other):
        if isinstance(other, GridFn):
            return GridFn(lambda i, j: self(i, j) + other(i, j))
        return GridFn(lambda i, j: self(i, j) + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, GridFn):
            return GridFn(lambda i, j: self(i, j) - other(i, j))
        return GridFn(lambda i, j: self(i, j) - other)

    def __rsub__(self, other):
        return GridFn(lambda i, j: other - self(i, j))

    def __mul__(self, other):
        if isinstance(other, GridFn):
            return GridFn(lambda i, j: self(i, j) * other(i, j))
        return GridFn(lambda i, j: self(i, j) * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, GridFn):
            return GridFn(lambda i, j: self(i, j) / other(i, j))
        return GridFn(lambda i, j: self(i, j) / other)

    def __neg__(self):
        return GridFn(lambda i, j: -self(i, j))

    def __pow__(self, k: int):
        return GridFn(lambda i, j: self(i, j) ** k)


def shift_space(f: GridFn, k: int = 1) -> GridFn:
    """(S_m^k f)(i, j) = f(i + k, j); pure index relocation, no arithmetic."""
    return GridFn(lambda i, j: f(i + k, j))


def shift_time(f: GridFn, k: int = 1) -> GridFn:
    """(S_n^k f)(i, j) = f(i, j + k)."""
    return GridFn(lambda i, j: f(i, j + k))


def diff_space(f: GridFn, dx: float) -> GridFn:
    """Forward difference D_m = (S_m - I)/dx."""
    return GridFn(lambda i, j: (f(i + 1, j) - f(i, j)) / dx)


def diff_time(f: GridFn, dt: float) -> GridFn:
    """Forward difference D_n = (S_n - I)/dt."""
    return GridFn(lambda i, j: (f(i, j + 1) - f(i, j)) / dt)


def avg_space(f: GridFn) -> GridFn:
    """Forward average mu_m = (S_m + I)/2."""
    return GridFn(lambda i, j: 0.5 * (f(i + 1, j) + f(i, j)))


def avg_time(f: GridFn) -> GridFn:
    """Forward average mu_n = (S_n + I)/2."""
    return GridFn(lambda i, j: 0.5 * (f(i, j + 1) + f(i, j)))


class StencilOps:
    """Operator toolkit bound to one window.

    ``tbase`` offsets every time access, which lets single-level densities be
    evaluated on the newest level of a window (the window itself still guards
    against reads past its last stored level).
    """

    def __init__(self, window: StencilWindow, tbase: int = 0):
        self.window = window
        self.tbase = tbase
        self.dx = window.grid.delta_x
        self.dt = window.grid.delta_t

    @property
    def dmax(self) -> float:
        return max(self.dx, self.dt)

    def field(self, c: int = 0) -> GridFn:
        tb = self.tbase
        w = self.window
        return GridFn(lambda i, j: w.take(c, i, j + tb))

    def fields(self) -> tuple[GridFn, ...]:
        return tuple(self.field(c) for c in range(self.window.ncomp))

    def one(self) -> GridFn:
        M = self.window.M
        return GridFn(lambda i, j: np.ones(M))

    # Short aliases used when transcribing scheme formulas.
    def sh(self, f: GridFn, di: int, dj: int = 0) -> GridFn:
        return GridFn(lambda i, j: f(i + di, j + dj))

    def Dm(self, f: GridFn) -> GridFn:
        return diff_space(f, self.dx)

    def Dn(self, f: GridFn) -> GridFn:
        return diff_time(f, self.dt)

    def mum(self, f: GridFn) -> GridFn:
        return avg_space(f)

    def mun(self, f: GridFn) -> GridFn:
        return avg_time(f)


def windows(trajectory: Sequence[FieldLevel], grid: GridSpec,
            size: int = 2) -> Iterable[StencilWindow]:
    """Consecutive windows of the given size over a trajectory."""
    for j in range(len(trajectory) - size + 1):
        yield StencilWindow(grid, trajectory[j:j + size])
