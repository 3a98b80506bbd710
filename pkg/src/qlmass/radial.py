"""One-dimensional numerical substrate shared by all radial solvers.

Uniform grids, second-order differences, Simpson quadrature, the Thomas
tridiagonal solver, adaptive Runge-Kutta integration and a damped Newton
iteration with line search.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _spi

from .errors import FlowBreakdown, GridError, NewtonFailure, SingularSystemError

__all__ = [
    "RadialGrid",
    "RadialField",
    "Tolerances",
    "Trajectory",
    "NewtonResult",
    "derivative",
    "integrate",
    "solve_tridiagonal",
    "integrate_ode",
    "damped_newton",
    "fd_tridiagonal_jacobian",
]


@dataclass(frozen=True)
class RadialGrid:
    s_min: float
    s_max: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.s_min) and np.isfinite(self.s_max)):
            raise GridError("grid bounds must be finite")
        if self.s_min < 0 or self.s_max <= self.s_min:
            raise GridError(f"need s_max > s_min >= 0, got [{self.s_min}, {self.s_max}]")
        if int(self.n) != self.n or self.n < 16:
            raise GridError(f"grid needs n >= 16 intervals, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @cached_property
    def nodes(self) -> np.ndarray:
        s = np.linspace(self.s_min, self.s_max, self.n + 1)
        s.setflags(write=False)
        return s

    @property
    def spacing(self) -> float:
        return (self.s_max - self.s_min) / self.n

    @property
    def is_ball(self) -> bool:
        """True when the grid starts at a regular center s = 0."""
        return self.s_min == 0.0

    def field(self, values) -> "RadialField":
        return RadialField(self, values)

    def to_json(self) -> dict:
        return {"s_min": self.s_min, "s_max": self.s_max, "n": self.n}


@dataclass(frozen=True)
class RadialField:
    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n + 1,):
            raise GridError(f"field has {v.size} values, grid has {self.grid.n + 1} nodes")
        if not np.all(np.isfinite(v)):
            raise GridError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.values.size

    def __getitem__(self, idx):
        return self.values[idx]

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class Tolerances:
    newton_tol: float = 1e-10
    ode_rel_tol: float = 1e-10
    ode_abs_tol: float = 1e-12
    ineq_slack: float = 1e-8

    def __post_init__(self):
        for name in ("newton_tol", "ode_rel_tol", "ode_abs_tol", "ineq_slack"):
            if not getattr(self, name) > 0:
                raise GridError(f"tolerance {name} must be strictly positive")
        if self.ineq_slack > 1e-8:
            raise GridError("ineq_slack may not exceed 1e-8")


def derivative(f: RadialField) -> RadialField:
    """Second-order central differences, second-order one-sided at the ends."""
    return RadialField(f.grid, np.gradient(f.values, f.grid.spacing, edge_order=2))


def integrate(f: RadialField) -> float:
    """Composite Simpson rule over the whole grid (requires an even node-interval count)."""
    if f.grid.n % 2:
        raise GridError("Simpson integration needs an even number of intervals")
    return float(_spi.simpson(f.values, dx=f.grid.spacing))


def solve_tridiagonal(lower: Sequence[float], diag: Sequence[float],
                      upper: Sequence[float], rhs: Sequence[float]) -> np.ndarray:
    """Thomas algorithm for ``lower[i-1] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]``.

    ``lower`` and ``upper`` have one entry fewer than ``diag``.
    """
    a = np.asarray(lower, dtype=float)
    b = np.array(diag, dtype=float)
    c = np.asarray(upper, dtype=float)
    d = np.array(rhs, dtype=float)
    n = b.size
    if a.size != n - 1 or c.size != n - 1 or d.size != n:
        raise GridError("inconsistent tridiagonal band lengths")
    scale = max(np.abs(b).max(), np.abs(a).max(initial=0.0), np.abs(c).max(initial=0.0))
    tiny = np.finfo(float).eps * (scale if scale > 0 else 1.0)
    cp = np.empty(max(n - 1, 0))
    if abs(b[0]) <= tiny:
        raise SingularSystemError("zero pivot in row 0: singular discretization")
    if n > 1:
        cp[0] = c[0] / b[0]
    d[0] = d[0] / b[0]
    for i in range(1, n):
        piv = b[i] - a[i - 1] * cp[i - 1]
        if abs(piv) <= tiny:
            raise SingularSystemError(f"zero pivot in row {i}: singular discretization")
        if i < n - 1:
            cp[i] = c[i] / piv
        d[i] = (d[i] - a[i - 1] * d[i - 1]) / piv
    for i in range(n - 2, -1, -1):
        d[i] -= cp[i] * d[i + 1]
    return d


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # shape (len(t), dim)
    nfev: int
    last_t: float
    complete: bool


def integrate_ode(rhs: Callable[[float, np.ndarray], np.ndarray], y0, span: tuple[float, float],
                  tol: Tolerances = Tolerances(), *, t_eval=None, events=None,
                  max_step: float = np.inf) -> Trajectory:
    """Adaptive Dormand-Prince 4(5) integration.

    A terminal event or a step-size underflow raises :class:`FlowBreakdown`
    carrying the last radius that was reached with a valid state.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    sol = _spi.solve_ivp(rhs, span, y0, method="RK45", t_eval=t_eval, events=events,
                         rtol=tol.ode_rel_tol, atol=tol.ode_abs_tol, max_step=max_step)
    if sol.status == -1:
        last = float(sol.t[-1]) if sol.t.size else float(span[0])
        raise FlowBreakdown(f"integration failed: {sol.message}", last_r=last)
    if sol.status == 1:
        hit = [te[0] for te in sol.t_events if len(te)]
        last = float(min(hit)) if hit else float(sol.t[-1])
        raise FlowBreakdown("terminal event reached before end of span", last_r=last)
    return Trajectory(t=sol.t, y=sol.y.T.copy(), nfev=int(sol.nfev),
                      last_t=float(sol.t[-1]), complete=True)


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual_norm: float
    history: list[float]


def damped_newton(residual: Callable[[np.ndarray], np.ndarray],
                  jacobian: Callable[[np.ndarray], object], x0, tol: float = 1e-10, *,
                  solve: Callable[[object, np.ndarray], np.ndarray] | None = None,
                  max_iter: int = 60, max_halvings: int = 40,
                  floor: Callable[[np.ndarray], float] | None = None) -> NewtonResult:
    """Newton iteration whose step is halved until the residual norm decreases.

    ``floor(x)``, if given, is the roundoff level of the residual at ``x``:
    when the line search stalls with the residual already below it, the
    iterate is accepted instead of reported as a failure.
    """
    solve = solve or (lambda J, r: np.linalg.solve(np.atleast_2d(J), r))
    x = np.array(x0, dtype=float, ndmin=1)
    r = np.atleast_1d(residual(x))
    norm = float(np.max(np.abs(r)))
    history = [norm]
    for it in range(max_iter):
        if norm <= tol:
            return NewtonResult(x, it, norm, history)
        dx = np.atleast_1d(solve(jacobian(x), -r))
        lam = 1.0
        for _ in range(max_halvings):
            x_try = x + lam * dx
            r_try = np.atleast_1d(residual(x_try))
            n_try = float(np.max(np.abs(r_try)))
            if np.isfinite(n_try) and n_try < norm:
                break
            lam *= 0.5
        else:
            if floor is not None and norm <= floor(x):
                return NewtonResult(x, it, norm, history)
            raise NewtonFailure("line search failed to reduce the residual",
                                iterations=it, residual_norm=norm, history=history)
        x, r, norm = x_try, r_try, n_try
        history.append(norm)
    if norm <= tol:
        return NewtonResult(x, max_iter, norm, history)
    raise NewtonFailure(f"no convergence after {max_iter} iterations (residual {norm:.3e})",
                        iterations=max_iter, residual_norm=norm, history=history)


def fd_tridiagonal_jacobian(residual: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                            r0: np.ndarray | None = None):
    """Finite-difference Jacobian of a residual with tridiagonal sparsity.

    Three colored perturbations recover every column; each entry uses the step
    ``1e-7 * (1 + |x_j|)``.  Returns ``(lower, diag, upper)``.
    """
    n = x.size
    r0 = residual(x) if r0 is None else r0
    eps = 1e-7 * (1.0 + np.abs(x))
    lower, diag, upper = np.zeros(n - 1), np.zeros(n), np.zeros(n - 1)
    for color in range(3):
        cols = np.arange(color, n, 3)
        xp = x.copy()
        xp[cols] += eps[cols]
        dr = residual(xp) - r0
        diag[cols] = dr[cols] / eps[cols]
        below = cols[cols + 1 < n]
        lower[below] = dr[below + 1] / eps[below]   # row j+1, column j
        above = cols[cols >= 1]
        upper[above - 1] = dr[above - 1] / eps[above]  # row j-1, column j
    return lower, diag, upper
