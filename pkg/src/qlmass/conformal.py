"""Conformal deformation of the Jang graph metric to zero scalar curvature.

With ``u = 1 + v`` the metric ``u^4 g_bar`` is scalar flat when

    Lap v - R_bar v / 8 = R_bar / 8,   v = 0 on the boundary spheres.

For radial ``v`` and ``g_bar = A_bar^2 ds^2 + B^2 dOmega^2`` the Laplacian is
``(B^2 v' / A_bar)' / (A_bar B^2)``; it is discretized in conservative form so
the matrix is symmetric up to the row scaling and the solve is a single
tridiagonal sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InequalityViolation
from .jang import GraphData
from .radial import RadialField, RadialGrid, solve_tridiagonal

__all__ = ["ConformalSolution", "conformal_operator", "solve_conformal_fields", "solve_conformal",
           "check_prop5_boundary", "direct_boundary_mean_curvature", "radial_laplacian"]


@dataclass(frozen=True)
class ConformalSolution:
    v: RadialField
    u: RadialField
    nu_u: float
    Hhat: float
    min_u: float
    argmin_u: int

    @property
    def max_deviation(self) -> float:
        """sup |u - 1|, the rigidity witness for the conformal stage."""
        return float(np.max(np.abs(self.v.values)))


def conformal_operator(grid: RadialGrid, Abar, B, Rbar):
    """Bands and row scale of ``Lap - R_bar/8`` with Dirichlet end rows.

    Returns ``(lower, diag, upper)``; boundary rows are identity rows except
    the regular center of a ball, which carries ``3 v'' / A_bar^2``.
    """
    Abar, B, Rbar = (np.asarray(x, dtype=float) for x in (Abar, B, Rbar))
    h = grid.spacing
    n = grid.n
    Bm = 0.5 * (B[1:] + B[:-1])
    Am = 0.5 * (Abar[1:] + Abar[:-1])
    c = Bm * Bm / Am                       # B^2 / A_bar at cell midpoints
    lower = np.zeros(n)
    upper = np.zeros(n)
    diag = np.ones(n + 1)
    inner = np.arange(1, n)
    # cell average of B^2 (exact for linear B); a nodal B^2 would leave an
    # h^2/s^2 defect that the 1/s Green's function turns into h^2 log h at a center
    b0, b1 = Bm[inner - 1], Bm[inner]
    vol = (b0 * b0 + b0 * b1 + b1 * b1) / 3.0
    scale = 1.0 / (Abar[inner] * vol * h * h)
    lower[inner - 1] = scale * c[inner - 1]
    upper[inner] = scale * c[inner]
    diag[inner] = -scale * (c[inner - 1] + c[inner]) - Rbar[inner] / 8.0
    if grid.is_ball:
        k = 6.0 / (Abar[0] ** 2 * h * h)
        diag[0] = -k - Rbar[0] / 8.0
        upper[0] = k
    return lower, diag, upper


def radial_laplacian(grid: RadialGrid, Abar, B, v) -> np.ndarray:
    """Apply the discrete radial Laplacian of ``g_bar`` at interior nodes (ends are set to 0)."""
    zero = np.zeros(grid.n + 1)
    lower, diag, upper = conformal_operator(grid, Abar, B, zero)
    v = np.asarray(v, dtype=float)
    out = diag * v
    out[1:] += lower * v[:-1]
    out[:-1] += upper * v[1:]
    if not grid.is_ball:
        out[0] = 0.0
    out[-1] = 0.0
    return out


def solve_conformal_fields(grid: RadialGrid, Abar, B, Rbar, *, check_positive: bool = True,
                           Hbar: float | None = None) -> ConformalSolution:
    Abar, B, Rbar = (np.asarray(x, dtype=float) for x in (Abar, B, Rbar))
    lower, diag, upper = conformal_operator(grid, Abar, B, Rbar)
    rhs = Rbar / 8.0
    rhs[-1] = 0.0
    if not grid.is_ball:
        rhs[0] = 0.0
    v = solve_tridiagonal(lower, diag, upper, rhs)
    u = 1.0 + v
    h = grid.spacing
    du = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    nu_u = float(du / Abar[-1])
    if Hbar is None:
        Hbar = float(2.0 * np.gradient(B, h, edge_order=2)[-1] / (Abar[-1] * B[-1]))
    i_min = int(np.argmin(u))
    if check_positive and not u[i_min] > 0:
        raise InequalityViolation(f"conformal factor not positive: min u = {u[i_min]:.3e} at node {i_min}",
                                  stage="conformal", min_u=float(u[i_min]))
    return ConformalSolution(grid.field(v), grid.field(u), nu_u, Hbar + 4.0 * nu_u,
                             float(u[i_min]), i_min)


def solve_conformal(gd: GraphData, *, check_positive: bool = True) -> ConformalSolution:
    return solve_conformal_fields(gd.grid, gd.Abar.values, gd.B.values, gd.Rbar.values,
                                  check_positive=check_positive, Hbar=gd.Hbar)


def direct_boundary_mean_curvature(grid: RadialGrid, Abar, B, u) -> float:
    """Mean curvature of the outer sphere in ``u^4 g_bar`` from the areal radius ``u^2 B``.

    Independent of the ``H_bar + 4 nu(u)`` shortcut: differentiates
    ``u^2 B`` on the three outermost nodes.
    """
    Abar, B, u = (np.asarray(x, dtype=float) for x in (Abar, B, u))
    Bhat = u * u * B
    d = (3.0 * Bhat[-1] - 4.0 * Bhat[-2] + Bhat[-3]) / (2.0 * grid.spacing)
    return float(2.0 * d / (u[-1] ** 2 * Abar[-1] * Bhat[-1]))


def check_prop5_boundary(gd: GraphData, cs: ConformalSolution) -> float:
    """``int H_hat - int (H_bar - <X, nu_bar>)`` over the outer sphere."""
    return gd.area * (cs.Hhat - gd.Hbar + gd.Xnu)
