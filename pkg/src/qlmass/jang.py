"""Jang's equation with Dirichlet data in spherical symmetry.

For a radial height function ``f`` the graph tilt ``v = f_l / sqrt(1 + f_l^2)``
(``l`` the g-proper radial length) turns the equation into

    v_l + (2 B_l / B) v = p_rad (1 - v^2) + 2 p_tan.

The Newton solver works on the second-order form in ``f``; the graph
quantities (``R_bar``, ``X``, ``div X``) are then evaluated pointwise from
``v`` with ``v_l`` taken from the equation above, which keeps the
Schoen-Yau identity exact at every node.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataRejected, JangBreakdown, NewtonFailure
from .initial_data import SphericalDataSet, horizon_scan, _center_fill
from .radial import (RadialField, Tolerances, damped_newton, derivative,
                     fd_tridiagonal_jacobian, solve_tridiagonal)

log = logging.getLogger(__name__)

__all__ = ["JangSolution", "GraphData", "jang_residual", "jang_solve", "graph_geometry",
           "check_eq20", "graph_second_fundamental_form"]


@dataclass(frozen=True)
class JangSolution:
    f: RadialField
    fprime: RadialField
    W: RadialField
    iterations: int = 0
    residual_norm: float = 0.0
    history: tuple = ()
    continuation_steps: int = 0


@dataclass(frozen=True)
class GraphData:
    Abar: RadialField
    Rbar: RadialField
    X_rad: RadialField
    divX: RadialField
    Hbar: float
    Xnu: float
    v: RadialField
    B: RadialField
    dB: RadialField
    h_minus_p_sq: RadialField
    is_ball: bool

    @property
    def grid(self):
        return self.Abar.grid

    @property
    def area(self) -> float:
        return float(4.0 * np.pi * self.B.values[-1] ** 2)


def _operator(jet, f, fp, fpp):
    """Pointwise Jang operator from f and its first two s-derivatives."""
    fl = fp / jet.A
    fll = (fpp - jet.dA / jet.A * fp) / jet.A**2
    W = np.sqrt(1.0 + fl * fl)
    with np.errstate(divide="ignore", invalid="ignore"):
        tang = jet.dB / (jet.A * jet.B) * fl / W
    return (fll / W - jet.p_rad) / W**2 + 2.0 * (tang - jet.p_tan)


def _center_value(jet, f, h):
    # at a regular center B_l f_l / B -> f_ll, A = 1, W = 1
    fll0 = 2.0 * (f[1] - f[0]) / (h * h * jet.A[0] ** 2)
    return 3.0 * fll0 - jet.p_rad[0] - 2.0 * jet.p_tan[0]


def jang_residual(data: SphericalDataSet, f) -> RadialField:
    """Left side of Jang's equation for a radial ``f`` sampled on the data grid."""
    g = data.grid
    f = np.asarray(f, dtype=float)
    h = g.spacing
    fp = np.gradient(f, h, edge_order=2)
    fpp = np.empty_like(f)
    fpp[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2
    fpp[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / h**2
    fpp[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h**2
    jet = data.jet()
    res = _operator(jet, f, fp, fpp)
    if data.is_ball:
        res[0] = _center_value(jet, f, h)
    return g.field(res)


def _newton_residual(data: SphericalDataSet, jet, scale: float):
    h = data.grid.spacing
    p_rad, p_tan = scale * jet.p_rad, scale * jet.p_tan
    jet_s = jet._replace(p_rad=p_rad, p_tan=p_tan)
    ball = data.is_ball

    def residual(f):
        r = np.empty_like(f)
        fp = (f[2:] - f[:-2]) / (2.0 * h)
        fpp = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2
        sub = jet_s._replace(**{k: getattr(jet_s, k)[1:-1] for k in jet_s._fields})
        r[1:-1] = _operator(sub, f[1:-1], fp, fpp)
        r[0] = _center_value(jet_s, f, h) if ball else f[0]
        r[-1] = f[-1]
        return r

    return residual


def _roundoff_floor(jet, grid):
    """Smallest residual the discrete operator can certify for a given iterate.

    The second difference amplifies a relative rounding error ``eps |f|`` by
    ``4 / (A h)^2``; on fine grids with an O(1) graph this exceeds 1e-10.
    """
    amp = 64.0 * np.finfo(float).eps / (float(np.min(jet.A)) * grid.spacing) ** 2
    return lambda f: amp * (1.0 + float(np.max(np.abs(f))))


def _solve_at(data, jet, scale, f0, tol, max_iter=40):
    residual = _newton_residual(data, jet, scale)
    return damped_newton(residual, lambda f: fd_tridiagonal_jacobian(residual, f), f0, tol,
                         solve=lambda J, r: solve_tridiagonal(*J, r), max_iter=max_iter,
                         floor=_roundoff_floor(jet, data.grid))


def jang_solve(data: SphericalDataSet, tol: Tolerances = Tolerances(), *,
               continuation_steps: int = 10) -> JangSolution:
    """Damped-Newton solve of Jang's equation with ``f = 0`` on every boundary sphere."""
    horizons = horizon_scan(data)
    if horizons:
        raise DataRejected(f"apparent horizon at s = {horizons[0][0]:.10g}: Jang's equation "
                           "is not solvable with Dirichlet data", stage="jang", horizons=horizons)
    g = data.grid
    jet = data.jet()
    f0 = np.zeros(g.n + 1)
    steps = 0
    try:
        res = _solve_at(data, jet, 1.0, f0, tol.newton_tol)
    except NewtonFailure as exc:
        log.info("direct Jang solve stalled (%s); continuing in the momentum amplitude", exc)
        f = f0
        res = None
        for k in range(1, continuation_steps + 1):
            try:
                res = _solve_at(data, jet, k / continuation_steps, f, tol.newton_tol)
            except NewtonFailure as exc2:
                raise JangBreakdown(f"Jang breakdown at continuation step {k}/{continuation_steps}: {exc2}",
                                    stage="jang", **exc2.details) from exc2
            f = res.x
        steps = continuation_steps
    f = res.x
    final = _newton_residual(data, jet, 1.0)(f)
    rnorm = float(np.max(np.abs(final)))
    if not rnorm <= max(tol.newton_tol, _roundoff_floor(jet, g)(f)):
        raise JangBreakdown(f"Jang residual {rnorm:.3e} above tolerance", stage="jang")
    fp = derivative(g.field(f)).values.copy()
    if data.is_ball:
        fp[0] = 0.0
    W = np.sqrt(1.0 + (fp / jet.A) ** 2)
    return JangSolution(g.field(f), g.field(fp), g.field(W), res.iterations, rnorm,
                        tuple(res.history), steps)


def graph_second_fundamental_form(jet, fp, fpp):
    """Radial and tangential eigenvalues of the graph's second fundamental form.

    Feeding these back as ``(p_rad, p_tan)`` makes ``f`` an exact Jang solution.
    """
    fl = fp / jet.A
    fll = (fpp - jet.dA / jet.A * fp) / jet.A**2
    W = np.sqrt(1.0 + fl * fl)
    with np.errstate(divide="ignore", invalid="ignore"):
        tang = jet.dB / (jet.A * jet.B) * fl / W
    return fll / W, tang


def graph_geometry(data: SphericalDataSet, sol: JangSolution) -> GraphData:
    g = data.grid
    j = data.jet()
    A, dA, B, dB, d2B = j.A, j.dA, j.B, j.dB, j.d2B
    pr, dpr, pt, dpt = j.p_rad, j.dp_rad, j.p_tan, j.dp_tan
    fl = sol.fprime.values / A
    W = np.sqrt(1.0 + fl * fl)
    v = fl / W
    ball = data.is_ball
    with np.errstate(divide="ignore", invalid="ignore"):
        k = dB / (A * B)                                   # B_l / B
        dk = d2B / (A * B) - dB * (dA * B + A * dB) / (A * B) ** 2
        vl = pr * (1.0 - v * v) + 2.0 * pt - 2.0 * k * v   # Jang's equation
        if ball:
            vl[0] = (pr[0] + 2.0 * pt[0]) / 3.0
            k[0] = dk[0] = 0.0
        dv = A * vl
        dW = v * dv * W**3
        dvl = dpr * (1.0 - v * v) - 2.0 * pr * v * dv + 2.0 * dpt - 2.0 * dk * v - 2.0 * k * dv
        X = v * (W * vl - pr / W)
        dX = dv * (W * vl - pr / W) + v * (dW * vl + W * dvl - dpr / W + pr * dW / W**2)
        Abar = A * W
        dAbar = dA * W + A * dW
        Rbar = -4.0 / (Abar * B) * (d2B / Abar - dB * dAbar / Abar**2) + 2.0 / B**2 * (1.0 - (dB / Abar) ** 2)
        divX = (dX + 2.0 * dB / B * X) / Abar
        hp2 = (vl - pr / W**2) ** 2 + 2.0 * (k * v - pt) ** 2
    if ball:
        Rbar = _center_fill(Rbar)
        divX[0] = 3.0 * dX[0] / Abar[0]
        X[0] = 0.0
        hp2[0] = ((pr[0] + 2.0 * pt[0]) / 3.0 - pr[0]) ** 2 + 2.0 * ((pr[0] + 2.0 * pt[0]) / 3.0 - pt[0]) ** 2
    Hbar = float(2.0 * dB[-1] / (Abar[-1] * B[-1]))
    return GraphData(g.field(Abar), g.field(Rbar), g.field(X), g.field(divX), Hbar, float(X[-1]),
                     g.field(v), g.field(B), g.field(dB), g.field(hp2), ball)


def check_eq20(gd: GraphData) -> RadialField:
    """Pointwise ``R_bar - 2|X|^2 + 2 div X``; nonnegative for Jang graphs of admissible data."""
    X = gd.X_rad.values
    return gd.grid.field(gd.Rbar.values - 2.0 * X * X + 2.0 * gd.divX.values)
