"""Quasi-spherical flow on the exterior parallel foliation of a convex surface.

The surfaces ``Y = X + r N`` of a strictly convex base have principal
curvatures ``kappa_i / (1 + r kappa_i)``; the lapse ``h`` of the scalar-flat
metric ``h^2 dr^2 + g_r`` solves

    dh/dr = (2 h^2 Lap_r h + (h - h^3) R_r) / (2 H0_r).

Space is discretized by finite volumes.  On a node grid ``theta_j = j pi / n``
(``n = 2m``) the even nodes are cell faces (the poles included, where the flux
vanishes with ``rho``) and the odd nodes are cell centers.  Cell volumes scale
exactly like the area element, ``V_j(r) = V_j(0)(1 + r k1)(1 + r k2)``, which
makes ``V_j H0_j`` affine in ``r`` with slope ``V_j R_j``.  Together with the
telescoping fluxes this makes

    dm/dr = -(1 / 16 pi G) sum_j V_j R_j (1 - h_j)^2 / h_j

an exact identity of the semi-discrete system, so any discrepancy between a
difference quotient of ``m`` and that sum is pure r-discretization error.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, FlowBreakdown, NonconvergenceError
from .radial import Tolerances, integrate_ode
from .surface import ProfileEmbedding

log = logging.getLogger(__name__)

__all__ = ["ParallelFoliation", "FoliationSlice", "FlowState", "MassAspect", "parallel_geometry",
           "flow_solve", "mass_aspect", "monotonicity_check", "asymptotics_check",
           "write_flow_csv", "eq11_convergence", "CSV_COLUMNS"]

CSV_COLUMNS = ("r", "m_r", "h_min", "h_max", "rhs11", "dmdr_fd")


@dataclass(frozen=True)
class FoliationSlice:
    r: float
    kappa1: np.ndarray = field(repr=False)
    kappa2: np.ndarray = field(repr=False)
    H0: np.ndarray = field(repr=False)
    Rr: np.ndarray = field(repr=False)
    embedding: ProfileEmbedding = field(repr=False)

    @property
    def area(self) -> float:
        return self.embedding.area


def parallel_geometry(base: ProfileEmbedding, r: float) -> FoliationSlice:
    """Geometry of the parallel surface at distance ``r`` on the base's node grid."""
    if r < 0:
        raise ConfigError("parallel surfaces are only defined for r >= 0")
    off = base.offset(r)
    return FoliationSlice(r, off.kappa1, off.kappa2, off.H0, 2.0 * off.kappa1 * off.kappa2, off)


class ParallelFoliation:
    """Finite-volume data of the foliation: cells between even nodes of the base grid."""

    def __init__(self, base: ProfileEmbedding):
        if base.n % 2:
            raise ConfigError("foliation needs an even number of theta intervals")
        self.base = base
        m = base.n // 2
        self.cells = m
        h = base.metric.spacing
        self._dtheta = h
        w = base.metric.area_element
        # Simpson on each pair of intervals gives the cell volume at r = 0
        self.volume0 = 2.0 * np.pi * (h / 3.0) * (w[0:-1:2] + 4.0 * w[1::2] + w[2::2])
        self.k1 = np.asarray(base.kappa1[1::2])
        self.k2 = np.asarray(base.kappa2[1::2])
        self._face_rho = np.asarray(base.rho[2:-1:2])
        self._face_sqrtA = np.sqrt(base.metric.A[2:-1:2])
        self._face_k1 = np.asarray(base.kappa1[2:-1:2])
        self._face_k2 = np.asarray(base.kappa2[2:-1:2])
        self.theta_centers = np.asarray(base.theta[1::2])
        self.rho_centers = np.asarray(base.rho[1::2])
        self.z_centers = np.asarray(base.z[1::2])
        nr, nz = base.normal
        self.normal_centers = (np.asarray(nr[1::2]), np.asarray(nz[1::2]))
        self.mean_radius = base.mean_radius
        self.z_mid = 0.5 * (float(base.z.min()) + float(base.z.max()))

    @cached_property
    def is_round(self) -> bool:
        k = np.concatenate((self.base.kappa1, self.base.kappa2))
        return bool(np.ptp(k) <= 1e-9 * np.abs(k).max())

    def volumes(self, r: float) -> np.ndarray:
        return self.volume0 * (1.0 + r * self.k1) * (1.0 + r * self.k2)

    def H0(self, r: float) -> np.ndarray:
        return self.k1 / (1.0 + r * self.k1) + self.k2 / (1.0 + r * self.k2)

    def Rr(self, r: float) -> np.ndarray:
        return 2.0 * self.k1 * self.k2 / ((1.0 + r * self.k1) * (1.0 + r * self.k2))

    def weighted_H0(self, r: float) -> np.ndarray:
        """``V_j(r) H0_j(r)``, written so it stays exact as ``r`` grows."""
        return self.volume0 * (self.k1 + self.k2 + 2.0 * r * self.k1 * self.k2)

    @property
    def weighted_R(self) -> np.ndarray:
        """``V_j(r) R_j(r)``, independent of ``r``."""
        return 2.0 * self.volume0 * self.k1 * self.k2

    def conductance(self, r: float) -> np.ndarray:
        """Interior face coefficients ``2 pi rho_r / sqrt(A_r) / (2 dtheta)``."""
        return (2.0 * np.pi * self._face_rho * (1.0 + r * self._face_k2)
                / (self._face_sqrtA * (1.0 + r * self._face_k1)) / (2.0 * self._dtheta))

    def laplacian(self, r: float, h: np.ndarray) -> np.ndarray:
        flux = np.zeros(self.cells + 1)
        flux[1:-1] = self.conductance(r) * np.diff(h)
        return np.diff(flux) / self.volumes(r)

    def rhs(self, r: float, h: np.ndarray) -> np.ndarray:
        return (2.0 * h * h * self.laplacian(r, h) + (h - h**3) * self.Rr(r)) / (2.0 * self.H0(r))

    def positions(self, r: float):
        """``(rho, z)`` of the cell centers on the surface at distance ``r``."""
        nr, nz = self.normal_centers
        return self.rho_centers + r * nr, self.z_centers + r * nz

    def radial_distance(self, r: float) -> np.ndarray:
        rho, z = self.positions(r)
        return np.hypot(rho, z - self.z_mid)

    def cell_values(self, h0) -> np.ndarray:
        """Accept a scalar, a node field or a cell field and return cell values."""
        h0 = np.asarray(h0, dtype=float)
        if h0.ndim == 0:
            return np.full(self.cells, float(h0))
        if h0.shape == (self.base.n + 1,):
            return h0[1::2].copy()
        if h0.shape == (self.cells,):
            return h0.copy()
        raise ConfigError(f"initial lapse has shape {h0.shape}; expected a scalar, "
                          f"{self.base.n + 1} nodes or {self.cells} cells")


@dataclass
class FlowState:
    foliation: ParallelFoliation = field(repr=False)
    r: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)  # shape (len(r), cells)
    mode: str = "riemannian"
    reduced: bool = False
    nfev: int = 0

    @property
    def sigma(self) -> np.ndarray:
        return np.log1p(self.r / self.foliation.mean_radius)

    @property
    def h_min(self) -> np.ndarray:
        return self.h.min(axis=1)

    @property
    def h_max(self) -> np.ndarray:
        return self.h.max(axis=1)

    @property
    def r_max(self) -> float:
        return float(self.r[-1])


def stored_radii(mean_radius: float, r_max: float, n_r: int) -> np.ndarray:
    """Output radii uniform in ``log(1 + r / mean_radius)``."""
    sig = np.linspace(0.0, np.log1p(r_max / mean_radius), n_r + 1)
    r = mean_radius * np.expm1(sig)
    r[-1] = r_max
    return r


def flow_solve(fol: ParallelFoliation, h0, r_max: float, tol: Tolerances = Tolerances(), *,
               n_r: int = 400, mode: str = "riemannian", reduce_symmetric: bool = True,
               h_floor: float = 1e-8) -> FlowState:
    if mode not in ("riemannian", "general"):
        raise ConfigError(f"unknown flow mode {mode!r}")
    if not r_max > 0 or n_r < 4:
        raise ConfigError("flow needs r_max > 0 and at least 4 stored radii")
    h_init = fol.cell_values(h0)
    if not np.all(np.isfinite(h_init)) or np.any(h_init <= 0):
        raise ConfigError("initial lapse must be finite and positive")
    r_eval = stored_radii(fol.mean_radius, r_max, n_r)

    # the unknown is w = h - 1: the mass aspect is rho (h - 1) / h, so the tolerances must
    # control h - 1 relative to itself, not h, once h is close to one far out
    def floor_event(r, w):
        return 1.0 + float(np.min(w)) - h_floor
    floor_event.terminal = True
    floor_event.direction = -1

    # a round base with theta-constant data (up to curvature roundoff) stays theta-constant,
    # and the flow is then the scalar ODE for parallel round spheres
    reduced = reduce_symmetric and fol.is_round and np.ptp(h_init) <= 1e-10 * np.abs(h_init).max()
    if reduced:
        a = 2.0 / float(np.mean(fol.k1 + fol.k2))
        h_init = np.full(fol.cells, float(np.mean(h_init)))

        def rhs(r, w):
            return -w * (1.0 + w) * (2.0 + w) / (2.0 * (a + r))
        traj = integrate_ode(rhs, [h_init[0] - 1.0], (0.0, r_max), tol, t_eval=r_eval, events=floor_event)
        h = 1.0 + np.repeat(traj.y, fol.cells, axis=1)
    else:
        traj = integrate_ode(lambda r, w: fol.rhs(r, 1.0 + w), h_init - 1.0, (0.0, r_max), tol,
                             t_eval=r_eval, events=floor_event)
        h = 1.0 + traj.y
    h[0] = h_init
    if not np.all(h > 0):
        bad = int(np.argmax(np.any(h <= 0, axis=1)))
        raise FlowBreakdown("lapse lost positivity", last_r=float(r_eval[max(bad - 1, 0)]))
    log.debug("flow: %d rhs evaluations (reduced=%s)", traj.nfev, reduced)
    return FlowState(fol, r_eval, h, mode, bool(reduced), traj.nfev)


@dataclass(frozen=True)
class MassAspect:
    r: np.ndarray = field(repr=False)
    m: np.ndarray = field(repr=False)
    m_inf: float
    m_inf_quadratic: float
    m_o: float
    kappa_bound: float
    kappa_stable: bool
    tail_samples: int
    G: float = 1.0

    @property
    def m0(self) -> float:
        return float(self.m[0])

    @property
    def max_increase(self) -> float:
        return float(np.max(np.diff(self.m), initial=0.0))

    @property
    def extrapolations_agree(self) -> bool:
        scale = max(abs(self.m_inf), abs(self.m_inf_quadratic))
        return abs(self.m_inf - self.m_inf_quadratic) <= 1e-3 * scale or scale <= 1e-12


def mass_values(fol: ParallelFoliation, flow: FlowState, G: float = 1.0) -> np.ndarray:
    out = np.empty(flow.r.size)
    for k, r in enumerate(flow.r):
        out[k] = np.sum(fol.weighted_H0(r) * (1.0 - 1.0 / flow.h[k]))
    return out / (8.0 * np.pi * G)


def rhs11_values(fol: ParallelFoliation, flow: FlowState, G: float = 1.0) -> np.ndarray:
    h = flow.h
    return -(fol.weighted_R[None, :] * (1.0 - h) ** 2 / h).sum(axis=1) / (16.0 * np.pi * G)


def _tail(flow: FlowState) -> np.ndarray:
    return flow.r >= 0.5 * flow.r_max


def _fit_mass_at_infinity(r, m, ref):
    x = 1.0 / (ref + r)
    lin = np.polyfit(x, m, 1)
    quad = np.polyfit(x, m, 2)
    return float(lin[-1]), float(quad[-1])


def asymptotics_check(flow: FlowState):
    """Fit ``(h - 1) rho = m_o + b / rho`` on the tail; return ``(m_o, kappa_bound, stable)``.

    ``kappa_bound`` is the largest ``rho^2 |h - 1 - m_o / rho|`` on the tail.
    ``stable`` says the same quantity over the second half of the last decade
    of ``rho`` is at most 1.2 times its value over the first half.
    """
    fol = flow.foliation
    tail = np.flatnonzero(_tail(flow))
    if tail.size < 20:
        raise ConfigError(f"asymptotic fit needs >= 20 tail radii, have {tail.size}")
    rho = np.array([fol.radial_distance(flow.r[k]) for k in tail])
    dev = flow.h[tail] - 1.0
    y = (dev * rho).ravel()
    X = np.column_stack((np.ones(y.size), 1.0 / rho.ravel()))
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    m_o = float(coef[0])
    rem = rho * rho * np.abs(dev - m_o / rho)
    kappa_bound = float(rem.max())
    rho_all = np.array([fol.radial_distance(r).mean() for r in flow.r])
    decade = rho_all >= rho_all[-1] / 10.0
    idx = np.flatnonzero(decade)
    half = idx.size // 2
    rem_all = np.array([np.max(p * p * np.abs(flow.h[k] - 1.0 - m_o / p))
                        for k, p in ((k, fol.radial_distance(flow.r[k])) for k in idx)])
    first, second = rem_all[:half].max(), rem_all[half:].max()
    stable = bool(second <= 1.2 * first + 1e-14)
    return m_o, kappa_bound, stable


def mass_aspect(fol: ParallelFoliation, flow: FlowState, G: float = 1.0, *,
                monotone_slack: float = 1e-9) -> MassAspect:
    if not G > 0:
        raise ConfigError("G must be positive")
    m = mass_values(fol, flow, G)
    tail = _tail(flow)
    m_inf, m_inf_q = _fit_mass_at_infinity(flow.r[tail], m[tail], fol.mean_radius)
    m_o, kb, stable = asymptotics_check(flow)
    rise = float(np.max(np.diff(m), initial=0.0))
    if rise > monotone_slack:
        raise NonconvergenceError(f"mass aspect increases by {rise:.3e}: integration accuracy lost",
                                  stage="flow", max_increase=rise)
    return MassAspect(flow.r, m, m_inf, m_inf_q, m_o, kb, stable, int(tail.sum()), G)


@dataclass(frozen=True)
class MonotonicityReport:
    rhs11: np.ndarray = field(repr=False)
    dmdr_fd: np.ndarray = field(repr=False)
    discrepancy: float
    rhs_max: float
    max_increase: float

    @property
    def passed(self) -> bool:
        return self.rhs_max <= 0.0 and self.max_increase <= 1e-9


def monotonicity_check(fol: ParallelFoliation, flow: FlowState, G: float = 1.0,
                       ma: MassAspect | None = None) -> MonotonicityReport:
    """Compare the difference quotient of ``m`` with the closed-form ``dm/dr`` at the stored radii."""
    m = ma.m if ma is not None else mass_values(fol, flow, G)
    rhs = rhs11_values(fol, flow, G)
    sig = flow.sigma
    dmdr = np.gradient(m, sig, edge_order=2) / (fol.mean_radius + flow.r)
    # the discrepancy is measured where the difference quotient is centered
    gap = np.abs(dmdr - rhs)[1:-1]
    return MonotonicityReport(rhs, dmdr, float(gap.max()), float(rhs.max()),
                              float(np.max(np.diff(m), initial=0.0)))


@dataclass(frozen=True)
class ConvergenceStudy:
    n_r: int
    coarse: float
    fine: float

    @property
    def order(self) -> float:
        if self.fine == 0.0:
            return float("inf")
        return float(np.log2(self.coarse / self.fine))


def eq11_convergence(fol: ParallelFoliation, h0, r_max: float, n_r: int = 400,
                     tol: Tolerances = Tolerances(), G: float = 1.0) -> ConvergenceStudy:
    """Difference-quotient error against the closed-form dm/dr at ``n_r`` and ``2 n_r`` radii.

    Both errors are taken at the interior radii of the coarse grid, which the
    fine grid contains, so the ratio measures the order at fixed ``r``.
    """
    errs = []
    for k, nr in enumerate((n_r, 2 * n_r)):
        flow = flow_solve(fol, h0, r_max, tol, n_r=nr, reduce_symmetric=False)
        mono = monotonicity_check(fol, flow, G)
        gap = np.abs(mono.dmdr_fd - mono.rhs11)[:: 2 if k else 1]
        errs.append(float(gap[1:-1].max()))
    return ConvergenceStudy(n_r, errs[0], errs[1])


def write_flow_csv(flow: FlowState, ma: MassAspect, mono: MonotonicityReport, target=None) -> str:
    """Write the per-radius flow table; returns the CSV text and writes it to ``target`` if given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for k in range(flow.r.size):
        w.writerow([repr(float(x)) for x in (flow.r[k], ma.m[k], flow.h_min[k], flow.h_max[k],
                                             mono.rhs11[k], mono.dmdr_fd[k])])
    text = buf.getvalue()
    if target is not None:
        with open(target, "w", newline="") as fh:
            fh.write(text)
    return text
