"""Axisymmetric metrics on the 2-sphere and their convex surface-of-revolution embeddings.

A metric ``A(theta) dtheta^2 + B(theta) dphi^2`` is sampled on the uniform
nodes ``theta_j = j pi / n`` including both poles.  Pole regularity makes
``q = B / sin^2(theta)`` smooth and even through each pole with ``q = A``
there, so theta-derivatives are taken with fourth-order central differences
on the parity extension of each field, and the two ``0/0`` quotients are
replaced by their limits at the poles:

    rho_theta = d(sqrt q)/dtheta sin(theta) + sqrt(q) cos(theta),
    K = -d(rho_theta / sqrt A)/dtheta / (sqrt(A q) sin(theta)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .errors import ConfigError, EmbeddingError, GridError

__all__ = ["AxisymMetric", "ProfileEmbedding", "round_metric", "ellipsoid_metric",
           "ellipsoid_curvatures", "gauss_curvature", "weyl_embed", "minkowski_margin",
           "gauss_bonnet_integral", "surface_integral", "metric_from_json", "theta_derivative"]


def theta_derivative(f, h: float, *, sign: float = 1.0, turn: float = 0.0) -> np.ndarray:
    """Fourth-order central d/dtheta on ``[0, pi]`` using the parity extension through each pole.

    Ghost values are ``sign * f`` mirrored about ``theta = 0`` and
    ``sign * f + turn`` mirrored about ``theta = pi``: even fields use
    ``sign = 1``; the tangent angle of a closed profile uses ``sign = -1``
    with ``turn = 2 pi``.
    """
    f = np.asarray(f, dtype=float)
    ext = np.concatenate((sign * f[2:0:-1], f, sign * f[-2:-4:-1] + turn))
    return (-ext[4:] + 8.0 * ext[3:-1] - 8.0 * ext[1:-3] + ext[:-4]) / (12.0 * h)


def _check_n(n: int) -> int:
    if int(n) != n or n < 64 or n % 2:
        raise GridError(f"theta grid needs an even number of intervals >= 64, got {n}")
    return int(n)


@dataclass(frozen=True)
class AxisymMetric:
    n: int
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    label: str = "fields"

    def __post_init__(self):
        n = _check_n(self.n)
        object.__setattr__(self, "n", n)
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        if A.shape != (n + 1,) or B.shape != (n + 1,):
            raise GridError(f"metric arrays need {n + 1} samples")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise GridError("metric samples must be finite")
        if np.any(A <= 0) or np.any(B[1:-1] <= 0):
            raise EmbeddingError("metric is not positive definite")
        scale = A.max()
        if abs(B[0]) > 1e-12 * scale or abs(B[-1]) > 1e-12 * scale:
            raise EmbeddingError("B must vanish at the poles")
        B[0] = B[-1] = 0.0
        for arr in (A, B):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @cached_property
    def theta(self) -> np.ndarray:
        t = np.linspace(0.0, np.pi, self.n + 1)
        t.setflags(write=False)
        return t

    @property
    def spacing(self) -> float:
        return np.pi / self.n

    @cached_property
    def q(self) -> np.ndarray:
        """``B / sin^2`` with the pole limits filled by ``A`` (regularity)."""
        s2 = np.sin(self.theta) ** 2
        q = np.empty(self.n + 1)
        q[1:-1] = self.B[1:-1] / s2[1:-1]
        q[0], q[-1] = self.A[0], self.A[-1]
        return q

    @cached_property
    def area_element(self) -> np.ndarray:
        return np.sqrt(self.A * self.B)

    @cached_property
    def rho_theta(self) -> np.ndarray:
        sq = np.sqrt(self.q)
        return theta_derivative(sq, self.spacing) * np.sin(self.theta) + sq * np.cos(self.theta)

    def scaled(self, lam: float) -> "AxisymMetric":
        return AxisymMetric(self.n, lam * lam * self.A, lam * lam * self.B, label=self.label)

    def to_json(self) -> dict:
        return {"theta_n": self.n, "A": self.A.tolist(), "B": self.B.tolist()}


def round_metric(a: float, n: int = 512) -> AxisymMetric:
    if not a > 0:
        raise ConfigError("sphere radius must be positive")
    t = np.linspace(0.0, np.pi, _check_n(n) + 1)
    return AxisymMetric(n, np.full(n + 1, a * a), (a * np.sin(t)) ** 2, label=f"round(a={a})")


def ellipsoid_metric(a: float, b: float, c: float, n: int = 512) -> AxisymMetric:
    """Metric induced on the ellipsoid with semi-axes ``(a, b, c)``; needs ``a == b``."""
    if not (a > 0 and b > 0 and c > 0):
        raise ConfigError("ellipsoid semi-axes must be positive")
    if a != b:
        raise ConfigError("only ellipsoids of revolution (a == b) are axisymmetric")
    t = np.linspace(0.0, np.pi, _check_n(n) + 1)
    A = a * a * np.cos(t) ** 2 + c * c * np.sin(t) ** 2
    return AxisymMetric(n, A, (a * np.sin(t)) ** 2, label=f"ellipsoid({a},{b},{c})")


def ellipsoid_curvatures(a: float, c: float, theta):
    """Closed-form meridian and parallel curvatures and Gauss curvature of a spheroid."""
    theta = np.asarray(theta, dtype=float)
    A = a * a * np.cos(theta) ** 2 + c * c * np.sin(theta) ** 2
    k_mer = a * c / A**1.5
    k_par = c / (a * np.sqrt(A))
    return k_mer, k_par, c * c / (A * A)


def surface_integral(m: AxisymMetric, f) -> float:
    """``int f dsigma`` by 2 pi times Simpson in theta."""
    return float(2.0 * np.pi * simpson(np.asarray(f) * m.area_element, dx=m.spacing))


def gauss_curvature(m: AxisymMetric, *, require_positive: bool = True) -> np.ndarray:
    h = m.spacing
    c = m.rho_theta / np.sqrt(m.A)
    dc = theta_derivative(c, h)
    den = np.sqrt(m.q * m.A)
    K = np.empty_like(c)
    K[1:-1] = -dc[1:-1] / (den[1:-1] * np.sin(m.theta[1:-1]))
    # sin(theta) ~ theta - 0 and pi - theta at the poles, so K -> -c'' and +c'' over sqrt(qA)
    K[0] = -(-c[2] + 16.0 * c[1] - 15.0 * c[0]) / (6.0 * h * h) / den[0]
    K[-1] = (-c[-3] + 16.0 * c[-2] - 15.0 * c[-1]) / (6.0 * h * h) / den[-1]
    if require_positive and np.any(K <= 0):
        j = int(np.argmin(K))
        raise EmbeddingError(f"Gauss curvature not positive (K = {K[j]:.3e} at theta = {m.theta[j]:.4f})",
                             stage="embedding")
    return K


def gauss_bonnet_integral(m: AxisymMetric) -> float:
    return surface_integral(m, gauss_curvature(m, require_positive=False))


@dataclass(frozen=True)
class ProfileEmbedding:
    metric: AxisymMetric
    rho: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    kappa1: np.ndarray = field(repr=False)
    kappa2: np.ndarray = field(repr=False)

    @property
    def theta(self):
        return self.metric.theta

    @property
    def n(self) -> int:
        return self.metric.n

    @property
    def H0(self) -> np.ndarray:
        return self.kappa1 + self.kappa2

    @cached_property
    def area(self) -> float:
        return surface_integral(self.metric, 1.0)

    @cached_property
    def H0_integral(self) -> float:
        return surface_integral(self.metric, self.H0)

    @property
    def mean_radius(self) -> float:
        return float(np.sqrt(self.area / (4.0 * np.pi)))

    @property
    def normal(self):
        """Outward unit normal ``(N_rho, N_z)`` in the meridian plane."""
        return np.sin(self.psi), -np.cos(self.psi)

    def induced_metric(self):
        """``(A, B)`` recomputed from the profile curve by differencing in theta."""
        h = self.metric.spacing
        dr = np.gradient(self.rho, h, edge_order=2)
        dz = np.gradient(self.z, h, edge_order=2)
        return dr * dr + dz * dz, self.rho**2

    def offset(self, r: float) -> "ProfileEmbedding":
        """Parallel surface at normal distance ``r``; same theta grid, exact curvature law."""
        Nr, Nz = self.normal
        k1 = self.kappa1 / (1.0 + r * self.kappa1)
        k2 = self.kappa2 / (1.0 + r * self.kappa2)
        A = self.metric.A * (1.0 + r * self.kappa1) ** 2
        B = self.metric.B * (1.0 + r * self.kappa2) ** 2
        m = AxisymMetric(self.n, A, B, label=f"{self.metric.label}+{r:g}")
        return ProfileEmbedding(m, self.rho + r * Nr, self.z + r * Nz, self.psi, k1, k2)

    def to_json(self) -> dict:
        return {"theta": self.theta.tolist(), "rho": self.rho.tolist(), "z": self.z.tolist(),
                "kappa1": self.kappa1.tolist(), "kappa2": self.kappa2.tolist(),
                "H0": self.H0.tolist(), "area": self.area, "H0_integral": self.H0_integral}


def weyl_embed(m: AxisymMetric) -> ProfileEmbedding:
    """Realize ``m`` as a convex surface of revolution about the z-axis, bottom pole at the origin."""
    gauss_curvature(m)
    A = m.A
    rt = m.rho_theta
    gap = A - rt * rt
    inner = gap[1:-1]
    if np.any(inner <= 0):
        j = 1 + int(np.argmin(inner))
        raise EmbeddingError(f"A - rho_theta^2 = {gap[j]:.3e} <= 0 at theta = {m.theta[j]:.4f}: "
                             "not realizable as a surface of revolution about this axis", stage="embedding")
    # at the poles the gap vanishes analytically; differencing noise is clipped there only
    zt = np.sqrt(np.maximum(gap, 0.0))
    zt[0] = zt[-1] = 0.0
    rho = np.sqrt(m.B)
    z = cumulative_simpson(zt, dx=m.spacing, initial=0.0)
    psi = np.arctan2(zt, rt)
    psi[0], psi[-1] = 0.0, np.pi
    sA = np.sqrt(A)
    k1 = theta_derivative(psi, m.spacing, sign=-1.0, turn=2.0 * np.pi) / sA
    k2 = np.empty_like(k1)
    k2[1:-1] = zt[1:-1] / (sA[1:-1] * rho[1:-1])
    k2[0], k2[-1] = k1[0], k1[-1]
    if np.any(k1 <= 0) or np.any(k2 <= 0):
        raise EmbeddingError("embedded profile is not strictly convex", stage="embedding")
    for arr in (rho, z, psi, k1, k2):
        arr.setflags(write=False)
    return ProfileEmbedding(m, rho, z, psi, k1, k2)


def minkowski_margin(e: ProfileEmbedding) -> float:
    """``int H0 dsigma - sqrt(16 pi area)``; zero exactly for round spheres."""
    return e.H0_integral - float(np.sqrt(16.0 * np.pi * e.area))


def metric_from_json(doc: dict) -> AxisymMetric:
    if "preset" in doc and ("A" in doc or "B" in doc):
        raise ConfigError("metric document has both a preset and explicit fields")
    if "preset" in doc:
        name = doc["preset"]
        n = int(doc.get("n", doc.get("theta_n", 512)))
        if name == "round":
            return round_metric(float(doc.get("a", 1.0)), n)
        if name == "ellipsoid":
            a = float(doc["a"])
            return ellipsoid_metric(a, float(doc.get("b", a)), float(doc["c"]), n)
        raise ConfigError(f"unknown metric preset {name!r}")
    try:
        return AxisymMetric(int(doc["theta_n"]), doc["A"], doc["B"])
    except KeyError as exc:
        raise ConfigError(f"metric document missing {exc.args[0]!r}") from exc
