"""Spherically symmetric initial data sets.

The metric is ``g = A(s)^2 ds^2 + B(s)^2 dOmega^2`` (``B = s`` unless stated
otherwise, i.e. areal coordinates) and the extrinsic curvature is diagonal in
the orthonormal frame with eigenvalues ``p_rad`` (radial) and ``p_tan`` (twice,
tangential).

Data built from a closed-form :class:`RadialProfile` carries exact derivatives
and can be evaluated off-grid; data given as sampled arrays falls back to
second-order differences and cubic-spline interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import bisect

from .errors import ConfigError, DataRejected, GridError
from .radial import RadialField, RadialGrid, derivative

__all__ = [
    "RadialJet",
    "RadialProfile",
    "SphericalDataSet",
    "ConstraintDensities",
    "BoundaryGeometry",
    "constraint_densities",
    "energy_condition_margin",
    "horizon_scan",
    "boundary_geometry",
    "flat_data",
    "schwarzschild_data",
    "isotropic_schwarzschild",
    "conical_data",
    "perturbed_data",
    "data_from_json",
]


class RadialJet(NamedTuple):
    """Values and the derivatives (in s) every downstream formula needs."""

    s: np.ndarray
    A: np.ndarray
    dA: np.ndarray
    B: np.ndarray
    dB: np.ndarray
    d2B: np.ndarray
    p_rad: np.ndarray
    dp_rad: np.ndarray
    p_tan: np.ndarray
    dp_tan: np.ndarray


class RadialProfile:
    """Closed-form radial data. Subclasses implement :meth:`jet`."""

    name = "profile"

    def jet(self, s) -> RadialJet:
        raise NotImplementedError

    def params(self) -> dict:
        return {}


def _areal(s):
    s = np.asarray(s, dtype=float)
    return s, np.ones_like(s), np.zeros_like(s)


class FlatProfile(RadialProfile):
    name = "flat"

    def __init__(self, p_rad: float = 0.0, p_tan: float = 0.0):
        self.p_rad, self.p_tan = float(p_rad), float(p_tan)

    def jet(self, s):
        s = np.asarray(s, dtype=float)
        one, zero = np.ones_like(s), np.zeros_like(s)
        return RadialJet(s, one, zero, *_areal(s), self.p_rad * one, zero, self.p_tan * one, zero)

    def params(self):
        return {"p_rad": self.p_rad, "p_tan": self.p_tan}


class ConicalProfile(RadialProfile):
    """Constant radial factor ``A = c``: scalar curvature ``2(1 - c^-2)/s^2``."""

    name = "conical"

    def __init__(self, c: float):
        if c <= 0:
            raise ConfigError("conical factor must be positive")
        self.c = float(c)

    def jet(self, s):
        s = np.asarray(s, dtype=float)
        zero = np.zeros_like(s)
        return RadialJet(s, self.c + zero, zero, *_areal(s), zero, zero, zero, zero)

    def params(self):
        return {"c": self.c}


class SchwarzschildProfile(RadialProfile):
    """Time-symmetric slice of Schwarzschild in areal coordinates."""

    name = "schwarzschild"

    def __init__(self, M: float):
        if M < 0:
            raise ConfigError("mass parameter must be nonnegative")
        self.M = float(M)

    def jet(self, s):
        s = np.asarray(s, dtype=float)
        A = (1.0 - 2.0 * self.M / s) ** -0.5
        zero = np.zeros_like(s)
        return RadialJet(s, A, -self.M / s**2 * A**3, *_areal(s), zero, zero, zero, zero)

    def params(self):
        return {"M": self.M}


class IsotropicSchwarzschildProfile(RadialProfile):
    """Schwarzschild slice in isotropic coordinates: ``(1 + M/2s)^4 (ds^2 + s^2 dOmega^2)``."""

    name = "isotropic_schwarzschild"

    def __init__(self, M: float):
        if M < 0:
            raise ConfigError("mass parameter must be nonnegative")
        self.M = float(M)

    def jet(self, s):
        s = np.asarray(s, dtype=float)
        M = self.M
        psi = 1.0 + M / (2.0 * s)
        dpsi = -M / (2.0 * s**2)
        zero = np.zeros_like(s)
        return RadialJet(s, psi**2, 2.0 * psi * dpsi, s * psi**2, 1.0 - M**2 / (4.0 * s**2),
                         M**2 / (2.0 * s**3), zero, zero, zero, zero)

    def params(self):
        return {"M": self.M}


def _smootherstep(x):
    """C^3 step from 0 (x <= -1) to 1 (x >= 1) and its x-derivative."""
    t = np.clip((np.asarray(x, dtype=float) + 1.0) / 2.0, 0.0, 1.0)
    val = t**4 * (35.0 - 84.0 * t + 70.0 * t**2 - 20.0 * t**3)
    dval = 140.0 * t**3 * (1.0 - t) ** 3 / 2.0
    return val, dval


def _bump(x):
    """``(1 - x^2)^4`` on ``|x| < 1``, zero outside; with its x-derivative."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    w = np.where(inside, 1.0 - x**2, 0.0)
    return w**4, np.where(inside, -8.0 * x * w**3, 0.0)


class BumpProfile(RadialProfile):
    """Flat background plus a shell of mass and a tangential momentum bump.

    The mass function ``m(s)`` rises smoothly across ``[c0 - w0, c0 + w0]`` so the
    scalar curvature ``4 m'/s^2`` is nonnegative, and ``p_tan`` is a bump
    supported strictly inside that shell.
    """

    name = "bump"

    def __init__(self, mass: float, c0: float, w0: float, p_amp: float, c1: float, w1: float):
        self.mass, self.c0, self.w0 = float(mass), float(c0), float(w0)
        self.p_amp, self.c1, self.w1 = float(p_amp), float(c1), float(w1)

    def jet(self, s):
        s = np.asarray(s, dtype=float)
        step, dstep = _smootherstep((s - self.c0) / self.w0)
        m, dm = self.mass * step, self.mass * dstep / self.w0
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(s > 0, 1.0 - 2.0 * m / np.where(s > 0, s, 1.0), 1.0)
            A = q**-0.5
            dA = np.where(s > 0, A**3 * (dm / np.where(s > 0, s, 1.0) - m / np.where(s > 0, s, 1.0) ** 2), 0.0)
        b, db = _bump((s - self.c1) / self.w1)
        zero = np.zeros_like(s)
        return RadialJet(s, A, dA, *_areal(s), zero, zero, self.p_amp * b, self.p_amp * db / self.w1)

    def params(self):
        return {"mass": self.mass, "c0": self.c0, "w0": self.w0,
                "p_amp": self.p_amp, "c1": self.c1, "w1": self.w1}


@dataclass(frozen=True)
class SphericalDataSet:
    grid: RadialGrid
    A: RadialField
    p_rad: RadialField
    p_tan: RadialField
    B: RadialField | None = None
    G: float = 1.0
    profile: RadialProfile | None = field(default=None, compare=False)
    label: str = "fields"

    def __post_init__(self):
        for name in ("A", "p_rad", "p_tan", "B"):
            fld = getattr(self, name)
            if fld is not None and fld.grid != self.grid:
                raise GridError(f"field {name} lives on a different grid")
        if not self.G > 0:
            raise ConfigError("gravitational constant must be positive")
        if np.any(self.A.values <= 0):
            raise DataRejected("radial metric factor A must be positive")
        B = self.areal_radius
        if self.grid.is_ball:
            if abs(self.A.values[0] - 1.0) > 1e-8 or abs(B[0]) > 1e-12:
                raise DataRejected("a ball needs a regular center: A(0) = 1, B(0) = 0")
            if self.profile is not None and abs(self.profile.jet(np.array([0.0])).dA[0]) > 1e-8:
                raise DataRejected("a ball needs A'(0) = 0")
            if np.any(B[1:] <= 0):
                raise DataRejected("areal radius must be positive away from the center")
        elif np.any(B <= 0):
            raise DataRejected("areal radius must be positive")

    @property
    def s(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def areal_radius(self) -> np.ndarray:
        return self.grid.nodes if self.B is None else self.B.values

    @property
    def is_ball(self) -> bool:
        return self.grid.is_ball

    @property
    def exact(self) -> bool:
        return self.profile is not None

    def jet(self) -> RadialJet:
        """Nodal values and derivatives; exact for profile-backed data."""
        if self.profile is not None:
            return self.profile.jet(self.grid.nodes)
        g = self.grid
        s = g.nodes
        if self.B is None:
            B, dB, d2B = _areal(s)
        else:
            B = self.B.values
            dB = derivative(self.B).values
            d2B = derivative(g.field(dB)).values
        return RadialJet(s, self.A.values, derivative(self.A).values, B, dB, d2B,
                         self.p_rad.values, derivative(self.p_rad).values,
                         self.p_tan.values, derivative(self.p_tan).values)

    def evaluator(self) -> Callable[[np.ndarray], RadialJet]:
        """Off-grid evaluation (exact for profiles, cubic splines otherwise)."""
        if self.profile is not None:
            return self.profile.jet
        s = self.grid.nodes
        spl = {k: CubicSpline(s, getattr(self, k).values) for k in ("A", "p_rad", "p_tan")}
        splB = CubicSpline(s, self.areal_radius)

        def ev(x):
            x = np.asarray(x, dtype=float)
            return RadialJet(x, spl["A"](x), spl["A"](x, 1), splB(x), splB(x, 1), splB(x, 2),
                             spl["p_rad"](x), spl["p_rad"](x, 1), spl["p_tan"](x), spl["p_tan"](x, 1))
        return ev

    def without_profile(self) -> "SphericalDataSet":
        """Same samples, but derivatives by finite differences."""
        B = self.B if self.B is not None else None
        return SphericalDataSet(self.grid, self.A, self.p_rad, self.p_tan, B, self.G, None, self.label)

    def is_time_symmetric(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.p_rad.values) <= tol) and np.all(np.abs(self.p_tan.values) <= tol))

    def to_json(self) -> dict:
        doc = {"grid": self.grid.to_json(), "G": self.G}
        if self.profile is not None:
            doc["preset"] = {"name": self.profile.name, **self.profile.params()}
        else:
            fields = {"A": self.A.values.tolist(), "p_rad": self.p_rad.values.tolist(),
                      "p_tan": self.p_tan.values.tolist()}
            if self.B is not None:
                fields["B"] = self.B.values.tolist()
            doc["fields"] = fields
        return doc


def from_profile(profile: RadialProfile, s_in: float, s_out: float, n: int, G: float = 1.0,
                 label: str | None = None) -> SphericalDataSet:
    grid = RadialGrid(float(s_in), float(s_out), n)
    jet = profile.jet(grid.nodes)
    B = None if np.array_equal(jet.B, grid.nodes) else grid.field(jet.B)
    return SphericalDataSet(grid, grid.field(jet.A), grid.field(jet.p_rad), grid.field(jet.p_tan),
                            B, G, profile, label or profile.name)


def flat_data(s_out: float = 1.0, n: int = 200, s_in: float = 0.0, *, p_rad: float = 0.0,
              p_tan: float = 0.0, G: float = 1.0) -> SphericalDataSet:
    return from_profile(FlatProfile(p_rad, p_tan), s_in, s_out, n, G)


def schwarzschild_data(M: float, s_in: float, s_out: float, n: int, G: float = 1.0) -> SphericalDataSet:
    if not s_in > 2.0 * M:
        raise DataRejected(f"Schwarzschild slice needs s_in > 2M = {2.0 * M}")
    return from_profile(SchwarzschildProfile(M), s_in, s_out, n, G)


def isotropic_schwarzschild(M: float, s_in: float, s_out: float, n: int, G: float = 1.0) -> SphericalDataSet:
    if not s_in > 0:
        raise DataRejected("isotropic coordinates are singular at s = 0")
    return from_profile(IsotropicSchwarzschildProfile(M), s_in, s_out, n, G)


def conical_data(c: float, s_in: float, s_out: float, n: int, G: float = 1.0) -> SphericalDataSet:
    if not s_in > 0:
        raise DataRejected("a conical metric has no regular center")
    return from_profile(ConicalProfile(c), s_in, s_out, n, G)


def _center_fill(arr: np.ndarray) -> np.ndarray:
    """Replace the s = 0 value by quadratic extrapolation from nodes 1..3."""
    arr[0] = 3.0 * arr[1] - 3.0 * arr[2] + arr[3]
    return arr


def scalar_curvature(A, dA, B, dB, d2B, ball: bool) -> np.ndarray:
    """Scalar curvature of ``A^2 ds^2 + B^2 dOmega^2`` from nodal jets."""
    with np.errstate(divide="ignore", invalid="ignore"):
        R = -4.0 / (A * B) * (d2B / A - dB * dA / A**2) + 2.0 / B**2 * (1.0 - (dB / A) ** 2)
    return _center_fill(R) if ball else R


@dataclass(frozen=True)
class ConstraintDensities:
    mu: RadialField
    J_rad: RadialField
    R: RadialField


def constraint_densities(data: SphericalDataSet) -> ConstraintDensities:
    j = data.jet()
    R = scalar_curvature(j.A, j.dA, j.B, j.dB, j.d2B, data.is_ball)
    mu = 0.5 * (R + 4.0 * j.p_rad * j.p_tan + 2.0 * j.p_tan**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        J = (-2.0 * j.dp_tan + 2.0 * j.dB / j.B * (j.p_rad - j.p_tan)) / j.A
    if data.is_ball:
        J[0] = 0.0  # radial component of a smooth vector field vanishes at the center
    g = data.grid
    return ConstraintDensities(g.field(mu), g.field(J), g.field(R))


def energy_condition_margin(d: ConstraintDensities) -> RadialField:
    return d.mu.grid.field(d.mu.values - np.abs(d.J_rad.values))


def _expansions(jet: RadialJet):
    with np.errstate(divide="ignore", invalid="ignore"):
        H = 2.0 * jet.dB / (jet.A * jet.B)
    return H, 2.0 * jet.p_tan


def horizon_scan(data: SphericalDataSet, rtol: float = 1e-12) -> list[tuple[float, int]]:
    """Radii of coordinate spheres with ``H_s + P_s = 0`` (sign +1) or ``H_s - P_s = 0`` (sign -1)."""
    s = data.grid.nodes
    ev = data.evaluator()
    H, P = _expansions(data.jet())
    lo = 1 if data.is_ball else 0  # the center is not a sphere
    roots: list[tuple[float, int]] = []
    for sign in (1, -1):
        phi = (H + sign * P)[lo:]
        ss = s[lo:]

        def fn(x, sign=sign):
            hh, pp = _expansions(ev(np.array([x])))
            return float(hh[0] + sign * pp[0])

        for i in range(phi.size - 1):
            a, b = phi[i], phi[i + 1]
            if a == 0.0:
                roots.append((float(ss[i]), sign))
            elif a * b < 0:
                x = bisect(fn, ss[i], ss[i + 1], xtol=rtol * abs(ss[i + 1]), rtol=4 * np.finfo(float).eps)
                roots.append((float(x), sign))
        if phi[-1] == 0.0:
            roots.append((float(ss[-1]), sign))
    return sorted(roots)


@dataclass(frozen=True)
class BoundaryGeometry:
    s_b: float
    areal_radius: float
    H: float
    P: float
    H0: float
    area: float
    sqrt8rhomu: float


def boundary_geometry(data: SphericalDataSet) -> BoundaryGeometry:
    j = data.jet()
    H, P = _expansions(j)
    Hb, Pb = float(H[-1]), float(P[-1])
    if not Hb > 0:
        raise DataRejected(f"outer boundary has nonpositive mean curvature H = {Hb:.6g}")
    if not Hb * Hb > Pb * Pb:
        raise DataRejected(f"mean curvature vector not spacelike: H^2 - P^2 = {Hb * Hb - Pb * Pb:.6g}")
    rb = float(j.B[-1])
    return BoundaryGeometry(float(data.grid.s_max), rb, Hb, Pb, 2.0 / rb, 4.0 * math.pi * rb * rb,
                            math.sqrt(Hb * Hb - Pb * Pb))


def perturbed_data(seed: int, amplitude: float = 0.05, *, s_out: float = 5.0, n: int = 2000,
                   G: float = 1.0, max_halvings: int = 60) -> SphericalDataSet:
    """Random ball data with a mass shell and a tangential momentum bump.

    The scalar curvature of the shell is linear in the amplitude, the current
    it must dominate is linear in the momentum amplitude, so the momentum bump
    is halved until the local energy condition holds on the grid; the mass is
    halved only if the shell would create an apparent horizon.
    """
    rng = np.random.default_rng(seed)
    c0 = s_out * rng.uniform(0.35, 0.55)
    w0 = s_out * rng.uniform(0.2, 0.3)
    c1 = c0 + w0 * rng.uniform(-0.3, 0.3)
    w1 = (w0 - abs(c1 - c0)) * rng.uniform(0.5, 0.85)
    mass = float(amplitude) * rng.uniform(0.5, 1.0) * s_out
    p_amp = float(amplitude) * rng.uniform(0.5, 1.0) * rng.choice([-1.0, 1.0]) * 4.0 / s_out
    s = np.linspace(0.0, s_out, n + 1)
    for _ in range(max_halvings + 1):
        prof = BumpProfile(mass=mass, c0=c0, w0=w0, p_amp=p_amp, c1=c1, w1=w1)
        with np.errstate(invalid="ignore"):
            finite = np.all(np.isfinite(prof.jet(s).A))
        if not finite:
            mass *= 0.5
            continue
        data = from_profile(prof, 0.0, s_out, n, G, label=f"perturbed(seed={seed})")
        if horizon_scan(data):
            mass *= 0.5
            continue
        if energy_condition_margin(constraint_densities(data)).min() >= -1e-12:
            return data
        p_amp *= 0.5
    raise DataRejected(f"seed {seed}: energy condition unattainable after {max_halvings} halvings")


_PRESETS = {
    "flat": lambda g, p: flat_data(g.s_max, g.n, g.s_min, p_rad=p.get("p_rad", 0.0), p_tan=p.get("p_tan", 0.0)),
    "schwarzschild": lambda g, p: schwarzschild_data(p["M"], g.s_min, g.s_max, g.n),
    "isotropic_schwarzschild": lambda g, p: isotropic_schwarzschild(p["M"], g.s_min, g.s_max, g.n),
    "conical": lambda g, p: conical_data(p["c"], g.s_min, g.s_max, g.n),
}


def data_from_json(doc: dict) -> SphericalDataSet:
    """Build a data set from its JSON document (see README for the schema)."""
    try:
        G = float(doc.get("G", 1.0))
        has_preset, has_fields = "preset" in doc, "fields" in doc
        if has_preset == has_fields:
            raise ConfigError("data document needs exactly one of 'preset' or 'fields'")
        if has_preset:
            p = dict(doc["preset"])
            name = p.pop("name")
            if name == "perturbed":
                gdoc = doc.get("grid", {})
                return perturbed_data(int(p.get("seed", 0)), float(p.get("amplitude", 0.05)),
                                      s_out=float(gdoc.get("s_max", 5.0)), n=int(gdoc.get("n", 2000)), G=G)
            if name == "bump":
                g = RadialGrid(**doc["grid"])
                return from_profile(BumpProfile(**p), g.s_min, g.s_max, g.n, G)
            if name not in _PRESETS:
                raise ConfigError(f"unknown data preset {name!r}")
            g = RadialGrid(**doc["grid"])
            data = _PRESETS[name](g, p)
            return from_profile(data.profile, g.s_min, g.s_max, g.n, G, data.label)
        g = RadialGrid(**doc["grid"])
        f = doc["fields"]
        B = g.field(f["B"]) if "B" in f else None
        return SphericalDataSet(g, g.field(f["A"]), g.field(f["p_rad"]), g.field(f["p_tan"]), B, G)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed data document: {exc}") from exc
