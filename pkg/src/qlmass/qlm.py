"""Quasi-local energy, the Schwarzschild mass function, the mass chain and the boundary inequality."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, InequalityViolation
from .initial_data import BoundaryGeometry
from .surface import ProfileEmbedding, minkowski_margin

__all__ = ["energy", "schwarzschild_mass", "QuasiLocalReport", "ChainResult", "chain_check",
           "Lemma6Sample", "lemma6_margin", "lemma6_margins", "lemma6_lhs", "sample_lemma6",
           "horizon_energy_bound", "RIGIDITY_TOL"]

RIGIDITY_TOL = 1e-7


def energy(bg: BoundaryGeometry, H0_integral: float, G: float = 1.0, area: float | None = None) -> float:
    """``(1/8 pi G) (int H0 - int sqrt(H^2 - P^2))`` for a round boundary sphere."""
    if not G > 0:
        raise ConfigError("G must be positive")
    area = bg.area if area is None else area
    return float((H0_integral - area * bg.sqrt8rhomu) / (8.0 * math.pi * G))


def schwarzschild_mass(M: float, r: float, G: float = 1.0) -> float:
    """``r (1 - sqrt(1 - 2M/r)) / G`` evaluated as ``2M / (1 + sqrt(1 - 2M/r)) / G``."""
    if M < 0:
        raise ConfigError("mass parameter must be nonnegative")
    if not G > 0:
        raise ConfigError("G must be positive")
    if r < 2.0 * M or r <= 0:
        raise ConfigError(f"radius {r} is inside the horizon 2M = {2.0 * M}")
    return 2.0 * M / (1.0 + math.sqrt(1.0 - 2.0 * M / r)) / G


@dataclass
class QuasiLocalReport:
    E: float | None = None
    m0: float | None = None
    m_inf: float | None = None
    chain_margins: tuple | None = None
    horizon_bound_margin: float | None = None
    inputs_digest: str = ""
    margins: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    failure: dict | None = None
    timestamp: str = ""
    version: str = ""

    @property
    def ok(self) -> bool:
        return self.failure is None

    def to_json(self) -> dict:
        doc = asdict(self)
        if doc["chain_margins"] is not None:
            doc["chain_margins"] = {"m0_minus_m_inf": self.chain_margins[0],
                                    "E_minus_m0": self.chain_margins[1]}
        return doc


@dataclass(frozen=True)
class ChainResult:
    passed: bool
    margins: dict
    rigid: bool | None
    messages: tuple


def chain_check(report: QuasiLocalReport, slack: float = 1e-8, *, strict: bool = True) -> ChainResult:
    """``m_inf <= m0 <= E`` and ``E >= 0`` within ``slack``; near-zero E must come with flat witnesses."""
    if report.E is None or report.m0 is None or report.m_inf is None:
        raise ConfigError("chain check needs E, m0 and m_inf")
    margins = {"m0_minus_m_inf": report.m0 - report.m_inf, "E_minus_m0": report.E - report.m0,
               "E": report.E}
    msgs = [f"{k} = {v:.3e} below -{slack:g}" for k, v in margins.items() if v < -slack]
    rigid = None
    if report.E <= 1e-9:
        u_dev = report.witnesses.get("u_dev", 0.0)
        x_sup = report.witnesses.get("X_sup", 0.0)
        rigid = u_dev <= RIGIDITY_TOL and x_sup <= RIGIDITY_TOL
        if not rigid:
            msgs.append(f"E = {report.E:.3e} with non-flat witnesses sup|u-1| = {u_dev:.3e}, sup|X| = {x_sup:.3e}")
    result = ChainResult(not msgs, margins, rigid, tuple(msgs))
    if strict and msgs:
        raise InequalityViolation("; ".join(msgs), stage="chain", **margins)
    return result


@dataclass(frozen=True)
class Lemma6Sample:
    """Boundary configuration: mean curvature ``H > 0``, ``P``, and a unit vector ``(c3, c4)``."""

    H: float
    P: float
    c3: float
    c4: float

    def __post_init__(self):
        if not self.H > 0:
            raise ConfigError("the boundary inequality needs H > 0")
        if not 0.0 < self.c3 <= 1.0:
            raise ConfigError("c3 must lie in (0, 1]")
        if abs(self.c3 * self.c3 + self.c4 * self.c4 - 1.0) > 1e-15:
            raise ConfigError("(c3, c4) must be a unit vector")

    @classmethod
    def from_c3(cls, H: float, P: float, c3: float, sign: float = 1.0) -> "Lemma6Sample":
        return cls(H, P, c3, math.copysign(math.sqrt(max(1.0 - c3 * c3, 0.0)), sign))


def lemma6_lhs(H, P, c3, c4):
    return (H - c4 * P) / c3


def lemma6_margins(H, P, c3, c4) -> np.ndarray:
    """``(H - c4 P)/c3 - sqrt(max(H^2 - P^2, 0))`` on arrays.

    For ``P^2 < H^2`` the difference is evaluated as
    ``(c4 H - P)^2 / (c3 (H - c4 P + c3 sqrt(H^2 - P^2)))``, the same number
    without the cancellation that the direct difference suffers when
    ``c3`` is tiny and the configuration is near equality.
    """
    H, P, c3, c4 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (H, P, c3, c4)))
    gap = H * H - P * P
    root = np.sqrt(np.maximum(gap, 0.0))
    lhs = H - c4 * P
    with np.errstate(divide="ignore", invalid="ignore"):
        stable = (c4 * H - P) ** 2 / (c3 * (lhs + c3 * root))
    direct = lhs / c3 - root
    return np.where((gap > 0) & (lhs + c3 * root > 0), stable, direct)


def lemma6_margin(s: Lemma6Sample) -> float:
    return float(lemma6_margins(s.H, s.P, s.c3, s.c4))


STRATA = ("bulk", "P=+H", "P=-H", "P=0", "c3=1", "c3=1e-6", "equality")


def sample_lemma6(seed: int, n: int = 100_000):
    """Seeded samples ``(H, P, c3, c4, stratum)`` with ``P`` in ``[-H, H]``.

    One eighth of the draws goes to each boundary stratum (``P = +-H``,
    ``P = 0``, ``c3 = 1``, ``c3 = 1e-6``, and the equality family
    ``P = c4 H`` with ``c3`` log-uniform down to ``1e-6``); the rest is bulk.
    """
    rng = np.random.default_rng(seed)
    H = np.exp(rng.uniform(np.log(1e-3), np.log(1e2), n))
    P = H * rng.uniform(-1.0, 1.0, n)
    c3 = rng.uniform(0.0, 1.0, n)
    c3 = np.where(c3 == 0.0, 1e-6, c3)
    sign = rng.choice((-1.0, 1.0), n)
    stratum = rng.integers(0, 8, n)
    stratum = np.where(stratum == 7, 0, stratum)
    P = np.where(stratum == 1, H, P)
    P = np.where(stratum == 2, -H, P)
    P = np.where(stratum == 3, 0.0, P)
    c3 = np.where(stratum == 4, 1.0, c3)
    c3 = np.where(stratum == 5, 1e-6, c3)
    c3 = np.where(stratum == 6, 10.0 ** rng.uniform(-6.0, 0.0, n), c3)
    c4 = sign * np.sqrt(1.0 - c3 * c3)
    P = np.where(stratum == 6, c4 * H, P)
    return H, P, c3, c4, stratum


def horizon_energy_bound(e: ProfileEmbedding, G: float = 1.0) -> float:
    """``(1/8 pi G) int H0 - sqrt(area / 4 pi) / G``: energy of a horizon against the irreducible-mass bound."""
    if not G > 0:
        raise ConfigError("G must be positive")
    return minkowski_margin(e) / (8.0 * math.pi * G)
