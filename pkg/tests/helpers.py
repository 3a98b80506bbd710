"""Manufactured solutions shared by the unit tests and the acceptance suite.

Each oracle is built symbolically with sympy from a chosen exact answer, so the
solver under test never sees the answer itself, only the data it implies.
"""

from __future__ import annotations

import numpy as np
import sympy as sp

from qlmass.initial_data import RadialJet, RadialProfile, from_profile
from qlmass.radial import RadialGrid

_s = sp.Symbol("s", nonnegative=True)


def _vectorize(expr):
    fn = sp.lambdify(_s, expr, "numpy")
    return lambda x: np.broadcast_to(np.asarray(fn(x), dtype=float), np.shape(x)).copy()


class ManufacturedJangProfile(RadialProfile):
    """Ball data whose Jang solution is ``f = eps (1 - (s/s_out)^2)^2`` by construction.

    Metric ``A = 1 + alpha s^2``, ``B = s``; ``p`` is set to the second
    fundamental form of the graph of ``f``, which makes ``f`` solve Jang's
    equation exactly.
    """

    name = "manufactured_jang"

    def __init__(self, eps: float = 0.3, alpha: float = 0.1, s_out: float = 1.0):
        self.eps, self.alpha, self.s_out = eps, alpha, s_out
        s = _s
        A = 1 + alpha * s**2
        f = eps * (1 - (s / s_out) ** 2) ** 2
        fp = sp.diff(f, s)
        fl = fp / A
        W = sp.sqrt(1 + fl**2)
        p_rad = sp.diff(fl, s) / A / W
        # B = s, so B_l f_l / (B W) = f'/(s A^2 W); f'/s is a polynomial
        p_tan = sp.cancel(fp / s) / (A**2 * W)
        self.f_expr = f
        self._A = _vectorize(A)
        self._dA = _vectorize(sp.diff(A, s))
        self._pr = _vectorize(p_rad)
        self._dpr = _vectorize(sp.diff(p_rad, s))
        self._pt = _vectorize(p_tan)
        self._dpt = _vectorize(sp.diff(p_tan, s))
        self._f = _vectorize(f)

    def exact_f(self, s):
        return self._f(np.asarray(s, dtype=float))

    def jet(self, s):
        s = np.asarray(s, dtype=float)
        one = np.ones_like(s)
        return RadialJet(s, self._A(s), self._dA(s), s.copy(), one, 0.0 * s,
                         self._pr(s), self._dpr(s), self._pt(s), self._dpt(s))

    def params(self):
        return {"eps": self.eps, "alpha": self.alpha}


def manufactured_jang_data(n: int, eps: float = 0.3, alpha: float = 0.1):
    prof = ManufacturedJangProfile(eps, alpha)
    return from_profile(prof, 0.0, 1.0, n), prof


def manufactured_conformal(n: int, ball: bool = True):
    """``(grid, Abar, B, Rbar, u_exact)`` with ``Rbar = 8 Lap(u)/u`` for a chosen ``u``."""
    s = _s
    Abar = 1 + sp.Rational(3, 10) * s**2
    if ball:
        lo, hi = 0.0, 1.0
        B = s + s**3 / 10
        u = 1 + sp.Rational(1, 5) * (1 - s**2) ** 2
    else:
        lo, hi = 0.5, 2.0
        B = s
        u = 1 + sp.Rational(3, 10) * sp.sin(sp.pi * (s - sp.Rational(1, 2)) / sp.Rational(3, 2))
    lap = sp.diff(B**2 * sp.diff(u, s) / Abar, s) / (Abar * B**2)
    Rbar = sp.cancel(sp.together(8 * lap / u)) if ball else 8 * lap / u
    grid = RadialGrid(lo, hi, n)
    x = grid.nodes
    return (grid, _vectorize(Abar)(x), _vectorize(B)(x), _vectorize(Rbar)(x), _vectorize(u)(x))


def observed_order(coarse: float, fine: float) -> float:
    return float(np.log2(coarse / fine))
