"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
from scipy.integrate import quad

sys.path.insert(0, str(Path(__file__).resolve().parent))

from helpers import manufactured_conformal, manufactured_jang_data, observed_order  # noqa: E402
from qlmass.cli import DEFAULT_SEED, random_lapse  # noqa: E402
from qlmass.conformal import check_prop5_boundary, solve_conformal, solve_conformal_fields  # noqa: E402
from qlmass.errors import DataRejected  # noqa: E402
from qlmass.flow import (ParallelFoliation, eq11_convergence, flow_solve, mass_aspect,  # noqa: E402
                         monotonicity_check)
from qlmass.initial_data import (flat_data, horizon_scan, isotropic_schwarzschild, perturbed_data,  # noqa: E402
                                 schwarzschild_data)
from qlmass.jang import check_eq20, graph_geometry, jang_solve  # noqa: E402
from qlmass.pipeline import Scenario, run_pipeline  # noqa: E402
from qlmass.qlm import lemma6_margins, sample_lemma6  # noqa: E402
from qlmass.surface import (ellipsoid_curvatures, ellipsoid_metric, gauss_bonnet_integral,  # noqa: E402
                            minkowski_margin, round_metric, weyl_embed)


def schwarzschild_closed(a, M=1.0):
    return a * (1 - math.sqrt(1 - 2 * M / a))


def criterion_1():
    t0 = time.perf_counter()
    E, worst = [], 0.0
    for a in (2.5, 5.0, 10.0, 100.0):
        data = {"grid": {"s_min": 2.05, "s_max": a, "n": 2000}, "preset": {"name": "schwarzschild", "M": 1.0}}
        rep = run_pipeline(Scenario(data, mode="riemannian"))
        if rep.failure:
            return False, f"a = {a}: {rep.failure['message']}"
        E.append(rep.E)
        worst = max(worst, abs(rep.E / schwarzschild_closed(a) - 1))
    dt = time.perf_counter() - t0
    monotone = bool(np.all(np.diff(E) < 0))
    return worst <= 1e-6 and monotone and dt < 5.0, \
        f"max rel err {worst:.2e}, monotone {monotone}, {dt:.2f} s"


def criterion_2():
    a, M = 2.5, 1.0
    fol = ParallelFoliation(weyl_embed(round_metric(a)))
    t0 = time.perf_counter()
    flow = flow_solve(fol, (1 - 2 * M / a) ** -0.5, 100 * a)
    ma = mass_aspect(fol, flow)
    dt = time.perf_counter() - t0
    exact = (1 - 2 * M / (a + flow.r)) ** -0.5
    h_err = float(np.max(np.abs(flow.h / exact[:, None] - 1)))
    ok = h_err <= 1e-8 and abs(ma.m_inf - M) <= 1e-4 and abs(ma.m_o - M) <= 1e-3 and dt < 10.0
    return ok, (f"h rel err {h_err:.2e}, |m_inf - M| {abs(ma.m_inf - M):.2e}, "
                f"|m_o - M| {abs(ma.m_o - M):.2e}, {dt:.2f} s")


def criterion_3():
    rng = np.random.default_rng(DEFAULT_SEED)
    bases = [ParallelFoliation(weyl_embed(m)) for m in
             (round_metric(1.0, 64), ellipsoid_metric(1, 1, 2, 64), ellipsoid_metric(2, 2, 1, 64))]
    worst_order, worst_rise = np.inf, -np.inf
    for k in range(20):
        fol = bases[k % len(bases)]
        h0 = random_lapse(rng, fol)
        r_max = 20.0 * fol.mean_radius
        worst_order = min(worst_order, eq11_convergence(fol, h0, r_max, 200).order)
        flow = flow_solve(fol, h0, r_max, n_r=200, reduce_symmetric=False)
        worst_rise = max(worst_rise, monotonicity_check(fol, flow).max_increase)
    return worst_order >= 1.9 and worst_rise <= 1e-9, \
        f"20 profiles, min order {worst_order:.3f}, max increase of m {worst_rise:.2e}"


def criterion_4():
    t0 = time.perf_counter()
    H, P, c3, c4, stratum = sample_lemma6(DEFAULT_SEED, 100_000)
    worst = float(lemma6_margins(H, P, c3, c4).min())
    dt = time.perf_counter() - t0
    strata = bool(np.any(P == H) and np.any(P == -H) and c3.min() <= 1e-6)
    return worst >= -1e-12 and strata and dt < 2.0, \
        f"1e5 samples, min margin {worst:.2e}, boundary strata present {strata}, {dt:.2f} s"


def _graph(data):
    return graph_geometry(data, jang_solve(data))


def criterion_5():
    notes = []
    equality = []
    for data in (flat_data(2.0, 400), schwarzschild_data(1.0, 2.5, 20.0, 1000)):
        gd = _graph(data)
        cs = solve_conformal(gd)
        equality.append((cs.max_deviation, abs(check_prop5_boundary(gd, cs))))
    u_dev = max(e[0] for e in equality)
    eq_gap = max(e[1] for e in equality)
    notes.append(f"u dev {u_dev:.1e}, equality gap {eq_gap:.1e}")
    orders = []
    for ball in (True, False):
        errs = []
        for n in (200, 400):
            grid, Abar, B, Rbar, u = manufactured_conformal(n, ball)
            errs.append(np.max(np.abs(solve_conformal_fields(grid, Abar, B, Rbar).u.values - u)))
        orders.append(observed_order(*errs))
    notes.append(f"manufactured order {min(orders):.3f}")
    worst = np.inf
    for seed in range(4):
        gd = _graph(perturbed_data(seed, 0.05))
        worst = min(worst, check_prop5_boundary(gd, solve_conformal(gd)) / gd.area)
    notes.append(f"min margin/area {worst:.2e}")
    ok = u_dev <= 1e-10 and eq_gap <= 1e-9 and min(orders) >= 1.9 and worst >= -1e-8
    return ok, ", ".join(notes)


def criterion_6():
    res = max(jang_solve(d).residual_norm for d in (flat_data(2.0, 400), schwarzschild_data(1.0, 2.5, 20.0, 2000)))
    errs = []
    for n in (200, 400):
        data, prof = manufactured_jang_data(n)
        errs.append(np.max(np.abs(jang_solve(data).f.values - prof.exact_f(data.s))))
    order = observed_order(*errs)
    eq20 = min(check_eq20(_graph(perturbed_data(seed, 0.05))).min() for seed in range(4))
    return res <= 1e-12 and order >= 1.9 and eq20 >= -1e-8, \
        f"p = 0 residual {res:.1e}, manufactured order {order:.3f}, min eq20 margin {eq20:.2e}"


def _minkowski_quad(a, c):
    def A(t):
        return a * a * math.cos(t) ** 2 + c * c * math.sin(t) ** 2

    def dsig(t):
        return 2 * math.pi * a * math.sin(t) * math.sqrt(A(t))

    def H0(t):
        return a * c / A(t) ** 1.5 + c / (a * math.sqrt(A(t)))

    area = quad(dsig, 0, math.pi, epsabs=1e-13, epsrel=1e-13)[0]
    total = quad(lambda t: H0(t) * dsig(t), 0, math.pi, epsabs=1e-13, epsrel=1e-13)[0]
    return total - math.sqrt(16 * math.pi * area)


def criterion_7():
    gb = max(abs(gauss_bonnet_integral(m) - 4 * math.pi)
             for m in (round_metric(1.0, 512), ellipsoid_metric(1, 1, 2, 512), ellipsoid_metric(2, 2, 1, 512)))
    orders = []
    for a, c in ((1.0, 2.0), (2.0, 1.0)):
        errs = []
        for n in (128, 256):
            e = weyl_embed(ellipsoid_metric(a, a, c, n))
            km, kp, _ = ellipsoid_curvatures(a, c, e.theta)
            errs.append(max(np.max(np.abs(e.kappa1 - km)), np.max(np.abs(e.kappa2 - kp))))
        orders.append(observed_order(*errs))
    round_margin = abs(minkowski_margin(weyl_embed(round_metric(3.0, 512))))
    ell_ok = True
    for a, c in ((1.0, 2.0), (2.0, 1.0)):
        got = minkowski_margin(weyl_embed(ellipsoid_metric(a, a, c, 512)))
        fine = minkowski_margin(weyl_embed(ellipsoid_metric(a, a, c, 2048)))
        oracle = _minkowski_quad(a, c)
        ell_ok &= got > 0 and fine > 0 and abs(got - oracle) <= 1e-6 * oracle and abs(fine - oracle) <= 1e-6 * oracle
    ok = gb <= 1e-4 and min(orders) >= 1.9 and round_margin <= 1e-9 and ell_ok
    return ok, (f"Gauss-Bonnet err {gb:.1e}, round-trip order {min(orders):.3f}, "
                f"round margin {round_margin:.1e}, ellipsoids positive and match oracle {ell_ok}")


def criterion_8():
    flat = run_pipeline(Scenario({"grid": {"s_min": 0.0, "s_max": 2.0, "n": 400}, "preset": {"name": "flat"}}))
    if flat.failure:
        return False, f"flat run failed: {flat.failure['message']}"
    zero = max(abs(flat.E), abs(flat.m0), abs(flat.m_inf))
    wit = max(flat.witnesses["u_dev"], flat.witnesses["X_sup"])
    worst_chain, min_E = np.inf, np.inf
    for seed in range(10):
        doc = {"grid": {"s_min": 0.0, "s_max": 5.0, "n": 2000}, "preset": {"name": "perturbed", "seed": seed}}
        rep = run_pipeline(Scenario(doc, seed=seed))
        if rep.failure:
            return False, f"seed {seed}: {rep.failure['stage']}: {rep.failure['message']}"
        worst_chain = min(worst_chain, *rep.chain_margins)
        min_E = min(min_E, rep.E)
    ok = zero <= 1e-9 and wit <= 1e-7 and worst_chain >= -1e-8 and min_E > 0
    return ok, (f"flat max|E, m0, m_inf| {zero:.1e}, witnesses {wit:.1e}; "
                f"10 perturbed: min chain margin {worst_chain:.2e}, min E {min_E:.3e}")


def criterion_9():
    M = 1.0
    data = isotropic_schwarzschild(M, M / 4, 4 * M, 500)
    roots = horizon_scan(data)
    err = max(abs(s - M / 2) / (M / 2) for s, _ in roots) if roots else np.inf
    try:
        jang_solve(data)
        refused = False
    except DataRejected:
        refused = True
    return err <= 1e-8 and refused, f"{len(roots)} horizon roots, max rel err {err:.1e}, Jang refuses {refused}"


CRITERIA = {
    1: ("Schwarzschild closed form", criterion_1),
    2: ("flow exactness", criterion_2),
    3: ("monotonicity and eq11 order", criterion_3),
    4: ("boundary inequality samples", criterion_4),
    5: ("conformal deformation", criterion_5),
    6: ("Jang suite", criterion_6),
    7: ("geometry suite", criterion_7),
    8: ("chain and rigidity", criterion_8),
    9: ("horizon detection", criterion_9),
}


def _run(k):
    name, fn = CRITERIA[k]
    ok, detail = fn()
    return ok, f"{'PASS' if ok else 'FAIL'}  criterion {k}: {name:<28} {detail}"


def _check(k, capsys):
    ok, line = _run(k)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_criterion_1(capsys):
    _check(1, capsys)


def test_criterion_2(capsys):
    _check(2, capsys)


def test_criterion_3(capsys):
    _check(3, capsys)


def test_criterion_4(capsys):
    _check(4, capsys)


def test_criterion_5(capsys):
    _check(5, capsys)


def test_criterion_6(capsys):
    _check(6, capsys)


def test_criterion_7(capsys):
    _check(7, capsys)


def test_criterion_8(capsys):
    _check(8, capsys)


def test_criterion_9(capsys):
    _check(9, capsys)


if __name__ == "__main__":
    results = [_run(k) for k in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
