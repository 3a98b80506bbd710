import csv
import io
import math

import numpy as np
import pytest

from qlmass.errors import ConfigError, FlowBreakdown
from qlmass.flow import (CSV_COLUMNS, ParallelFoliation, eq11_convergence, flow_solve, mass_aspect,
                         mass_values, monotonicity_check, parallel_geometry, rhs11_values, stored_radii,
                         write_flow_csv)
from qlmass.surface import ellipsoid_metric, round_metric, weyl_embed

M = 1.0
A_BASE = 2.5


def schwarzschild_h(rho, M=M):
    return (1 - 2 * M / rho) ** -0.5


def schwarzschild_m(rho, M=M):
    return rho * (1 - np.sqrt(1 - 2 * M / rho))


@pytest.fixture(scope="module")
def round_fol():
    return ParallelFoliation(weyl_embed(round_metric(A_BASE)))


@pytest.fixture(scope="module")
def prolate_fol():
    return ParallelFoliation(weyl_embed(ellipsoid_metric(1, 1, 2, 128)))


@pytest.fixture(scope="module")
def schwarzschild_flow(round_fol):
    return flow_solve(round_fol, schwarzschild_h(A_BASE), 100 * A_BASE)


def test_parallel_spheres():
    a, r = 2.0, 3.0
    base = weyl_embed(round_metric(a, 128))
    sl = parallel_geometry(base, r)
    np.testing.assert_allclose(sl.kappa1, 1 / (a + r), rtol=1e-9)
    np.testing.assert_allclose(sl.H0, 2 / (a + r), rtol=1e-9)
    np.testing.assert_allclose(sl.Rr, 2 / (a + r) ** 2, rtol=1e-9)
    assert sl.area == pytest.approx(4 * math.pi * (a + r) ** 2, rel=1e-8)
    at0 = parallel_geometry(base, 0.0)
    np.testing.assert_array_equal(at0.kappa1, base.kappa1)
    np.testing.assert_array_equal(at0.embedding.rho, base.rho)
    with pytest.raises(ConfigError):
        parallel_geometry(base, -1.0)


def test_foliation_invariants_on_ellipsoid(prolate_fol):
    fol = prolate_fol
    radii = np.linspace(0, 20, 11)
    H0 = np.array([fol.H0(r) for r in radii])
    areas = np.array([fol.volumes(r).sum() for r in radii])
    assert np.all(np.diff(H0, axis=0) < 0) and np.all(H0 > 0)
    assert np.all(np.array([fol.Rr(r) for r in radii]) > 0)
    assert np.all(np.diff(areas) > 0)
    assert areas[0] == pytest.approx(weyl_embed(ellipsoid_metric(1, 1, 2, 128)).area, rel=1e-10)
    np.testing.assert_allclose(fol.weighted_H0(7.0), fol.volumes(7.0) * fol.H0(7.0), rtol=1e-13)
    np.testing.assert_allclose(fol.weighted_R, fol.volumes(7.0) * fol.Rr(7.0), rtol=1e-13)


def test_stored_radii_are_uniform_in_log():
    r = stored_radii(2.0, 200.0, 50)
    sig = np.log1p(r / 2.0)
    assert r[0] == 0.0 and r[-1] == 200.0
    np.testing.assert_allclose(np.diff(sig), sig[-1] / 50, rtol=1e-10)


@pytest.mark.parametrize("which", ["round", "prolate"])
def test_unit_lapse_is_a_fixed_point(which, round_fol, prolate_fol):
    fol = round_fol if which == "round" else prolate_fol
    flow = flow_solve(fol, 1.0, 100 * fol.mean_radius, reduce_symmetric=False)
    assert np.max(np.abs(flow.h - 1.0)) <= 1e-12
    ma = mass_aspect(fol, flow)
    assert np.all(ma.m == 0.0) and ma.m_inf == 0.0 and ma.m_o == 0.0 and ma.kappa_bound == 0.0
    mono = monotonicity_check(fol, flow, ma=ma)
    assert mono.discrepancy == 0.0 and mono.passed


def test_schwarzschild_lapse_is_exact(round_fol, schwarzschild_flow):
    flow = schwarzschild_flow
    exact = schwarzschild_h(A_BASE + flow.r)
    assert np.max(np.abs(flow.h / exact[:, None] - 1.0)) <= 1e-8
    assert flow.reduced


def test_schwarzschild_lapse_without_symmetry_reduction():
    # the full theta-discretized system; a coarse theta grid keeps the explicit integrator cheap
    fol = ParallelFoliation(weyl_embed(round_metric(A_BASE, 64)))
    flow = flow_solve(fol, schwarzschild_h(A_BASE), 100 * A_BASE, n_r=100, reduce_symmetric=False)
    assert not flow.reduced
    exact = schwarzschild_h(A_BASE + flow.r)
    assert np.max(np.abs(flow.h / exact[:, None] - 1.0)) <= 1e-8


def test_schwarzschild_mass_aspect(round_fol, schwarzschild_flow):
    flow = schwarzschild_flow
    ma = mass_aspect(round_fol, flow)
    # m = rho (1 - 1/h) magnifies the relative error of h by about rho / M
    np.testing.assert_allclose(ma.m, schwarzschild_m(A_BASE + flow.r), rtol=0, atol=1e-7)
    assert ma.m0 == pytest.approx(2.5 * (1 - math.sqrt(0.2)), rel=1e-9)
    assert abs(ma.m_inf - M) <= 1e-4
    assert abs(ma.m_o - M) <= 1e-3
    assert ma.max_increase <= 0.0 and ma.kappa_stable
    assert abs(ma.m_o - ma.G * ma.m_inf) <= 1e-3


def test_schwarzschild_mass_derivative_matches_closed_form(round_fol, schwarzschild_flow):
    rho = A_BASE + schwarzschild_flow.r
    s = np.sqrt(1 - 2 * M / rho)
    dm_exact = 1 - s - M / (rho * s)
    np.testing.assert_allclose(rhs11_values(round_fol, schwarzschild_flow), dm_exact, rtol=0, atol=1e-6)


def test_ellipsoid_bump_stays_positive_and_monotone(prolate_fol):
    fol = prolate_fol
    h0 = 1 + 0.1 * np.exp(-fol.base.theta**2)
    flow = flow_solve(fol, h0, 50 * fol.mean_radius, n_r=200)
    assert np.all(flow.h > 0)
    ma = mass_aspect(fol, flow)
    mono = monotonicity_check(fol, flow, ma=ma)
    assert mono.passed and mono.rhs_max <= 0.0
    assert ma.m_inf <= ma.m0 + 1e-9


def test_kappa_bound_stable_under_doubling(prolate_fol):
    fol = prolate_fol
    h0 = 1 + 0.1 * np.exp(-fol.base.theta**2)
    bounds = []
    for factor in (50, 100):
        flow = flow_solve(fol, h0, factor * fol.mean_radius, n_r=200 * factor // 50)
        bounds.append(mass_aspect(fol, flow).kappa_bound)
    assert np.all(np.isfinite(bounds))
    assert bounds[1] <= 1.2 * bounds[0] + 1e-12


def test_eq11_discrepancy_second_order_on_round_base():
    fol = ParallelFoliation(weyl_embed(round_metric(1.0, 64)))
    h0 = np.exp(0.2 * np.cos(fol.base.theta) - 0.1 * np.cos(fol.base.theta) ** 2)
    study = eq11_convergence(fol, h0, 50.0, 200)
    assert study.coarse / study.fine >= 3.5


def test_mass_values_scale_with_G(round_fol, schwarzschild_flow):
    np.testing.assert_allclose(mass_values(round_fol, schwarzschild_flow, G=2.0),
                               mass_values(round_fol, schwarzschild_flow) / 2.0, rtol=1e-15)


def test_floor_crossing_reports_last_radius(round_fol):
    with pytest.raises(FlowBreakdown) as info:
        flow_solve(round_fol, 2.0, 100.0, h_floor=1.5)
    assert 0 < info.value.last_r < 100.0


@pytest.mark.parametrize("h0", [0.0, -1.0, np.ones(7)])
def test_invalid_initial_lapse_rejected(round_fol, h0):
    with pytest.raises(ConfigError):
        flow_solve(round_fol, h0, 10.0)


def test_flow_csv_round_trip(round_fol, schwarzschild_flow):
    ma = mass_aspect(round_fol, schwarzschild_flow)
    mono = monotonicity_check(round_fol, schwarzschild_flow, ma=ma)
    text = write_flow_csv(schwarzschild_flow, ma, mono)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == schwarzschild_flow.r.size + 1
    table = np.array(rows[1:], dtype=float)
    np.testing.assert_array_equal(table[:, 1], ma.m)
