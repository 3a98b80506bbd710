"""End-to-end construction for one boundary sphere: data, Jang graph, conformal factor, flow, masses."""

from __future__ import annotations

import copy
import datetime as _dt
import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .conformal import check_prop5_boundary, solve_conformal
from .errors import ConfigError, DataRejected, InequalityViolation, QLMError
from .flow import (ParallelFoliation, flow_solve, mass_aspect, monotonicity_check,
                   write_flow_csv)
from .initial_data import (SphericalDataSet, boundary_geometry, constraint_densities,
                           data_from_json, energy_condition_margin, horizon_scan)
from .jang import check_eq20, graph_geometry, jang_solve
from .qlm import QuasiLocalReport, chain_check, energy
from .radial import Tolerances
from .surface import round_metric, weyl_embed

log = logging.getLogger(__name__)

__all__ = ["Scenario", "run_pipeline", "scenario_from_json", "report_json", "MODES"]

MODES = ("riemannian", "general")


@dataclass
class Scenario:
    data: dict
    mode: str = "general"
    r_max: float | None = None
    n_r: int = 400
    n_theta: int = 512
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int | None = None
    conformal: bool = True
    label: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not isinstance(self.data, dict):
            raise ConfigError("scenario data must be a JSON-style document")
        s_out = self.s_out
        if self.r_max is None:
            self.r_max = 100.0 * s_out
        if not self.r_max >= 50.0 * s_out:
            raise ConfigError(f"r_max = {self.r_max} is below 50 * s_out = {50.0 * s_out}")

    @property
    def s_out(self) -> float:
        try:
            return float(self.data["grid"]["s_max"])
        except (KeyError, TypeError) as exc:
            raise ConfigError("scenario data needs grid.s_max") from exc

    def to_json(self) -> dict:
        t = self.tolerances
        return {"data": self.data, "mode": self.mode, "label": self.label, "seed": self.seed,
                "conformal": self.conformal, "n_theta": self.n_theta,
                "flow": {"r_max": self.r_max, "n_r": self.n_r},
                "tolerances": {"newton_tol": t.newton_tol, "ode_rel_tol": t.ode_rel_tol,
                               "ode_abs_tol": t.ode_abs_tol, "ineq_slack": t.ineq_slack}}

    def digest(self) -> str:
        text = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def scenario_from_json(doc: dict) -> Scenario:
    doc = copy.deepcopy(doc)
    try:
        flow = doc.get("flow", {})
        tol = Tolerances(**doc.get("tolerances", {}))
        data = doc["data"]
        if doc.get("seed") is not None and data.get("preset", {}).get("name") == "perturbed":
            data["preset"].setdefault("seed", int(doc["seed"]))
        return Scenario(data=data, mode=doc.get("mode", "general"), r_max=flow.get("r_max"),
                        n_r=int(flow.get("n_r", 400)), n_theta=int(doc.get("n_theta", 512)),
                        tolerances=tol, seed=doc.get("seed"), conformal=bool(doc.get("conformal", True)),
                        label=str(doc.get("label", "")))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed scenario: {exc}") from exc


class _Stages:
    def __init__(self, report: QuasiLocalReport):
        self.report = report
        self.current = "setup"

    def enter(self, name: str):
        self.current = name
        log.info("stage %s", name)

    def done(self):
        self.report.stages.append({"stage": self.current, "status": "ok"})


def _require(margin: float, bound: float, what: str, stage: str):
    if margin < -bound:
        raise InequalityViolation(f"{what} = {margin:.3e} below -{bound:g}", stage=stage, margin=margin)


def run_pipeline(sc: Scenario) -> QuasiLocalReport:
    """Run every stage; a failing stage is recorded in ``report.failure`` instead of raised."""
    report = QuasiLocalReport(inputs_digest=sc.digest(), version=__version__,
                              timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat())
    report.artifacts = {}
    st = _Stages(report)
    try:
        _run(sc, report, st)
    except QLMError as exc:
        stage = st.current
        report.failure = {"stage": stage, "kind": exc.kind, "message": str(exc)}
        report.stages.append({"stage": stage, "status": "failed"})
        log.warning("pipeline failed in stage %s: %s", stage, exc)
    return report


def _run(sc: Scenario, report: QuasiLocalReport, st: _Stages):
    slack = sc.tolerances.ineq_slack
    st.enter("data")
    data: SphericalDataSet = data_from_json(sc.data)
    G = data.G
    if sc.mode == "riemannian" and not data.is_time_symmetric():
        raise ConfigError("riemannian mode requires p = 0")
    st.done()

    st.enter("constraints")
    dens = constraint_densities(data)
    ec = energy_condition_margin(dens).min()
    report.margins["energy_condition_min"] = ec
    if ec < -slack:
        raise DataRejected(f"local energy condition fails: min(mu - |J|) = {ec:.3e}")
    st.done()

    st.enter("horizon_scan")
    horizons = horizon_scan(data)
    if horizons:
        raise DataRejected(f"apparent horizon at s = {horizons[0][0]:.10g}", horizons=horizons)
    bg = boundary_geometry(data)
    st.done()

    Hbar, Xnu = bg.H, 0.0
    report.witnesses.update(u_dev=0.0, X_sup=0.0, f_sup=0.0)
    if sc.mode == "general":
        st.enter("jang")
        sol = jang_solve(data, sc.tolerances)
        gd = graph_geometry(data, sol)
        eq20 = check_eq20(gd).min()
        report.margins["eq20_min"] = eq20
        _require(eq20, slack, "R_bar - 2|X|^2 + 2 div X", "jang")
        Hbar, Xnu = gd.Hbar, gd.Xnu
        report.witnesses["X_sup"] = float(np.max(np.abs(gd.X_rad.values)))
        report.witnesses["f_sup"] = float(np.max(np.abs(sol.f.values)))
        report.fits["jang_newton_iterations"] = sol.iterations
        st.done()

        st.enter("conformal")
        if sc.conformal:
            cs = solve_conformal(gd)
            prop5 = check_prop5_boundary(gd, cs)
            report.margins["prop5_boundary"] = prop5
            _require(prop5, slack * gd.area, "conformal boundary margin", "conformal")
            report.witnesses["u_dev"] = cs.max_deviation
            report.fits["Hhat"] = cs.Hhat
            report.fits["min_u"] = cs.min_u
        st.done()

    st.enter("boundary")
    denom = Hbar - Xnu
    report.fits.update(H=bg.H, P=bg.P, Hbar=Hbar, Xnu=Xnu, areal_radius=bg.areal_radius)
    lemma6 = denom - bg.sqrt8rhomu
    report.margins["lemma6_boundary"] = lemma6
    _require(lemma6, slack, "H_bar - <X, nu> - sqrt(H^2 - P^2)", "boundary")
    emb = weyl_embed(round_metric(bg.areal_radius, sc.n_theta))
    E = energy(bg, emb.H0_integral, G, area=emb.area)
    report.E = E
    st.done()

    st.enter("flow")
    fol = ParallelFoliation(emb)
    h0 = emb.H0 / denom
    flow = flow_solve(fol, h0, sc.r_max, sc.tolerances, n_r=sc.n_r, mode=sc.mode)
    ma = mass_aspect(fol, flow, G)
    mono = monotonicity_check(fol, flow, G, ma)
    report.m0, report.m_inf = ma.m0, ma.m_inf
    report.fits.update(m_o=ma.m_o, m_inf_quadratic=ma.m_inf_quadratic, kappa_bound=ma.kappa_bound,
                       kappa_stable=ma.kappa_stable, extrapolations_agree=ma.extrapolations_agree,
                       tail_samples=ma.tail_samples, m_o_minus_G_m_inf=ma.m_o - G * ma.m_inf)
    report.margins.update(eq11_rhs_max=mono.rhs_max, mass_max_increase=mono.max_increase,
                          eq11_discrepancy=mono.discrepancy)
    report.artifacts["flow_csv"] = write_flow_csv(flow, ma, mono)
    st.done()

    st.enter("chain")
    report.chain_margins = (ma.m0 - ma.m_inf, E - ma.m0)
    res = chain_check(report, slack)
    report.witnesses["rigid"] = res.rigid
    st.done()


def report_json(report: QuasiLocalReport) -> str:
    """Canonical serialization: sorted keys, so equal runs give equal bytes apart from the timestamp."""
    return json.dumps(report.to_json(), sort_keys=True, indent=2, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not serializable: {type(x).__name__}")
