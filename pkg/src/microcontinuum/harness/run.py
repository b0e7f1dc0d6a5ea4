"""Dispatch a scenario to its regime and collect a run report."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from .. import constitutive as con
from .. import covariance as cov
from ..covariance.report import DEFAULT_TOL, LawResult, law, skew_from
from ..errors import MicrocontinuumError, SchemaError
from . import manufacture as mf
from .scenario import Scenario

THREADS_ENV = "MICROCONTINUUM_THREADS"


def worker_count() -> int:
    """Worker cap from the environment; 0 or unset means one worker per CPU."""
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise SchemaError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if n < 0:
        raise SchemaError(f"{THREADS_ENV} must be non-negative")
    return n or (os.cpu_count() or 1)


def fan_out(fn, items: list) -> list:
    """Map ``fn`` over ``items`` on a thread pool; results keep item order."""
    if len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(worker_count(), len(items))) as pool:
        return list(pool.map(fn, items))


@dataclass
class RunReport:
    scenario: dict
    laws: list
    timeseries: Optional[dict] = None
    extras: dict = field(default_factory=dict)
    wall_time: float = 0.0
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(r["passed"] for r in self.laws)

    @property
    def failures(self) -> list:
        return [r["law"] for r in self.laws if not r["passed"]]

    def to_dict(self) -> dict:
        ts = None if self.timeseries is None else {k: [float(x) for x in v] for k, v in self.timeseries.items()}
        return dict(scenario=self.scenario, laws=self.laws, timeseries=ts, extras=self.extras,
                    wall_time=self.wall_time, version=self.version, passed=self.passed)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        ts = data.get("timeseries")
        return cls(scenario=data["scenario"], laws=data["laws"],
                   timeseries=None if ts is None else {k: list(v) for k, v in ts.items()},
                   extras=data.get("extras", {}), wall_time=data.get("wall_time", 0.0),
                   version=data.get("version", __version__))

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))


def _rows(results) -> list:
    return [r.to_dict() for r in results]


def _tol(sc: Scenario, name: str, default: float = DEFAULT_TOL) -> float:
    return float(sc.get("tolerances", {}).get(name, default))


def _retol(results, sc: Scenario) -> list:
    """Re-judge law results with scenario tolerance overrides."""
    out = []
    for r in results:
        tol = _tol(sc, r.name, r.tol)
        out.append(LawResult(r.name, r.linf, r.l2, tol, bool(r.linf <= tol)))
    return out


def _model(sc: Scenario):
    spec = sc.get("model")
    if not spec:
        return None
    try:
        return con.model_from_spec(spec)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"model: {exc}") from exc


def _injection(sc: Scenario):
    inj = sc.get("inject")
    return (None, 0.0) if not inj else (inj["law"], float(inj.get("amplitude", 1e-3)))


def _bad_injection(regime: str, name: str, allowed) -> SchemaError:
    return SchemaError(f"regime {regime!r} cannot inject into {name!r}; choose from {sorted(allowed)}")


# =============================================================================
# Regimes
# =============================================================================

def _flows(sc: Scenario, dim: int):
    rng = np.random.default_rng(sc.seed + 101)
    out = []
    for spec in sc.get("flows", []):
        kind = spec["kind"]
        for _ in range(int(spec.get("count", 1))):
            if kind == "rigid_translation":
                out.append(("spatial", cov.rigid_translation(rng.standard_normal(dim))))
            elif kind == "rigid_rotation":
                out.append(("spatial", cov.rigid_rotation(skew_from(rng.standard_normal((dim, dim))))))
            else:
                coeffs = cov.random_polynomial_coeffs(rng, dim, int(spec.get("degree", 2)),
                                                      float(spec.get("scale", 0.3)))
                fieldfn = cov.polynomial_field(coeffs)
                out.append(("micro", cov.micro_flow(fieldfn)) if kind == "micro_polynomial"
                           else ("spatial", cov.general_spatial(fieldfn)))
    return out


def _inject_stress_or_loads(m, name, amp, table):
    if name is None:
        return m
    if name not in table:
        raise _bad_injection(m.regime, name, table)
    return table[name](m, amp)


def _sym_perturb(shape, amp):
    A = amp * np.ones(shape)
    return 0.5 * (A + np.swapaxes(A, -1, -2)) if len(shape) >= 2 else A


FREE_INJECT = {
    "linear_momentum": lambda m, a: replace(m, loads=m.loads.replace(b=m.loads.b + a)),
    "micro_linear_momentum": lambda m, a: replace(m, loads=m.loads.replace(b_micro=m.loads.b_micro + a)),
    "doyle_ericksen": lambda m, a: replace(
        m, stress=m.stress.replace(cauchy=m.stress.cauchy + _sym_perturb(m.stress.cauchy.shape, a))),
    "angular_momentum": lambda m, a: replace(
        m, stress=m.stress.replace(cauchy=m.stress.cauchy + con.skew(a * np.triu(np.ones(m.stress.cauchy.shape))))),
}


def run_free(sc: Scenario) -> tuple:
    grid = sc.get("grid", {})
    model = _model(sc)
    m = mf.manufacture_free(sc.seed, dim=grid.get("dim", 2), n=grid.get("n", 17), dt=grid.get("dt", 1e-3),
                            model=model, scale=sc.get("motion", {}).get("params", {}).get("scale", 0.05))
    name, amp = _injection(sc)
    m = _inject_stress_or_loads(m, name, amp, FREE_INJECT)
    rep = cov.free_balance_report(m.stress, m.fields, m.loads, m.model, sc.get("tolerances"))
    results = list(rep.laws)
    flows = _flows(sc, m.fields.grid.dim)

    def experiment(item):
        kind, flow = item
        fn = cov.spatial_covariance_experiment if kind == "spatial" else cov.micro_covariance_experiment
        return fn(m.fields, m.stress, m.loads, m.model, flow)

    for i, r in enumerate(fan_out(experiment, flows)):
        prefix = "spatial" if flows[i][0] == "spatial" else "micro"
        results.append(law(f"{prefix}_covariance_{i}", r["total"].linf, tol=_tol(sc, f"{prefix}_covariance")))
    return _retol(results, sc), None, {}


def run_scs(sc: Scenario) -> tuple:
    grid = sc.get("grid", {})
    chart = sc.get("charts", {}).get("ambient", "sphere")
    m = mf.manufacture_scs(sc.seed, n=grid.get("n", 17), dt=grid.get("dt", 1e-3), chart=chart)
    name, amp = _injection(sc)
    table = {"scs_linear_momentum": lambda m, a: replace(m, loads=m.loads.replace(b=m.loads.b + a)),
             "scs_doyle_ericksen": lambda m, a: replace(
                 m, stress=m.stress.replace(cauchy=m.stress.cauchy + _sym_perturb(m.stress.cauchy.shape, a)))}
    m = _inject_stress_or_loads(m, name, amp, table)
    rep = cov.scs_balance_report(m.stress, m.fields, m.loads, m.model, sc.get("tolerances"))
    return _retol(rep.laws, sc), None, {}


def run_gnr(sc: Scenario) -> tuple:
    grid = sc.get("grid", {})
    m = mf.manufacture_gnr(sc.seed, dim=grid.get("dim", 3), n=grid.get("n", 13), dt=grid.get("dt", 1e-3))
    name, amp = _injection(sc)
    table = {"gnr_translation": lambda m, a: replace(m, loads=m.loads.replace(b=m.loads.b + a)),
             "gnr_rotation": lambda m, a: replace(
                 m, stress=m.stress.replace(cauchy=m.stress.cauchy + con.skew(
                     a * np.triu(np.ones(m.stress.cauchy.shape)))))}
    m = _inject_stress_or_loads(m, name, amp, table)
    flows = _flows(sc, m.fields.grid.dim) or [("spatial", cov.rigid_translation(np.ones(m.fields.grid.dim)))]
    results, extras = [], {}
    for i, (_, flow) in enumerate(flows):
        r = cov.gnr_experiment(m.fields, m.stress, m.loads, flow)
        key = "gnr_translation" if flow.kind == "rigid_translation" else "gnr_rotation"
        tag = key if sum(f.kind == flow.kind for _, f in flows) == 1 else f"{key}_{i}"
        results.append(law(tag, r.defect, tol=_tol(sc, key, 1e-10)))
        extras[tag] = dict(supplied=r.supplied, stored=r.stored, defect=r.defect)
        if r.bracket_skew is not None:
            results.append(law(f"bracket_symmetry_{i}", r.bracket_skew, m.fields.interior,
                               m.fields.grid.cell_volume, _tol(sc, "bracket_symmetry")))
    return results, None, extras


def run_material(sc: Scenario) -> tuple:
    grid = sc.get("grid", {})
    m = mf.manufacture_material(sc.seed, dim=grid.get("dim", 2), n=grid.get("n", 17))
    name, amp = _injection(sc)
    table = {"material_stress": lambda m, a: replace(
        m, model=con.material_linear(m.extras["A"] + m.extras["B"] + a * np.eye(m.fields.grid.dim),
                                     m.state.body.density0))}
    m = _inject_stress_or_loads(m, name, amp, table)
    rep = cov.material_covariance_conditions(m.fields, m.stress, m.model, sc.get("tolerances"))
    return _retol(rep.laws, sc), None, {}


def run_mixture(sc: Scenario) -> tuple:
    from ..mixtures import Constituent, MixtureState, mixture_balance_report
    grid = sc.get("grid", {})
    m = mf.manufacture_mixture(sc.seed, dim=grid.get("dim", 2), n=grid.get("n", 17), dt=grid.get("dt", 1e-3))
    mix = m.extras["mixture"]
    name, amp = _injection(sc)
    if name is not None:
        allowed = ("doyle_ericksen_1", "doyle_ericksen_2", "momentum_1", "momentum_2")
        if name not in allowed:
            raise _bad_injection("mixture", name, allowed)
        i = int(name[-1]) - 1
        cons = list(mix.constituents)
        c = cons[i]
        if name.startswith("doyle"):
            sig = c.stress.cauchy + _sym_perturb(c.stress.cauchy.shape, amp)
            cons[i] = Constituent(c.state, c.stress.replace(cauchy=sig), c.loads)
        else:
            cons[i] = Constituent(c.state, c.stress, c.loads.replace(b=c.loads.b + amp))
        mix = MixtureState(tuple(cons), mix.volume_fractions)
    rep = mixture_balance_report(mix, m.model, sc.get("tolerances"))
    return _retol(rep.laws, sc), None, {}


def run_voids(sc: Scenario) -> tuple:
    from ..voids import VoidsConfig, drift_study, simulate_voids_bar
    sim = dict(sc.get("simulation", {}))
    levels = int(sim.pop("refinement_levels", 0))
    cfg = VoidsConfig.from_dict(sim)
    name, amp = _injection(sc)
    allowed = ("scalar_doyle_ericksen",)
    if name is not None and name not in allowed:
        raise _bad_injection("voids", name, allowed)
    result = simulate_voids_bar(cfg, closure_scale=1.0 + amp if name else 1.0)
    de = result.de_residual
    # growth bound: never above 10x the initial value (floored for states that start at zero)
    growth = float(de.max() - 10.0 * max(de[0], _tol(sc, "scalar_doyle_ericksen_floor", 1e-12)))
    results = [
        law("energy_drift", result.energy_drift, tol=_tol(sc, "energy_drift", 1e-3)),
        law("mass", result.mass_residual, tol=_tol(sc, "mass", 1e-12)),
        law("equilibrated_inertia", result.inertia_residual, tol=_tol(sc, "equilibrated_inertia", 1e-12)),
        law("scalar_doyle_ericksen", de, tol=_tol(sc, "scalar_doyle_ericksen", 1e-9)),
        law("scalar_doyle_ericksen_growth", max(growth, 0.0), tol=0.0),
    ]
    extras = dict(final_state=dict(u=result.u.tolist(), nu=result.nu.tolist(),
                                   u_dot=result.u_dot.tolist(), nu_dot=result.nu_dot.tolist()),
                  config=cfg.to_dict())
    family = cfg.initial.get("family", "uniform")
    if family == "uniform" and cfg.beta == 0.0 and cfg.cg >= 0:
        measured = result.measured_frequency()
        oracle = cfg.oracle_frequency()
        results.append(law("frequency", abs(measured - oracle) / oracle, tol=_tol(sc, "frequency", 0.02)))
        extras.update(measured_frequency=measured, oracle_frequency=oracle)
    if levels >= 2:
        study = drift_study(cfg, levels + 1)
        results.append(law("drift_order", max(0.0, 3.5 - min(study["ratios"])), tol=0.0))
        extras["drift_study"] = study
    return results, result.timeseries(), extras


def run_variational(sc: Scenario) -> tuple:
    from .. import variational as var
    opts = sc.get("variational", {})
    vm = mf.manufacture_variational(sc.seed, n=opts.get("n", 7), dt=opts.get("dt", 2e-3),
                                    levels=opts.get("levels", 5))
    model = vm.model
    name, amp = _injection(sc)
    allowed = ("spatial_homogeneity", "micro_homogeneity", "spatial_doyle_ericksen")
    if name is not None:
        if name not in allowed:
            raise _bad_injection("variational", name, allowed)
        base = model

        def density(args, _base=base):
            extra = {"spatial_homogeneity": args["phi"][..., 0],
                     "micro_homogeneity": args["mphi"][..., 0],
                     "spatial_doyle_ericksen": args["g"][..., 0, 0]}[name]
            return _base(args) + amp * extra
        model = var.LagrangianModel(density=density, splitting=None, name=f"{base.name}+{name}")
    st = vm.spacetime
    ns = var.noether_spatial_check(model, st)
    nm = var.noether_micro_check(model, st)
    mask = st.grid.interior_mask(1)
    h = st.grid.cell_volume
    results = [law("spatial_doyle_ericksen", ns["doyle_ericksen"], mask, h, _tol(sc, "spatial_doyle_ericksen")),
               law("spatial_homogeneity", ns["homogeneity"], mask, h, _tol(sc, "spatial_homogeneity")),
               law("micro_doyle_ericksen", nm["micro_doyle_ericksen"], mask, h, _tol(sc, "micro_doyle_ericksen")),
               law("micro_homogeneity", nm["micro_homogeneity"], mask, h, _tol(sc, "micro_homogeneity"))]
    rng = np.random.default_rng(sc.seed + 3)
    dphi = 1e-2 * rng.standard_normal(st.phi.shape)
    dm = 1e-2 * rng.standard_normal(st.mphi.shape)
    vt = var.variational_action_test(model, st, dphi, dm)
    results.append(law("action_identity", vt["defect"], tol=_tol(sc, "action_identity", 1e-6)))
    timeseries, extras = None, dict(action_test=vt)
    steps = int(opts.get("steps", 0))
    if steps > 0 and name is None:
        traj = mf.variational_trajectory(sc.seed, steps=steps, n=opts.get("n", 7))
        timeseries = {}
        for key, flow, tol in (("momentum_translation", cov.rigid_translation([1.0, 0.5]), 1e-6),
                               ("momentum_rotation", cov.rigid_rotation([[0.0, 1.0], [-1.0, 0.0]]), 1e-6)):
            series = var.noether_drift(traj.model, traj.spacetime, flow)
            results.append(law(key, series.max_drift, tol=_tol(sc, key, tol)))
            timeseries.setdefault("t", series.times.tolist())
            timeseries[key] = series.drift.tolist()
        dil = var.noether_drift(traj.model, traj.spacetime, cov.general_spatial(lambda x: np.asarray(x)))
        extras["dilation_drift"] = dil.max_drift
        timeseries["dilation_control"] = dil.drift.tolist()
    return results, timeseries, extras


RUNNERS = {"free": run_free, "scs": run_scs, "gnr": run_gnr, "material": run_material,
           "mixture": run_mixture, "voids": run_voids, "variational": run_variational}


def run(sc: Scenario) -> RunReport:
    start = time.perf_counter()
    try:
        results, timeseries, extras = RUNNERS[sc.regime](sc)
    except MicrocontinuumError as exc:
        exc.args = (f"[scenario {sc.name!r}, regime {sc.regime}] {exc}",) + exc.args[1:]
        raise
    rows = [r if isinstance(r, dict) else r.to_dict() for r in results]
    for r in rows:
        if not math.isfinite(r["Linf"]):
            r["passed"] = False
    return RunReport(sc.to_dict(), rows, timeseries, extras, time.perf_counter() - start)


# =============================================================================
# Emission
# =============================================================================

def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def emit(report: RunReport, out_dir) -> list:
    """Write report.json, residuals.csv and (for simulations) timeseries.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.json", out / "residuals.csv"]
    paths[0].write_text(report.to_json() + "\n")
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["law", "Linf", "L2", "tol", "pass"])
        for r in report.laws:
            w.writerow([r["law"], _fmt(r["Linf"]), _fmt(r["L2"]), _fmt(r["tol"]), _fmt(r["passed"])])
    if report.timeseries:
        p = out / "timeseries.csv"
        keys = list(report.timeseries)
        cols = [report.timeseries[k] for k in keys]
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys)
            for row in zip(*cols):
                w.writerow([_fmt(v) for v in row])
        paths.append(p)
    return paths
