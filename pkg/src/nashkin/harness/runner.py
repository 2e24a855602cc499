"""Scenario dispatch and artifact writing.

Every run directory receives ``diagnostics.csv``, ``final_state.json`` and
``manifest.json``.  Numbers are written with Python's shortest round-trip
formatting, so reruns with the same scenario and seed give identical CSV
text.  Files are first written to a temporary name and then renamed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .. import __version__
from .. import homogeneous as hom
from .. import kinetic as kin
from .. import macro as mac
from .. import nash
from .. import particles as part
from ..cost import Herding, energy_report
from ..errors import ConfigurationError, NashkinError
from ..manifold import GridFunction, circle, default_grid, normalized, uniform_density
from .config import Scenario, validate

DIAGNOSTICS = "diagnostics.csv"
FINAL_STATE = "final_state.json"
MANIFEST = "manifest.json"
AGGREGATE = "aggregate.csv"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL = 4


class ScenarioError(Exception):
    """A run failed; carries the exit code and the manifest that was written."""

    def __init__(self, message, exit_code, manifest=None):
        super().__init__(message)
        self.exit_code = exit_code
        self.manifest = manifest


@dataclass
class RunResult:
    columns: list
    rows: list
    final_state: dict
    summary: dict
    grids: dict = field(default_factory=dict)


@dataclass
class RunManifest:
    path: str
    data: dict

    @property
    def status(self) -> str:
        return self.data["status"]

    @property
    def summary(self) -> dict:
        return self.data.get("summary", {})


# ---------------------------------------------------------------- formatting

def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(row.get(c, "")) for c in columns])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"


def write_atomic(path: str, text: str) -> str:
    """Write ``text`` via temp file + rename; returns the sha256 digest."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    data = text.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(data).hexdigest()


def file_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# ---------------------------------------------------------------- scenarios

def _decision_grid(p):
    return default_grid(p["n"], p.get("grid_nodes"))


def _initial_density(grid, p):
    init = p["init"]
    if init == "uniform":
        return uniform_density(grid)
    if init == "vmf":
        return nash.vmf_density(grid, p["init_kappa"])
    amp = p.get("perturbation", 0.1)
    return normalized(GridFunction(grid, 1.0 + amp * grid.vectors[:, 0]))


def _run_equilibrium(p):
    grid = _decision_grid(p)
    kind = Herding(p["interaction_strength"])
    sol = nash.fixed_point(kind, p["d"], _initial_density(grid, p), damping=p["damping"],
                           tol=p["tol"], max_iter=p["max_iter"])
    rep = energy_report(kind, sol.density, p["d"])
    check = nash.verify(kind, sol.density, p["d"], tol=10 * p["tol"])
    summary = {
        "iterations": sol.iterations,
        "residual": sol.residual,
        "chemical_constant": sol.chemical_constant,
        "partition": sol.partition,
        "order_norm": rep.order_norm,
        "free_energy": rep.free_energy,
        "social_cost": rep.social_cost,
        "verify_deviation": check.deviation,
    }
    if p["interaction_strength"] > 0:
        phase = nash.kappa_solve(p["d"] / p["interaction_strength"], p["n"])
        summary.update(kappa_d=phase.kappa_d, regime=phase.regime.value)
    rows = [{"iteration": i, "l1_increment": v} for i, v in enumerate(sol.increments)]
    state = {
        "grid": grid.describe(),
        "nodes": grid.nodes,
        "weights": grid.weights,
        "density": sol.density.values,
        "order_vector": rep.order_vector,
        **summary,
    }
    return RunResult(["iteration", "l1_increment"], rows, state, summary, {"decision": grid.describe()})


def _run_homogeneous(p):
    grid = _decision_grid(p)
    kind = Herding(p["interaction_strength"])
    scheme = hom.Scheme(p["scheme"])
    dt = p["dt"]
    if dt is None:
        dt = hom.stable_dt(kind, grid, p["d"], scheme)
        if not math.isfinite(dt):
            dt = 0.01
    cfg = hom.HomogeneousRunConfig(kind, p["d"], dt, p["t_end"], grid, p["record_every"], scheme)
    rec = hom.run(_initial_density(grid, p), cfg)
    check = nash.verify(kind, rec.final_density, p["d"], tol=1e-3)
    summary = {
        "final_free_energy": float(rec.free_energy[-1]),
        "final_order_norm": float(rec.order_norm[-1]),
        "max_mass_drift": float(np.max(np.abs(rec.mass - 1.0))),
        "max_free_energy_increase": float(np.max(np.diff(rec.free_energy), initial=0.0)),
        "nash_deviation": check.deviation,
        "dt": cfg.t_end / cfg.n_steps if cfg.n_steps else dt,
        "steps": cfg.n_steps,
    }
    columns = ["t", "mass", "free_energy", "dissipation", "order_norm"]
    state = {
        "grid": grid.describe(),
        "nodes": grid.nodes,
        "weights": grid.weights,
        "density": rec.final_density.values,
        **summary,
    }
    return RunResult(columns, list(rec.rows()), state, summary, {"decision": grid.describe()})


def _run_particles(p):
    cfg = part.ParticleRunConfig(
        n_agents=p["n_agents"], d=p["d"], dt=p["dt"], t_end=p["t_end"],
        interaction_strength=p["interaction_strength"], spatial_kernel=p["kernel"],
        seed=p["seed"], dim=p["n"],
    )
    kappa = 0.0
    if p["init"] == "vmf":
        kappa = p["init_kappa"]
        if kappa == 0.0 and p["interaction_strength"] > 0 and p["d"] > 0:
            kappa = nash.kappa_solve(p["d"] / p["interaction_strength"], p["n"]).kappa_d
    ens = part.initial_ensemble(cfg, kappa=kappa)
    rec = part.run(cfg, ens, record_every=p["record_every"])
    half = rec.times >= 0.5 * p["t_end"]
    hist_grid = default_grid(p["n"], p["histogram_nodes"])
    w = rec.final.mean_decision()
    axis = w / np.linalg.norm(w) if np.linalg.norm(w) > 0 else None
    hist = part.empirical_density(rec.final, hist_grid, axis=axis)
    summary = {
        "mean_order": float(rec.order_norm[half].mean()),
        "order_std": float(rec.order_norm[half].std()),
        "max_norm_error": float(rec.norm_error.max()),
    }
    columns = ["t", "order_norm"] + [f"w{i + 1}" for i in range(cfg.dim)] + ["norm_error"]
    rows = []
    for t, o, m, e in zip(rec.times, rec.order_norm, rec.mean_vector, rec.norm_error):
        row = {"t": t, "order_norm": o, "norm_error": e}
        row.update({f"w{i + 1}": m[i] for i in range(cfg.dim)})
        rows.append(row)
    state = {
        "histogram_grid": hist_grid.describe(),
        "histogram_nodes": hist_grid.nodes,
        "histogram_density": hist.values,
        "mean_decision": w,
        "time": rec.final.time,
        **summary,
    }
    grids = {"agents": cfg.n_agents, "histogram": hist_grid.describe()}
    return RunResult(columns, rows, state, summary, grids)


def _initial_macro_data(p):
    m = p["x_cells"]
    x = kin.cell_centres(m)
    if p["x_dim"] == 1:
        rho = 1.0 + p["rho_amplitude"] * np.cos(2 * np.pi * x)
        angle = p["angle_amplitude"] * np.sin(2 * np.pi * x)
    else:
        xx, yy = np.meshgrid(x, x, indexing="ij")
        rho = 1.0 + p["rho_amplitude"] * np.cos(2 * np.pi * xx)
        angle = p["angle_amplitude"] * np.sin(2 * np.pi * yy)
    return rho, angle


def _record_times(p):
    return list(np.linspace(0.0, p["t_end"], p["records"])[1:-1])


def _run_kinetic(p):
    ygrid = circle(p["y_nodes"])
    rho, angle = _initial_macro_data(p)
    f0 = kin.local_equilibrium(rho, angle, p["d"], ygrid)
    tr = kin.run(f0, p["epsilon"], p["d"], p["t_end"], dt=p["dt"], record_times=_record_times(p))
    rows = [
        {"t": t, "mass": m, "mean_lte_residual": r, "rho_min": float(q.min()), "rho_max": float(q.max())}
        for t, m, r, q in zip(tr.times, tr.mass, tr.mean_lte_residual, tr.rho)
    ]
    mom = kin.moments(tr.final, p["d"])
    summary = {
        "max_mass_drift": float(np.max(np.abs(tr.mass - tr.mass[0]))),
        "final_mean_lte_residual": float(tr.mean_lte_residual[-1]),
        "rho_l1_change": float(np.sum(np.abs(tr.rho[-1] - tr.rho[0])) * tr.final.dx**tr.final.dim),
    }
    state = {"x_cells": list(tr.final.x_cells), "rho": mom.rho, "u": mom.u, **summary}
    grids = {"x_cells": list(tr.final.x_cells), "decision": ygrid.describe()}
    return RunResult(["t", "mass", "mean_lte_residual", "rho_min", "rho_max"], rows, state, summary, grids)


def _run_macro(p):
    rho, angle = _initial_macro_data(p)
    coeffs = mac.build_coefficients(p["d"], 2, p["b"], p["theta"], (1e-3, p["rho_max"]),
                                    p["table_samples"])
    tr = mac.run(mac.MacroFields(rho, angle), coeffs, p["t_end"], record_times=_record_times(p))
    rows = []
    for s in tr.states:
        unit = np.abs(np.linalg.norm(s.omega, axis=-1) - 1.0)
        rows.append({"t": s.time, "mass": s.mass(), "rho_min": float(s.rho.min()),
                     "rho_max": float(s.rho.max()), "unit_error": float(unit.max())})
    final = tr.final
    summary = {
        "max_mass_drift": float(max(abs(r["mass"] - rows[0]["mass"]) for r in rows)),
        "steps": tr.steps,
        "final_rho_min": float(final.rho.min()),
    }
    state = {"x_cells": list(final.rho.shape), "rho": final.rho, "angle": final.angle, **summary}
    return RunResult(["t", "mass", "rho_min", "rho_max", "unit_error"], rows, state, summary,
                     {"x_cells": list(final.rho.shape), "table_samples": p["table_samples"]})


def _run_phase_sweep(p):
    # rounding keeps grid points such as 0.5 exact instead of 0.49999999999999994
    d = np.round(np.linspace(p["d_min"], p["d_max"], p["points"]), 12)
    d_eff = d / p["interaction_strength"]
    kappa = np.atleast_1d(nash.concentration(d_eff, p["n"]))
    order = np.atleast_1d(nash.order_parameter(kappa, p["n"]))
    rows = [{"d": a, "kappa_d": k, "order": c} for a, k, c in zip(d, kappa, order)]
    residual = float(np.max(np.abs(order - d_eff * kappa)))
    summary = {"critical_noise": p["interaction_strength"] / p["n"], "max_residual": residual,
               "bistable_points": int(np.sum(kappa > 0))}
    state = {"d": d, "kappa_d": kappa, "order": order, **summary}
    return RunResult(["d", "kappa_d", "order"], rows, state, summary, {"points": p["points"]})


def _run_closure_compare(p):
    ygrid = circle(p["y_nodes"])
    x = kin.cell_centres(p["x_cells"])
    rho = 1.0 + p["rho_amplitude"] * np.cos(2 * np.pi * x)
    f0 = kin.local_equilibrium(rho, 0.0, p["d"], ygrid)
    coeffs = mac.build_coefficients(p["d"], 2, p["b"], p["theta"], (1e-3, 10.0))
    samples = list(np.linspace(0.0, p["t_end"], p["samples"] + 1)[1:])
    rows, table = [], []
    for eps in p["epsilons"]:
        rep = kin.closure_compare(f0, eps, p["d"], p["t_end"], sample_times=samples, coeffs=coeffs)
        for t, gap in zip(rep.times, rep.discrepancy):
            rows.append({"epsilon": eps, "t": t, "discrepancy": gap})
        table.append({"epsilon": eps, "final_discrepancy": rep.final_discrepancy,
                      "max_discrepancy": float(rep.discrepancy.max()),
                      "final_lte_residual": float(rep.lte_residual[-1])})
    ordered = sorted(table, key=lambda r: -r["epsilon"])
    finals = [r["final_discrepancy"] for r in ordered]
    decreasing = all(b < a for a, b in zip(finals, finals[1:]))
    summary = {"decreasing_in_epsilon": decreasing, "smallest_eps_discrepancy": finals[-1]}
    state = {"report": table, **summary}
    grids = {"x_cells": p["x_cells"], "decision": ygrid.describe()}
    return RunResult(["epsilon", "t", "discrepancy"], rows, state, summary, grids)


_DISPATCH = {
    "equilibrium": _run_equilibrium,
    "homogeneous": _run_homogeneous,
    "particles": _run_particles,
    "kinetic": _run_kinetic,
    "macro": _run_macro,
    "phase_sweep": _run_phase_sweep,
    "closure_compare": _run_closure_compare,
}


def run_scenario(s: Scenario, out_dir: str | None = None, seed: int | None = None) -> RunManifest:
    """Run one validated scenario and write its artifacts.

    Raises ScenarioError (after writing a failure manifest) when the
    computation fails.
    """
    if seed is not None:
        s = s.with_parameter("seed", seed)
    out = out_dir if out_dir is not None else s.output_dir
    s = replace(s, output_dir=out)
    os.makedirs(out, exist_ok=True)
    manifest = {
        "scenario": s.echo(),
        "artifact_version": __version__,
        "rng": {"algorithm": part.RNG_ALGORITHM, "seed": s.parameters["seed"]},
        "grids": {},
        "wall_clock_seconds": None,
        "outputs": [],
        "status": "running",
        "partial": False,
        "summary": {},
    }
    start = time.perf_counter()

    def emit(name, text):
        digest = write_atomic(os.path.join(out, name), text)
        manifest["outputs"].append({"file": name, "sha256": digest})

    try:
        result = _DISPATCH[s.kind](s.parameters)
        emit(DIAGNOSTICS, csv_text(result.columns, result.rows))
        emit(FINAL_STATE, json_text(result.final_state))
    except ConfigurationError as exc:
        failure = (EXIT_CONFIG, exc)
    except (NashkinError, FloatingPointError, ValueError) as exc:
        failure = (EXIT_NUMERICAL, exc)
    else:
        failure = None
    manifest["wall_clock_seconds"] = time.perf_counter() - start
    if failure is None:
        manifest.update(status="ok", summary=_jsonable(result.summary), grids=_jsonable(result.grids))
    else:
        code, exc = failure
        manifest.update(status="failed", partial=True,
                        error=f"scenario {s.name!r} ({s.kind}): {type(exc).__name__}: {exc}")
    write_atomic(os.path.join(out, MANIFEST), json_text(manifest))
    result_manifest = RunManifest(os.path.join(out, MANIFEST), manifest)
    if failure is not None:
        raise ScenarioError(manifest["error"], failure[0], result_manifest)
    return result_manifest


def _value_label(v) -> str:
    return format_value(v)


def _sweep_one(args):
    scenario, out = args
    try:
        m = run_scenario(scenario, out)
        return m.data
    except ScenarioError as exc:
        return exc.manifest.data if exc.manifest else {"status": "failed", "error": str(exc)}


def sweep(base: Scenario, axis: str | None = None, values=None, out_dir: str | None = None,
          workers: int = 1):
    """Independent runs over ``axis``; writes ``aggregate.csv`` in ``out_dir``.

    Returns (list of manifest dicts, exit code).  Every value is validated
    before any run starts.
    """
    axis = axis or base.sweep_axis
    values = base.sweep_values if values is None else tuple(values)
    if axis is None:
        raise ConfigurationError("sweep needs an axis ([sweep] axis or --axis)")
    base = validate(replace(base, sweep_axis=axis, sweep_values=tuple(values)))
    out = out_dir if out_dir is not None else base.output_dir
    jobs = []
    for v in base.sweep_values:
        sub = base.with_parameter(axis, v)
        sub = replace(sub, name=f"{base.name}[{axis}={_value_label(v)}]")
        jobs.append((sub, os.path.join(out, f"{axis}={_value_label(v)}")))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]

    keys = []
    for r in results:
        for k in r.get("summary", {}):
            if k not in keys:
                keys.append(k)
    columns = [axis, "status"] + keys
    rows = []
    for v, r in zip(base.sweep_values, results):
        row = {axis: v, "status": r.get("status", "failed")}
        row.update(r.get("summary", {}))
        rows.append(row)
    os.makedirs(out, exist_ok=True)
    digest = write_atomic(os.path.join(out, AGGREGATE), csv_text(columns, rows))
    failed = sum(r.get("status") != "ok" for r in results)
    top = {
        "scenario": base.echo(),
        "artifact_version": __version__,
        "sweep": {"axis": axis, "values": list(base.sweep_values)},
        "runs": [{"value": v, "status": r.get("status"), "error": r.get("error")}
                 for v, r in zip(base.sweep_values, results)],
        "outputs": [{"file": AGGREGATE, "sha256": digest}],
        "status": "ok" if failed == 0 else "partial",
        "partial": failed > 0,
    }
    write_atomic(os.path.join(out, MANIFEST), json_text(top))
    return results, (EXIT_OK if failed == 0 else EXIT_PARTIAL)
