"""Execute a validated :class:`ExperimentConfig` into an :class:`ArtifactWriter`.

Each mode fills the writer with its tables and a ``summary.json``. The summary
always carries ``max_mass_drift`` (largest relative mass change over one step,
``None`` when the run has reactions) and ``min_c`` (smallest density seen,
``None`` for static modes), which the conservation checks read.
"""
from __future__ import annotations

import math

import numpy as np

from . import diag
from .config import ExperimentConfig
from .errors import ValidationError
from .flux_lib import calibrate_lambda, phi_from_psi, psi_example, psi_positivity_scan
from .kinetic import KineticRun, density_moment, local_equilibrium, solve_kinetic
from .macro_pde import MacroState, SolveConfig, solve
from .upscale import first_order_correction_check, macro_coefficients, run_sweep
from .velocity_measure import check_g_properties, g_of, moment, moment_condition_test
from .writer import ArtifactWriter

ALGEBRAIC = "beta/sqrt(1+beta^2)"


def _algebraic(b):
    b = np.asarray(b, dtype=float)
    return b / np.sqrt(1.0 + b * b)


def speed_cap(model) -> float | None:
    """Sum of the diffusion and taxis speed caps, ``None`` if a part is unbounded."""
    caps = []
    if model.diffusion is not None:
        caps.append(model.diffusion.diffusion_cap())
    if model.taxis is not None:
        caps.append(model.taxis.taxis_cap())
    if not caps or any(c is None for c in caps):
        return None
    return float(sum(caps))


def _field_rows(t, grid, c, S=None):
    if grid.dimension == 1:
        x = grid.axis(0)
        cols = [x, c] if S is None else [x, c, S]
    else:
        X, Y = grid.centers()
        cols = [X.ravel(), Y.ravel(), c.ravel()] + ([] if S is None else [S.ravel()])
    for vals in zip(*cols):
        yield (t,) + vals


def _speed(fronts, window, side):
    try:
        return diag.front_speed(fronts, window, side)
    except ValidationError:
        return None


# --------------------------------------------------------------------- macro

def run_macro_mode(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    grid, model, run = cfg.grid, cfg.model, cfg.run
    cap = speed_cap(model)
    summary_runs = []
    multi = len(run.amplitudes) > 1
    for k, amp in enumerate(run.amplitudes):
        pre = f"amp{k + 1}_" if multi else ""
        c0 = amp * cfg.ic(grid)
        S0 = cfg.signal_ic(grid) if cfg.signal_ic is not None else None
        state = MacroState(0.0, c0, grid, S0)
        sc = SolveConfig(run.final_time, cfg.output.snapshot_every, run.dt_max, run.theta, run.front_every)
        tr = solve(state, model, sc)
        header = (["t", "x"] if grid.dimension == 1 else ["t", "x", "y"]) + ["c"] + (["S"] if S0 is not None else [])
        rows = []
        for s in tr.snapshots:
            rows.extend(_field_rows(s.t, grid, s.c, s.S))
        w.csv(pre + "snapshots.csv", header, rows)
        fr = tr.fronts.to_rows()
        w.csv(pre + "fronts.csv", ["t", "front_left", "front_right", "steep_left", "steep_right"],
              [[r["t"], r["front_left"], r["front_right"], r["steep_left"], r["steep_right"]] for r in fr])
        w.jsonl(pre + "diagnostics.jsonl", tr.diagnostics)
        if grid.dimension == 1:
            w.svg(pre + "snapshots.svg", [(f"t={s.t:g}", grid.axis(0), s.c) for s in tr.snapshots],
                  title=f"{cfg.name}: density", xlabel="x", ylabel="c")
        right = _speed(tr.fronts, run.speed_window, "right")
        left = _speed(tr.fronts, run.speed_window, "left")
        total = None if right is None or left is None else max(right, left)
        summary_runs.append({
            "amplitude": amp, "steps": tr.steps, "final_time": tr.final.t,
            "mass_initial": state.mass, "mass_final": tr.final.mass,
            "max_mass_drift": tr.max_mass_drift if cfg.conservative else None,
            "min_c": tr.min_c,
            "front_speed_right": right, "front_speed_left": left, "front_speed": total,
            "speed_cap": cap,
            "cap_ok": None if cap is None or total is None else bool(total <= 1.05 * cap),
            "final_steepness": (tr.fronts.steep_right[-1] if len(tr.fronts) else None),
        })
    out = {"runs": summary_runs,
           "max_mass_drift": None if not cfg.conservative else max(r["max_mass_drift"] for r in summary_runs),
           "min_c": min(r["min_c"] for r in summary_runs)}
    speeds = [r["front_speed_right"] for r in summary_runs]
    if multi and None not in speeds and speeds[0] > 0:
        out["speed_change"] = (speeds[-1] - speeds[0]) / speeds[0]
    return out


# ------------------------------------------------------------------- kinetic

def run_kinetic_mode(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    k, grid = cfg.kinetic, cfg.grid
    c0 = cfg.ic(grid)
    S0 = k.signal_ic(grid) if k.signal_ic is not None else None
    mu = k.turning.mu if (k.turning is not None and k.turning.kind == "relax-to-mu") else None
    if k.turning is not None and k.turning.kind != "relax-to-mu" and k.turning.kind != "relax-uniform" and S0 is None:
        raise ValidationError(f"kinetic.turning: {k.turning.kind!r} needs kinetic.signal")
    if k.accel is not None and S0 is None:
        raise ValidationError("kinetic.accel: the velocity drift needs kinetic.signal")
    state = local_equilibrium(c0, grid, k.vspace, mu, S=S0)
    run = KineticRun(cfg.run.final_time, k.transport, k.split_rate, cfg.run.dt_max,
                     cfg.output.snapshot_every, k.signal)
    tr = solve_kinetic(state, k.turning, k.scaling, run, k.accel)
    if grid.dimension == 1:
        header = ["t", "x", "c", "V"]
        rows = [(t,) + r for t, cb, V in tr.snapshots for r in zip(grid.axis(0), cb, V)]
    else:
        header = ["t", "x", "y", "c", "Vx", "Vy"]
        X, Y = grid.centers()
        rows = [(t,) + r for t, cb, V in tr.snapshots
                for r in zip(X.ravel(), Y.ravel(), cb.ravel(), V[..., 0].ravel(), V[..., 1].ravel())]
    w.csv("moments.csv", header, rows)
    if "kinetic-csv" in w.formats and grid.dimension == 1:
        fin = tr.final
        w.csv("kinetic.csv", ["t", "x", "v", "c"],
              [(fin.t, x, v, fin.c[i, j]) for i, x in enumerate(grid.axis(0))
               for j, v in enumerate(fin.vspace.nodes)], force=True)
    w.jsonl("diagnostics.jsonl", tr.diagnostics)
    if grid.dimension == 1:
        w.svg("moments.svg", [(f"t={t:g}", grid.axis(0), cb) for t, cb, _ in tr.snapshots],
              title=f"{cfg.name}: density moment", xlabel="x", ylabel="c")
    return {"steps": tr.steps, "substeps": tr.substeps, "final_time": tr.final.t,
            "mass_initial": state.mass, "mass_final": tr.final.mass,
            "max_mass_drift": tr.max_mass_drift, "min_c": tr.min_c,
            "min_kernel": tr.min_kernel}


# -------------------------------------------------------------- sweep & co.

def run_sweep_mode(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    rep = run_sweep(cfg.sweep)
    w.json("sweep_report.json", rep.to_json())
    w.csv("errors.csv", ["eps", "error"], list(zip(rep.eps, rep.errors)))
    w.svg("errors.svg", [(rep.pairing, rep.eps, rep.errors)], title=f"{rep.pairing}: L1 error",
          xlabel="eps", ylabel="error", logx=True, logy=True)
    return {"pairing": rep.pairing, "order": rep.order, "monotone": rep.monotone,
            "errors": rep.errors, "failures": rep.failures,
            "max_mass_drift": rep.extra["max_mass_drift"], "min_c": rep.extra["min_c"]}


def run_correction_mode(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    c = cfg.correction
    rep = first_order_correction_check(c.pairing, c.eps, c.cells, c.nv, c.final_time, c.split_rate)
    w.json("correction_report.json", rep.to_json())
    return {**rep.to_json()}


def run_coeff_mode(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    rows, out = [], []
    for case in cfg.coefficients:
        co = macro_coefficients(case.measure, case.lam, case.a, case.n)
        rows.append([case.label, case.lam, case.a, moment(case.measure, 2) if case.measure.dimension == 1
                     else None, co.D_c, float(np.atleast_2d(co.D_tensor)[0, 0]),
                     co.diffusion_factor, co.drift_factor])
        out.append({"label": case.label, **co.to_json()})
    w.csv("coefficients.csv", ["label", "lam", "a", "second_moment", "D_c", "D_uniform",
                               "diffusion_factor", "drift_factor"], rows)
    w.json("coefficients.json", {"cases": out})
    return {"cases": len(out), "max_mass_drift": None, "min_c": None}


def run_check_mode(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    chk = cfg.check
    mu = chk.measure
    if mu.dimension != 1:
        raise ValidationError("check.measure: the G checks are one-dimensional")
    b = chk.betas
    G = g_of(mu, b)
    tanh = np.tanh(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        lang = np.where(np.abs(b) > 1e-4, 1.0 / np.tanh(b) - 1.0 / b, b / 3.0 - b ** 3 / 45.0)
    w.csv("g_table.csv", ["beta", "G", "tanh", "langevin"], list(zip(b, G, tanh, lang)))
    grep = check_g_properties(mu)
    mom = moment_condition_test(lambda x: g_of(mu, x), chk.moment_orders)
    report = {
        "measure": mu.to_json(), "kind": mu.kind,
        "g_properties": {"odd": grep.odd, "increasing": grep.increasing, "bounded": grep.bounded,
                         "saturates": grep.saturates, "delta_sat": grep.delta_sat,
                         "violations": grep.violations, "passed": grep.passed},
        "max_abs_diff_tanh": float(np.max(np.abs(G - tanh))),
        "max_abs_diff_langevin": float(np.max(np.abs(G - lang))),
        "moment_test": {"values": mom.values, "passed": mom.passed, "ok": mom.ok, "tol": mom.tol},
    }
    alg = moment_condition_test(_algebraic, chk.moment_orders)
    report["moment_test_algebraic"] = {"g": ALGEBRAIC, "values": alg.values, "passed": alg.passed,
                                       "ok": alg.ok}
    if chk.psi_C is not None:
        psi = psi_example(chk.psi_C)
        cal = calibrate_lambda(psi, _algebraic)
        test_b = np.array([0.1, 1.0, 10.0])
        phi = phi_from_psi(psi, cal.lam, None, test_b)
        report["phi_psi"] = {"C": chk.psi_C, "psi_min": psi_positivity_scan(psi), "lam": cal.lam,
                             "residual": cal.residual, "betas": test_b,
                             "phi": phi, "target": _algebraic(test_b),
                             "max_error": float(np.max(np.abs(phi - _algebraic(test_b))))}
        grid_b = np.linspace(-10.0, 10.0, 201)
        w.csv("phi_table.csv", ["beta", "phi", "target"],
              list(zip(grid_b, phi_from_psi(psi, cal.lam, None, grid_b), _algebraic(grid_b))))
    w.json("check_report.json", report)
    return {"g_passed": grep.passed, "moment_ok": mom.ok,
            "max_abs_diff_tanh": report["max_abs_diff_tanh"],
            "max_mass_drift": None, "min_c": None,
            **({"phi_max_error": report["phi_psi"]["max_error"]} if "phi_psi" in report else {})}


_MODES = {"macro": run_macro_mode, "kinetic": run_kinetic_mode, "sweep": run_sweep_mode,
          "correction": run_correction_mode, "coeff-table": run_coeff_mode, "check": run_check_mode}


def execute(cfg: ExperimentConfig, w: ArtifactWriter) -> dict:
    """Run ``cfg`` and add ``summary.json`` and ``config.json`` to ``w``."""
    with np.errstate(over="ignore", under="ignore"):
        summary = _MODES[cfg.mode](cfg, w)
    summary = {"name": cfg.name, "mode": cfg.mode, "conservative": cfg.conservative, **summary}
    if summary.get("max_mass_drift") is not None and not math.isfinite(summary["max_mass_drift"]):
        summary["max_mass_drift"] = None
    w.json("config.json", cfg.raw)
    w.json("summary.json", summary)
    return summary
