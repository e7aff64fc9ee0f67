"""Acceptance criteria. Each test prints one PASS/FAIL line."""
import json
import time
from pathlib import Path

import numpy as np
import pytest

from fluxlim.config import ExperimentConfig
from fluxlim.flux_lib import calibrate_lambda, phi_from_psi, psi_example, psi_positivity_scan
from fluxlim.grid import SpatialGrid
from fluxlim.kinetic import KineticState, TurningOperatorSpec, apply_turning
from fluxlim.presets import PRESET_NAMES, get_preset
from fluxlim.runner import execute
from fluxlim.upscale import (first_order_correction_check, linear_drift_velocity,
                             macro_coefficients, saturated_drift_velocity)
from fluxlim.velocity_measure import g_of, make_discrete, make_lebesgue, moment_condition_test
from fluxlim.writer import ArtifactWriter

BASELINES = json.loads((Path(__file__).parent / "baselines.json").read_text())


def algebraic(b):
    return b / np.sqrt(1.0 + b * b)


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}: {detail}")
        assert ok, detail
    return emit


def run_preset(name, tmp):
    cfg = ExperimentConfig.from_dict(get_preset(name))
    return execute(cfg, ArtifactWriter(tmp / name, cfg.output.formats))


@pytest.fixture(scope="module")
def presets(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("presets")
    t0 = time.perf_counter()
    out = {}
    for name in PRESET_NAMES:
        s0 = time.perf_counter()
        out[name] = (run_preset(name, tmp), time.perf_counter() - s0)
    return out, time.perf_counter() - t0


def test_criterion_01_closed_form_g(report):
    t0 = time.perf_counter()
    b = np.linspace(-50.0, 50.0, 2001)
    e_two = float(np.max(np.abs(g_of(make_discrete([(-1.0, 0.5), (1.0, 0.5)]), b) - np.tanh(b))))
    nz = b[b != 0]
    e_leb = float(np.max(np.abs(g_of(make_lebesgue(32), nz) - (1.0 / np.tanh(nz) - 1.0 / nz))))
    dt = time.perf_counter() - t0
    ok = e_two <= 1e-12 and e_leb <= 1e-8 and dt < 1.0
    report(1, "closed-form G", ok, f"two atoms {e_two:.2e} (<= 1e-12), Lebesgue {e_leb:.2e} (<= 1e-8), {dt:.2f} s")


def test_criterion_02_moment_discriminator(report):
    t0 = time.perf_counter()
    th = moment_condition_test(np.tanh, (2, 4))
    alg = moment_condition_test(algebraic, (2, 4))
    dt = time.perf_counter() - t0
    ok = (abs(th.values[2] - 1) <= 1e-4 and abs(th.values[4] - 1) <= 1e-4 and th.ok
          and not alg.ok and abs(alg.values[4]) <= 1e-4 and dt < 5.0)
    report(2, "moment discriminator", ok,
           f"tanh I2 = {th.values[2]:.6f}, I4 = {th.values[4]:.6f}; algebraic I4 = {alg.values[4]:.2e}, "
           f"rejected = {not alg.ok}; {dt:.2f} s")


def test_criterion_03_phi_psi(report):
    t0 = time.perf_counter()
    psi = psi_example(2.0)
    cal = calibrate_lambda(psi, algebraic)
    b = np.array([0.1, 1.0, 10.0])
    err = float(np.max(np.abs(phi_from_psi(psi, cal.lam, None, b) - algebraic(b))))
    dt = time.perf_counter() - t0
    ok = err <= 1e-6 and psi_positivity_scan(psi) > 0 and dt < 5.0
    report(3, "Phi-Psi correspondence", ok, f"C = 2, lam = {cal.lam:.6f}, max error {err:.2e} (<= 1e-6), {dt:.2f} s")


def test_criterion_04_relativistic_cap(report, presets):
    (runs, _) = presets
    s, dt = runs["rh-front"]
    v1, v2 = (r["front_speed_right"] for r in s["runs"])
    change = abs(v2 - v1) / v1
    ok = 0.90 <= v1 <= 1.05 and 0.90 <= v2 <= 1.05 and change < 0.03 and dt < 60
    report(4, "relativistic speed cap", ok,
           f"speed {v1:.4f} (amp 1), {v2:.4f} (amp 2) in [0.90, 1.05], change {100 * change:.2f}% (< 3%), "
           f"{dt:.1f} s")


def test_criterion_05_porous_medium_contrast(report, presets):
    (runs, _) = presets
    s, dt = runs["pm-contrast"]
    v1, v2 = (r["front_speed_right"] for r in s["runs"])
    inc = (v2 - v1) / v1
    ok = inc >= 0.10 and dt < 60
    report(5, "porous-medium contrast", ok, f"speed {v1:.4f} -> {v2:.4f}, increase {100 * inc:.1f}% (>= 10%), {dt:.1f} s")


def test_criterion_06_conservation_positivity(report, presets):
    (runs, total) = presets
    bad, worst_drift, worst_min = [], 0.0, np.inf
    for name, (s, _) in runs.items():
        if not s["conservative"]:
            continue
        drift, cmin = s.get("max_mass_drift"), s.get("min_c")
        if s["mode"] in ("check", "coeff-table"):
            continue          # static modes evolve no density
        if drift is None or drift > 1e-12 or cmin is None or cmin < -1e-10:
            bad.append(name)
        worst_drift = max(worst_drift, drift or 0.0)
        worst_min = min(worst_min, cmin if cmin is not None else np.inf)
    ok = not bad and len(runs) == 12 and total < 300
    report(6, "conservation and positivity", ok,
           f"{len(runs)} presets, max drift {worst_drift:.1e} (<= 1e-12), min c {worst_min:.1e} (>= -1e-10), "
           f"{total:.1f} s total" + (f", failing: {bad}" if bad else ""))


def test_criterion_07_turning_conservativity(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    g = SpatialGrid.line(-4, 4, 64, "periodic")
    leb = make_lebesgue(32)
    specs = [TurningOperatorSpec("relax-to-mu", 1.3),
             TurningOperatorSpec("relax-uniform", 0.7),
             TurningOperatorSpec("kernel-past-motion", 1.0, psi=psi_example(2.0)),
             TurningOperatorSpec("kernel-anterior-posterior", 1.0, D_c=0.2, C=0.2, chi=0.1)]
    worst = 0.0
    for _ in range(100):
        c = rng.uniform(0.0, 2.0, (64, leb.size))
        S = rng.uniform(0.5, 3.0) * np.sin(rng.uniform(0.5, 2.0) * g.axis(0))
        st = KineticState(0.0, c, g, leb, S)
        norm = float(np.max(np.abs(c)))
        for spec in specs:
            worst = max(worst, float(np.max(np.abs(apply_turning(st, spec) @ st.omega))) / norm)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 10
    report(7, "turning conservativity", ok, f"100 states x 4 kinds, max |int L dv| / |c| = {worst:.1e} (<= 1e-12), {dt:.1f} s")


@pytest.mark.parametrize("preset,pairing", [("sweep-relax-mu", "relax-mu"),
                                            ("sweep-pastmotion", "past-motion"),
                                            ("sweep-accel", "accel-parabolic")])
def test_criterion_08_upscaling(report, presets, preset, pairing):
    (runs, _) = presets
    s, dt = runs[preset]
    base = BASELINES["sweeps"][pairing]["order"]
    p = s["order"]
    ok = s["monotone"] and p is not None and abs(p - base) <= BASELINES["order_tolerance"] and dt < 300
    errs = ", ".join(f"{e:.3g}" for e in s["errors"])
    report(8, f"upscaling {pairing}", ok,
           f"errors [{errs}] decreasing = {s['monotone']}, p = {p:.3f} vs baseline {base:.3f} (+-0.15), {dt:.1f} s")


def test_criterion_09_coefficients(report):
    t0 = time.perf_counter()
    leb = make_lebesgue(32)
    a = macro_coefficients(make_discrete([(-1.0, 0.5), (1.0, 0.5)]), 2.0).D_c
    b = macro_coefficients(leb, 1.0).D_c
    acc = macro_coefficients(leb, 1.0, a=1.0, n=1)
    errs = [abs(a - 0.5), abs(b - 1 / 3), abs(acc.diffusion_factor - 1 / 18), abs(acc.drift_factor - 0.5)]
    dt = time.perf_counter() - t0
    ok = max(errs) <= 1e-12 and dt < 1.0
    report(9, "coefficient formulas", ok,
           f"D_c = {a!r}, {b!r}; factors {acc.diffusion_factor!r}, {acc.drift_factor!r}; "
           f"max error {max(errs):.1e} (<= 1e-12)")


def test_criterion_10_fully_flux_limited_cap(report, presets):
    (runs, _) = presets
    s, dt = runs["new-fullfl"]
    r = s["runs"][0]
    ok = r["front_speed"] is not None and r["front_speed"] <= 1.5 * 1.05 and dt < 90
    report(10, "fully flux-limited cap", ok,
           f"total front speed {r['front_speed']:.4f} (<= {1.5 * 1.05:.3f}), cap {r['speed_cap']}, {dt:.1f} s")


def test_criterion_11_first_order_correction(report, presets):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    g = rng.uniform(-100.0, 100.0, 10_000)
    a = rng.uniform(0.1, 5.0, 10_000)
    lam = rng.uniform(0.1, 5.0, 10_000)
    gap = float(np.max(np.abs(saturated_drift_velocity(g, a, lam, 0.0) - linear_drift_velocity(g, a, lam))))
    (runs, _) = presets
    s, dt_fsg = runs["fsg-tanh"]
    devs = []
    for pairing, rep in [("relax-mu", s),
                         ("accel-parabolic", first_order_correction_check("accel-parabolic", 0.1).to_json())]:
        base = BASELINES["corrections"][pairing]
        for key in ("zero_order_error", "corrected_error"):
            devs.append(abs(rep[key] - base[key]) / base[key])
    dt = time.perf_counter() - t0 + dt_fsg
    ok = gap <= 1e-14 and max(devs) <= BASELINES["report_tolerance"] and dt < 180
    report(11, "first-order correction", ok,
           f"|saturated(eps=0) - linear| = {gap:.1e} (<= 1e-14) on 1e4 samples; report deviation "
           f"{100 * max(devs):.2f}% (<= 10%); corrected {s['corrected_error']:.4g} vs zero-order "
           f"{s['zero_order_error']:.4g}; {dt:.1f} s")
