import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fluxlim import diag
from fluxlim.errors import CFLViolation, SingularBarrierError, ValidationError
from fluxlim.flux_lib import FluxSpec
from fluxlim.grid import SpatialGrid
from fluxlim.macro_pde import (MacroState, ModelSpec, ReactionSpec, SignalSpec, SolveConfig,
                               cfl_dt, max_speed, solve, step)

LIN = FluxSpec("linear-diffusion", {"D_c": 1.0})
RH = FluxSpec("relativistic", {"D_c": 1.0, "C": 1.0})


def gaussian(x, w):
    return np.exp(-0.5 * (x / w) ** 2) / (w * math.sqrt(2 * math.pi))


def bump_state(cells=256, boundary="no-flux", S=None):
    g = SpatialGrid.line(-4, 4, cells, boundary)
    return MacroState(0.0, gaussian(g.axis(0), 0.5), g, S)


def test_constant_state_is_steady():
    g = SpatialGrid.line(-4, 4, 64)
    st0 = MacroState(0.0, np.full(64, 0.7), g)
    m = ModelSpec(diffusion=LIN)
    new = step(st0, m, cfl_dt(st0, m))
    assert np.array_equal(new.c, st0.c)


@pytest.mark.parametrize("family,params", [
    ("linear-diffusion", {}), ("porous-medium", {"m": 2.0}), ("relativistic", {}),
    ("psi-saturated", {}), ("fsg", {"eps": 0.2}), ("degenerate-singular", {"c_max": 4.0}),
])
@pytest.mark.parametrize("boundary", ["no-flux", "periodic"])
def test_one_step_conserves_mass(family, params, boundary):
    st0 = bump_state(boundary=boundary)
    m = ModelSpec(diffusion=FluxSpec(family, params))
    new = step(st0, m, cfl_dt(st0, m))
    assert abs(new.mass - st0.mass) <= 1e-13 * st0.mass
    assert new.c.min() >= -1e-10


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=32, max_size=32), st.floats(0, 3))
def test_random_states_conserve_and_stay_nonnegative(vals, chi):
    g = SpatialGrid.line(0, 1, 32)
    S = np.sin(2 * np.pi * g.axis(0)) * 3
    st0 = MacroState(0.0, np.array(vals), g, S)
    m = ModelSpec(diffusion=RH, taxis=FluxSpec("tanh-taxis", {"chi": chi}))
    new = step(st0, m, cfl_dt(st0, m))
    if st0.mass > 0:
        assert abs(new.mass - st0.mass) <= 1e-12 * st0.mass
    assert new.c.min() >= -1e-10


def test_cfl_examples():
    g = SpatialGrid.line(0, 8, 800)
    st0 = MacroState(0.0, np.ones(800), g)
    dt = cfl_dt(st0, ModelSpec(diffusion=RH))
    assert dt <= 0.4 * g.dx / 2 + 1e-15
    S = g.axis(0).copy()
    st1 = MacroState(0.0, np.ones(800), g, S)
    new = ModelSpec(diffusion=RH, taxis=FluxSpec("psi-saturated", {"chi": 0.5, "C": 1.0}))
    assert max_speed(st1, new) == pytest.approx(1.5)
    idle = ModelSpec(taxis=FluxSpec("linear-taxis", {"chi": 0.0}))
    assert cfl_dt(MacroState(0.0, np.ones(800), g, np.zeros(800)), idle, dt_max=0.25) == 0.25
    assert math.isinf(cfl_dt(MacroState(0.0, np.ones(800), g, np.zeros(800)), idle))


def test_step_rejects_large_dt():
    st0 = bump_state()
    m = ModelSpec(diffusion=LIN)
    with pytest.raises(CFLViolation):
        step(st0, m, 10 * cfl_dt(st0, m))


def test_chi_zero_matches_linear_diffusion():
    g = SpatialGrid.line(-4, 4, 128)
    c0 = gaussian(g.axis(0), 0.5)
    sig = SignalSpec(1.0, 1.0, 1.0)
    ks = ModelSpec(diffusion=LIN, taxis=FluxSpec("linear-taxis", {"chi": 0.0}), signal=sig)
    a = solve(MacroState(0.0, c0, g, np.zeros(128)), ks, SolveConfig(0.2)).final.c
    b = solve(MacroState(0.0, c0, g), ModelSpec(diffusion=LIN), SolveConfig(0.2)).final.c
    assert np.max(np.abs(a - b)) <= 1e-12


def test_heat_kernel_oracle():
    g = SpatialGrid.line(-4, 4, 512)
    x = g.axis(0)
    w0, t = 0.1, 0.1
    tr = solve(MacroState(0.0, gaussian(x, w0), g), ModelSpec(diffusion=LIN), SolveConfig(t))
    exact = gaussian(x, math.sqrt(w0 ** 2 + 2 * t))
    assert diag.total_mass(np.abs(tr.final.c - exact), g) <= 0.02


def test_tv_non_increasing_for_linear_diffusion():
    g = SpatialGrid.line(-4, 4, 256)
    x = g.axis(0)
    c0 = ((x > -1) & (x < 1)).astype(float) + 0.5 * ((x > 2) & (x < 2.5))
    tr = solve(MacroState(0.0, c0, g), ModelSpec(diffusion=LIN), SolveConfig(0.5, snapshot_every=0.02))
    tv = [diag.total_variation(s.c) for s in tr.snapshots]
    assert all(b <= a + 1e-10 for a, b in zip(tv, tv[1:]))


def _restrict(c, factor):
    return c.reshape(-1, factor).mean(axis=1)


@pytest.mark.parametrize("spec", [LIN, RH])
def test_grid_refinement(spec):
    finals = {}
    for n in (64, 128, 256):
        g = SpatialGrid.line(-4, 4, n)
        finals[n] = solve(MacroState(0.0, gaussian(g.axis(0), 0.5), g), ModelSpec(diffusion=spec),
                          SolveConfig(0.5)).final.c
    h = 8.0 / 64
    d1 = np.sum(np.abs(finals[64] - _restrict(finals[128], 2))) * h
    d2 = np.sum(np.abs(_restrict(finals[128], 2) - _restrict(finals[256], 4))) * h
    assert d1 / d2 >= 1.5


def test_trajectory_diagnostics():
    st0 = bump_state()
    tr = solve(st0, ModelSpec(diffusion=RH), SolveConfig(0.3, snapshot_every=0.1))
    assert [round(s.t, 12) for s in tr.snapshots] == [0.0, 0.1, 0.2, 0.3]
    assert tr.max_mass_drift <= 1e-12 and tr.min_c >= -1e-10
    row = tr.diagnostics[-1]
    assert set(row) == {"t", "mass", "min_c", "max_c", "front_left", "front_right"}


def test_rh_front_does_not_outrun_cap():
    g = SpatialGrid.line(-4, 4, 512)
    x = g.axis(0)
    c0 = ((x > -1) & (x < 1)).astype(float)
    tr = solve(MacroState(0.0, c0, g), ModelSpec(diffusion=RH), SolveConfig(1.5, front_every=0.015))
    assert diag.front_speed(tr.fronts, (0.5, 1.5)) <= 1.05


def test_degenerate_singular_barrier():
    g = SpatialGrid.line(0, 1, 16)
    st0 = MacroState(0.0, np.full(16, 0.9995), g)
    m = ModelSpec(diffusion=FluxSpec("degenerate-singular", {"c_max": 1.0}))
    with pytest.raises(SingularBarrierError):
        cfl_dt(st0, m)


def test_signal_relaxes_to_steady_state():
    g = SpatialGrid.line(0, 1, 16)
    st0 = MacroState(0.0, np.full(16, 2.0), g, np.zeros(16))
    m = ModelSpec(diffusion=LIN, taxis=FluxSpec("linear-taxis", {"chi": 0.0}),
                  signal=SignalSpec(1.0, 5.0, 5.0))
    S = solve(st0, m, SolveConfig(4.0, dt_max=0.05)).final.S
    assert np.allclose(S, 2.0, atol=1e-8)


def test_logistic_reaction_grows_mass():
    st0 = bump_state(cells=64)
    m = ModelSpec(diffusion=LIN, reaction=ReactionSpec("logistic", 1.0, 10.0))
    tr = solve(st0, m, SolveConfig(0.2))
    assert tr.final.mass > st0.mass * 1.1


def test_negative_initial_density_rejected():
    g = SpatialGrid.line(0, 1, 16)
    with pytest.raises(ValidationError):
        solve(MacroState(0.0, -np.ones(16), g), ModelSpec(diffusion=LIN), SolveConfig(0.1))


def test_taxis_requires_signal():
    g = SpatialGrid.line(0, 1, 16)
    with pytest.raises(ValidationError):
        solve(MacroState(0.0, np.ones(16), g), ModelSpec(taxis=FluxSpec("tanh-taxis")), SolveConfig(0.1))


def test_2d_rh_symmetric_and_conservative():
    g = SpatialGrid((-2, -2), (2, 2), (48, 48))
    X, Y = g.centers()
    c0 = ((X ** 2 + Y ** 2) < 0.5).astype(float)
    tr = solve(MacroState(0.0, c0, g), ModelSpec(diffusion=RH), SolveConfig(0.2))
    c = tr.final.c
    assert tr.max_mass_drift <= 1e-12
    assert np.allclose(c, c.T, atol=1e-12) and np.allclose(c, c[::-1, :], atol=1e-12)
