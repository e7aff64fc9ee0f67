import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fluxlim.errors import ValidationError
from fluxlim.kinetic import density_moment, local_equilibrium
from fluxlim.upscale import (PAIRINGS, SweepPlan, build_leg, first_order_correction_check,
                             fit_order, linear_drift_velocity, macro_coefficients, run_sweep,
                             saturated_drift_velocity)
from fluxlim.velocity_measure import VelocitySetSpec, make_discrete, make_lebesgue

TWO = make_discrete([(-1.0, 0.5), (1.0, 0.5)])


def test_coefficient_examples():
    assert abs(macro_coefficients(TWO, 2.0).D_c - 0.5) <= 1e-12
    leb = make_lebesgue(32)
    co = macro_coefficients(leb, 1.0)
    assert abs(co.D_c - 1.0 / 3.0) <= 1e-12
    assert abs(co.D_tensor[0, 0] - 1.0 / 3.0) <= 1e-12
    acc = macro_coefficients(leb, 1.0, a=1.0, n=1)
    assert abs(acc.diffusion_factor - 1.0 / 18.0) <= 1e-12
    assert abs(acc.drift_factor - 0.5) <= 1e-12
    with pytest.raises(ValidationError):
        macro_coefficients(TWO, 0.0)


def test_coefficients_2d_isotropic():
    co = macro_coefficients(make_lebesgue(VelocitySetSpec(2, "ball", 16)), 1.0)
    D = co.D_tensor
    assert abs(D[0, 1]) <= 1e-12 and abs(D[0, 0] - 0.25) <= 1e-12


@pytest.mark.parametrize("pairing", sorted(PAIRINGS))
def test_local_equilibrium_matches_macro_data(pairing):
    setup = build_leg(SweepPlan(pairing, cells=64, nv=8), 0.2)
    k0 = local_equilibrium(setup.c0, setup.grid, setup.vspace, setup.mu, S=setup.S)
    assert np.max(np.abs(density_moment(k0, 0) - setup.c0)) <= 1e-12


def test_zero_initial_data_gives_zero_errors():
    rep = run_sweep(SweepPlan("relax-mu", (0.4, 0.2, 0.1), 0.1, cells=64), zero_ic=True)
    assert rep.errors == [0.0, 0.0, 0.0]
    assert rep.order is None and rep.monotone


def test_small_sweep_is_monotone():
    rep = run_sweep(SweepPlan("relax-mu", (0.4, 0.2, 0.1), 0.25, cells=128))
    assert rep.monotone and rep.order > 1.5
    assert rep.extra["max_mass_drift"] <= 1e-12
    assert rep.coefficients["D_c"] == 1.0


def test_sweep_plan_rejects():
    with pytest.raises(ValidationError):
        SweepPlan("nonsense")
    with pytest.raises(ValidationError):
        SweepPlan("relax-mu", (0.1, 0.2, 0.4))
    with pytest.raises(ValidationError):
        SweepPlan("relax-mu", (0.4, 0.2))
    with pytest.raises(ValidationError):
        SweepPlan("relax-mu", norm="L2")


def test_fit_order_examples():
    eps = [0.4, 0.2, 0.1]
    assert abs(fit_order(eps, [e ** 2 for e in eps]) - 2.0) <= 1e-12
    assert fit_order(eps, [0.0, 0.0, 0.0]) is None


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(0.1, 5), st.floats(0.1, 5))
def test_saturated_drift_at_zero_eps_is_linear(g, a, lam):
    assert saturated_drift_velocity(g, a, lam, 0.0) == linear_drift_velocity(g, a, lam)


def test_saturated_drift_is_bounded():
    g = np.array([1e8, -1e8])
    assert np.allclose(saturated_drift_velocity(g, 1.0, 1.0, 0.1), [5.0, -5.0])


def test_correction_check_rejects_other_pairings():
    with pytest.raises(ValidationError):
        first_order_correction_check("past-motion")
