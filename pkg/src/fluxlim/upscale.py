"""Upscaling experiments: kinetic runs against their macroscopic limits.

Each catalog pairing builds, for a given eps, a kinetic problem started at
local equilibrium and the macroscopic model it should approach. A sweep runs
the pairing over decreasing eps, measures the L1 distance between the kinetic
density and the macroscopic solution at the final time, and fits ``e ~ eps^p``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import diag
from .errors import FluxlimError, ValidationError
from .flux_lib import FluxSpec, psi_example
from .grid import SpatialGrid
from .kinetic import (AccelSpec, KineticRun, ScalingSpec, TurningOperatorSpec,
                      density_moment, local_equilibrium, solve_kinetic)
from .macro_pde import MacroState, ModelSpec, SolveConfig, solve
from .velocity_measure import (VelocityMeasure, VelocitySetSpec, make_discrete,
                               make_lebesgue, moment)


@dataclass
class CoefficientSet:
    """Macroscopic coefficients built from mesoscopic ingredients."""

    D_c: float
    D_tensor: np.ndarray
    diffusion_factor: float | None = None
    drift_factor: float | None = None

    def to_json(self) -> dict:
        out = {"D_c": self.D_c, "D_tensor": np.atleast_2d(self.D_tensor).tolist()}
        if self.diffusion_factor is not None:
            out["diffusion_factor"] = self.diffusion_factor
            out["drift_factor"] = self.drift_factor
        return out


def macro_coefficients(mu: VelocityMeasure, lam: float, a: float | None = None,
                       n: int | None = None) -> CoefficientSet:
    """Limit coefficients.

    * ``D_c = (1/lam) int v^2 dmu`` of the relaxation model;
    * ``D = (1/(lam |V|)) int v (x) v dv`` of the uniform turning operator;
    * with acceleration rate ``a`` in dimension ``n``: the diffusion factor
      ``lam / ((2a + lam)(a + lam)) n / (n + 2)`` and drift factor
      ``a / (a + lam)`` of the drift-diffusion limit in ``d/dt`` form.
    """
    if lam <= 0:
        raise ValidationError("lam must be positive")
    d = mu.dimension
    if d == 1:
        D_c = moment(mu, 2) / lam
        D_t = np.array([[1.0 / (3.0 * lam)]])         # (1/(2 lam)) int_{-1}^{1} v^2 dv
    else:
        M = moment(mu, 2, tensor=True)
        D_c = float(M[0, 0]) / lam
        leb = make_lebesgue(VelocitySetSpec(2, mu.shape, 32))
        D_t = moment(leb, 2, tensor=True) / lam       # normalized Lebesgue = dv / |V|
    out = CoefficientSet(float(D_c), D_t)
    if a is not None:
        if a <= 0:
            raise ValidationError("a must be positive")
        n = d if n is None else n
        out.diffusion_factor = lam / ((2.0 * a + lam) * (a + lam)) * n / (n + 2.0)
        out.drift_factor = a / (a + lam)
    return out


# ---------------------------------------------------------------------- setup

@dataclass
class PairingSetup:
    """Kinetic and macroscopic problems of one sweep leg."""

    grid: SpatialGrid
    c0: np.ndarray
    S: np.ndarray | None
    vspace: VelocityMeasure
    mu: VelocityMeasure | None
    turning: TurningOperatorSpec
    scaling: ScalingSpec
    accel: AccelSpec | None
    macro: ModelSpec
    coefficients: dict
    transport: str = "spectral"


def _gaussian(x, center=0.0, width=0.5, mass=1.0):
    return mass * np.exp(-0.5 * ((x - center) / width) ** 2) / (width * math.sqrt(2.0 * math.pi))


def _signal(x, L):
    # smooth periodic signal with unit maximal slope
    return (L / math.pi) * np.sin(math.pi * x / L)


def _grid(cells, L=4.0):
    return SpatialGrid.line(-L, L, cells, "periodic")


def _relax_mu(eps, cells, nv, lam=1.0, **_):
    g = _grid(cells)
    mu = make_discrete([(-1.0, 0.5), (1.0, 0.5)])
    co = macro_coefficients(mu, lam)
    return PairingSetup(
        g, _gaussian(g.centers()), None, mu, mu,
        TurningOperatorSpec("relax-to-mu", lam, mu=mu, integrator="exact"),
        ScalingSpec("parabolic", eps), None,
        ModelSpec(diffusion=FluxSpec("linear-diffusion", {"D_c": co.D_c})),
        co.to_json())


def _past_motion(eps, cells, nv, lam=1.0, C=2.0, **_):
    g = _grid(cells)
    x = g.centers()
    vs = make_lebesgue(nv)
    co = macro_coefficients(vs, lam)
    psi = psi_example(C)
    return PairingSetup(
        g, _gaussian(x), _signal(x, 4.0), vs, None,
        TurningOperatorSpec("kernel-past-motion", lam, psi=psi, integrator="exact"),
        ScalingSpec("parabolic", eps, kernel_rescale=True), None,
        ModelSpec(diffusion=FluxSpec("linear-diffusion", {"D_c": float(co.D_tensor[0, 0])}),
                  taxis=FluxSpec("phi-from-psi", {"chi": 1.0, "C": C, "lam": lam})),
        co.to_json())


def _anterior_posterior(eps, cells, nv, D_c=0.2, C=0.2, chi=0.1, **_):
    g = _grid(cells)
    x = g.centers()
    vs = make_lebesgue(nv)
    return PairingSetup(
        g, _gaussian(x) + 0.05, _signal(x, 4.0), vs, None,
        TurningOperatorSpec("kernel-anterior-posterior", 0.0, D_c=D_c, C=C, chi=chi,
                            integrator="exact"),
        ScalingSpec("hyperbolic", eps, kernel_rescale=True), None,
        ModelSpec(diffusion=FluxSpec("relativistic", {"D_c": D_c, "C": C}),
                  taxis=FluxSpec("psi-saturated", {"chi": chi, "C": 1.0})),
        {"D_c": D_c, "C": C, "chi": chi})


def _accel(eps, cells, nv, a=1.0, lam=1.0, hyperbolic=False, **_):
    g = _grid(cells)
    x = g.centers()
    vs = make_lebesgue(nv)
    co = macro_coefficients(vs, lam, a=a, n=1)
    if hyperbolic:
        scaling = ScalingSpec("hyperbolic", eps, kernel_rescale=True)
        macro = ModelSpec(taxis=FluxSpec("vstar-saturated", {"chi": co.drift_factor, "eps": 1.0}))
    else:
        scaling = ScalingSpec("parabolic", eps)
        macro = ModelSpec(diffusion=FluxSpec("linear-diffusion", {"D_c": co.diffusion_factor}),
                          taxis=FluxSpec("vstar-saturated", {"chi": co.drift_factor, "eps": 0.0}))
    return PairingSetup(
        g, _gaussian(x), _signal(x, 4.0), vs, None,
        TurningOperatorSpec("relax-uniform", lam, integrator="exact"),
        scaling, AccelSpec(a), macro, co.to_json())


PAIRINGS: dict[str, Callable] = {
    "relax-mu": _relax_mu,
    "past-motion": _past_motion,
    "anterior-posterior": _anterior_posterior,
    "accel-parabolic": _accel,
    "accel-hyperbolic": lambda eps, cells, nv, **kw: _accel(eps, cells, nv, hyperbolic=True, **kw),
}

PAIRING_LIMITS = {
    "relax-mu": "linear diffusion, D_c = (1/lam) int v^2 dmu",
    "past-motion": "diffusion-taxis with D = (1/(lam|V|)) int v v dv and Phi from Psi",
    "anterior-posterior": "fully flux-limited diffusion-taxis",
    "accel-parabolic": "linear diffusion-taxis with the acceleration coefficients",
    "accel-hyperbolic": "pure drift with velocity a/(a+lam) v*",
}


@dataclass
class SweepPlan:
    """eps-sweep of one catalog pairing."""

    pairing: str
    eps_list: tuple = (0.4, 0.2, 0.1, 0.05)
    final_time: float = 0.5
    cells: int = 512
    nv: int = 32
    norm: str = "L1"
    params: dict = field(default_factory=dict)
    split_rate: float = 0.1

    def __post_init__(self):
        if self.pairing not in PAIRINGS:
            raise ValidationError(f"unknown pairing {self.pairing!r}; known: {sorted(PAIRINGS)}")
        eps = tuple(float(e) for e in self.eps_list)
        if len(eps) < 3:
            raise ValidationError("a sweep needs at least 3 eps values")
        if any(not 0 < e <= 1 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValidationError("eps_list must be strictly decreasing within (0, 1]")
        if self.norm != "L1":
            raise ValidationError("only the L1 norm is supported")
        self.eps_list = eps


@dataclass
class SweepReport:
    pairing: str
    eps: list
    errors: list
    order: float | None
    monotone: bool
    coefficients: dict
    failures: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def build_leg(plan: SweepPlan, eps: float, zero_ic: bool = False) -> PairingSetup:
    setup = PAIRINGS[plan.pairing](eps, plan.cells, plan.nv, **plan.params)
    if zero_ic:
        setup.c0 = np.zeros_like(setup.c0)
    return setup


def run_macro(setup: PairingSetup, T: float):
    st = MacroState(0.0, setup.c0, setup.grid, setup.S)
    return solve(st, setup.macro, SolveConfig(T, dt_max=1e-2))


def run_kinetic(setup: PairingSetup, T: float, split_rate: float = 0.1):
    k0 = local_equilibrium(setup.c0, setup.grid, setup.vspace, setup.mu, S=setup.S)
    if np.max(np.abs(density_moment(k0, 0) - setup.c0)) > 1e-12 * max(1.0, np.max(setup.c0)):
        raise FluxlimError("local equilibrium does not reproduce the macroscopic data")
    run = KineticRun(T, transport=setup.transport, split_rate=split_rate)
    return solve_kinetic(k0, setup.turning, setup.scaling, run, setup.accel)


def l1(a, b, grid) -> float:
    return float(np.sum(np.abs(a - b)) * grid.cell_volume)


def fit_order(eps, errors) -> float | None:
    e = np.asarray(errors, float)
    x = np.asarray(eps, float)
    ok = e > 0
    if np.count_nonzero(ok) < 2:
        return None
    return float(np.polyfit(np.log(x[ok]), np.log(e[ok]), 1)[0])


def run_sweep(plan: SweepPlan, zero_ic: bool = False) -> SweepReport:
    """Run every leg of ``plan`` and fit the convergence order."""
    eps_ok, errs, failures, extra = [], [], {}, {"velocity_gap": []}
    macro_cache = None
    coeff = {}
    drift, cmin = 0.0, math.inf
    for eps in plan.eps_list:
        try:
            setup = build_leg(plan, eps, zero_ic)
            coeff = setup.coefficients
            if macro_cache is None:
                mtr = run_macro(setup, plan.final_time)
                macro_cache = mtr.final
                drift, cmin = mtr.max_mass_drift, mtr.min_c
            kin = run_kinetic(setup, plan.final_time, plan.split_rate)
        except FluxlimError as exc:
            failures[str(eps)] = str(exc)
            continue
        drift, cmin = max(drift, kin.max_mass_drift), min(cmin, kin.min_c)
        cbar = density_moment(kin.final, 0)
        errs.append(l1(cbar, macro_cache.c, setup.grid))
        eps_ok.append(eps)
        if plan.pairing == "accel-hyperbolic":
            V = density_moment(kin.final, 1, setup.scaling)
            gS = setup.grid.gradient(setup.S)[0]
            target = setup.macro.taxis.taxis_velocity(gS)
            mask = cbar > 1e-3 * np.max(cbar)
            extra["velocity_gap"].append(float(np.max(np.abs(V - target)[mask])))
    if len(eps_ok) < 3:
        raise FluxlimError(f"only {len(eps_ok)} sweep legs succeeded: {failures}")
    if not extra["velocity_gap"]:
        extra.pop("velocity_gap")
    extra["max_mass_drift"] = drift
    extra["min_c"] = cmin
    monotone = all(b < a for a, b in zip(errs, errs[1:])) or all(e == 0 for e in errs)
    return SweepReport(plan.pairing, eps_ok, errs, fit_order(eps_ok, errs), bool(monotone),
                       coeff, failures, extra)


# ------------------------------------------------------ first-order correction

def saturated_drift_velocity(grad_S, a: float, lam: float, eps: float, F: float = 1.0):
    """Taxis velocity ``a/(a+lam) F g / (1 + eps |g|)`` of the corrected limit."""
    g = np.asarray(grad_S, dtype=float)
    return a / (a + lam) * F * g / (1.0 + eps * np.abs(g))


def linear_drift_velocity(grad_S, a: float, lam: float, F: float = 1.0):
    return a / (a + lam) * F * np.asarray(grad_S, dtype=float)


@dataclass
class CorrectionReport:
    pairing: str
    eps: float
    zero_order_error: float
    corrected_error: float
    improved: bool
    max_mass_drift: float = 0.0
    min_c: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)


def first_order_correction_check(pairing: str = "relax-mu", eps: float = 0.1,
                                 cells: int = 512, nv: int = 32, final_time: float = 0.5,
                                 split_rate: float = 0.1) -> CorrectionReport:
    """Compare zero-order and corrected macro models against one kinetic run.

    ``relax-mu`` is corrected by the exponential-expansion equation with the
    same measure, ``accel-parabolic`` by the saturated taxis velocity with
    the run's eps.
    """
    if pairing not in ("relax-mu", "accel-parabolic"):
        raise ValidationError("the correction check supports relax-mu and accel-parabolic")
    plan = SweepPlan(pairing, (eps, eps / 2, eps / 4), final_time, cells, nv)
    setup = build_leg(plan, eps)
    kin = run_kinetic(setup, final_time, split_rate)
    cbar = density_moment(kin.final, 0)
    ztr = run_macro(setup, final_time)
    zero = ztr.final
    lam = setup.turning.lam
    if pairing == "relax-mu":
        corrected = ModelSpec(diffusion=FluxSpec("fsg", {"eps": eps, "lam": lam},
                                                 measure=setup.mu))
    else:
        co = setup.coefficients
        corrected = ModelSpec(diffusion=setup.macro.diffusion,
                              taxis=FluxSpec("vstar-saturated", {"chi": co["drift_factor"], "eps": eps}))
    setup_c = PairingSetup(**{**setup.__dict__, "macro": corrected})
    ctr = run_macro(setup_c, final_time)
    corr = ctr.final
    e0 = l1(cbar, zero.c, setup.grid)
    e1 = l1(cbar, corr.c, setup.grid)
    drift = max(kin.max_mass_drift, ztr.max_mass_drift, ctr.max_mass_drift)
    cmin = min(kin.min_c, ztr.min_c, ctr.min_c)
    return CorrectionReport(pairing, eps, e0, e1, bool(e1 <= e0), drift, cmin)


def reference_mass(setup: PairingSetup) -> float:
    return diag.total_mass(setup.c0, setup.grid)
