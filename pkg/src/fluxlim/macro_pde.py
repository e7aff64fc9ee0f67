"""Conservative finite-volume solver for macroscopic diffusion-taxis equations.

The cell equation is written as ``dc/dt + div J = f_c`` with

* Fickian families (linear, porous-medium, degenerate-singular):
  ``J = -k(c) grad c`` at faces, with the arithmetic face density;
* saturating families (relativistic, psi-saturated, fsg): ``J = c V`` with a
  bounded velocity ``V`` built from the harmonic face density;
* taxis: ``J = c V_taxis`` with ``V_taxis`` from the face signal gradient.

Advective parts are upwinded with a van Leer limited reconstruction and the
update is forward Euler. The signal obeys
``dS/dt = D_v lap S - alpha S + beta c`` and is advanced by a semi-implicit step
(implicit diffusion and decay, explicit source) with a sparse LU solve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from . import diag
from .errors import CFLViolation, NegativeDensityError, SingularBarrierError, ValidationError
from .flux_lib import FluxSpec, degenerate_singular_coeff, fsg_velocity
from .grid import SpatialGrid
from .velocity_measure import moment

NEG_GUARD = -1e-10


@dataclass
class SignalSpec:
    """Signal equation ``dS/dt = D_v lap S - alpha S + beta c``.

    ``prescribed=True`` freezes S at its initial field.
    """

    D_v: float = 1.0
    alpha: float = 0.0
    beta: float = 0.0
    prescribed: bool = False

    def __post_init__(self):
        if self.D_v < 0 or self.alpha < 0:
            raise ValidationError("D_v and alpha must be nonnegative")


@dataclass
class ReactionSpec:
    """Cell kinetics ``f_c``: ``none`` or ``logistic`` ``r c (1 - c/K)``."""

    kind: str = "none"
    rate: float = 0.0
    capacity: float = 1.0
    func: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("none", "logistic", "custom"):
            raise ValidationError(f"unknown reaction kind {self.kind!r}")
        if self.kind == "custom" and self.func is None:
            raise ValidationError("custom reaction needs func(c, S)")
        if self.kind == "logistic" and self.capacity <= 0:
            raise ValidationError("logistic capacity must be positive")

    @property
    def active(self) -> bool:
        return self.kind != "none"

    def __call__(self, c, S):
        if self.kind == "logistic":
            return self.rate * c * (1.0 - c / self.capacity)
        if self.kind == "custom":
            return self.func(c, S)
        return np.zeros_like(c)


@dataclass
class ModelSpec:
    """Macroscopic model: diffusion and/or taxis, optional signal and reaction."""

    diffusion: FluxSpec | None = None
    taxis: FluxSpec | None = None
    signal: SignalSpec | None = None
    reaction: ReactionSpec = field(default_factory=ReactionSpec)

    def __post_init__(self):
        if self.diffusion is None and self.taxis is None:
            raise ValidationError("a model needs a diffusion or a taxis flux")
        if self.diffusion is not None and not self.diffusion.can_diffuse:
            raise ValidationError(f"{self.diffusion.family!r} is not a diffusion family")
        if self.taxis is not None and not self.taxis.can_taxis:
            raise ValidationError(f"{self.taxis.family!r} is not a taxis family")

    @property
    def saturating_diffusion(self) -> bool:
        return self.diffusion is not None and self.diffusion.family in (
            "relativistic", "psi-saturated", "fsg")


@dataclass
class MacroState:
    """Density (and optional signal) on a grid at time ``t``."""

    t: float
    c: np.ndarray
    grid: SpatialGrid
    S: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.c.shape != self.grid.shape:
            raise ValidationError(f"density shape {self.c.shape} does not match grid {self.grid.shape}")
        if self.S is not None:
            self.S = np.asarray(self.S, dtype=float)
            if self.S.shape != self.grid.shape:
                raise ValidationError("signal shape does not match the grid")
        if not np.all(np.isfinite(self.c)):
            raise ValidationError("density must be finite")

    @property
    def mass(self) -> float:
        return diag.total_mass(self.c, self.grid)


# ---------------------------------------------------------------- face helpers

def _pad(f, ax, grid, width=2):
    pw = [(0, 0)] * f.ndim
    pw[ax] = (width, width)
    return np.pad(f, pw, mode="wrap" if grid.periodic else "symmetric")


def _sl(a, ax, start, stop):
    idx = [slice(None)] * a.ndim
    idx[ax] = slice(start, stop)
    return a[tuple(idx)]


def _van_leer(dl, dr):
    prod = dl * dr
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(prod > 0, 2.0 * prod / (dl + dr), 0.0)
    return s


@dataclass
class _Faces:
    """Face data along one axis: ``n + 1`` faces for ``n`` cells."""

    cl: np.ndarray      # left neighbour cell value
    cr: np.ndarray      # right neighbour cell value
    rl: np.ndarray      # reconstructed left state
    rr: np.ndarray      # reconstructed right state
    grad: np.ndarray    # normal gradient


def _faces(f, ax, grid, h, reconstruct=True):
    P = _pad(f, ax, grid)
    n = f.shape[ax]
    cl = _sl(P, ax, 1, n + 2)
    cr = _sl(P, ax, 2, n + 3)
    grad = (cr - cl) / h
    if not reconstruct:
        return _Faces(cl, cr, cl, cr, grad)
    d = np.diff(P, axis=ax)                      # length n + 3
    s = _van_leer(_sl(d, ax, 0, n + 2), _sl(d, ax, 1, n + 3))   # slopes of P[1..n+2]
    rl = cl + 0.5 * _sl(s, ax, 0, n + 1)
    rr = cr - 0.5 * _sl(s, ax, 1, n + 2)
    return _Faces(cl, cr, rl, rr, grad)


def _tangential(f, ax, grid):
    """Squared tangential gradient averaged onto the faces normal to ``ax``."""
    if grid.dimension == 1:
        return 0.0
    other = 1 - ax
    g = grid.gradient(f)[other]
    P = _pad(g, ax, grid)
    n = f.shape[ax]
    gt = 0.5 * (_sl(P, ax, 1, n + 2) + _sl(P, ax, 2, n + 3))
    return gt * gt


def _harmonic(a, b):
    s = a + b
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where((a > 0) & (b > 0), 2.0 * a * b / np.where(s > 0, s, 1.0), 0.0)


def _upwind(V, fc: _Faces):
    return V * np.where(V > 0, fc.rl, fc.rr)


def _diffusion_velocity(spec: FluxSpec, fc: _Faces, tang2):
    """Bounded face velocity of a saturating diffusion family."""
    p = spec.params
    ch = _harmonic(np.maximum(fc.cl, 0.0), np.maximum(fc.cr, 0.0))
    if spec.family == "fsg":
        if np.ndim(tang2) or tang2:
            raise ValidationError("the fsg family is one-dimensional")
        return fsg_velocity(ch, fc.grad, spec.measure, p["eps"], p["lam"])
    D, C = p["D_c"], p["C"]
    g2 = fc.grad * fc.grad + tang2
    den = np.sqrt(ch * ch + (D / C) ** 2 * g2)
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, -D * fc.grad / safe, 0.0)


def _fickian_flux(spec: FluxSpec, fc: _Faces):
    p = spec.params
    fam = spec.family
    if fam == "linear-diffusion":
        return -p["D_c"] * fc.grad
    ca = np.maximum(0.5 * (fc.cl + fc.cr), 0.0)
    if fam == "porous-medium":
        return -p["D_c"] * ca ** p["m"] * fc.grad
    if fam == "degenerate-singular":
        k = degenerate_singular_coeff(ca, p["D_c"], p["a"], p["b"], p["c_max"])
        return -k * fc.grad
    raise ValidationError(f"{fam!r} is not a Fickian family")


def face_fluxes(state: MacroState, model: ModelSpec):
    """Fluxes through the faces normal to each axis (``n + 1`` per axis).

    No-flux walls carry zero flux. Also returns the largest face speed seen
    in the advective part.
    """
    grid = state.grid
    c = state.c
    out, vmax = [], 0.0
    for ax, h in enumerate(grid.spacing):
        fc = _faces(c, ax, grid, h)
        J = np.zeros_like(fc.grad)
        V = 0.0
        if model.diffusion is not None:
            if model.saturating_diffusion:
                V = V + _diffusion_velocity(model.diffusion, fc, _tangential(c, ax, grid))
            else:
                J = J + _fickian_flux(model.diffusion, fc)
        if model.taxis is not None:
            if state.S is None:
                raise ValidationError("taxis needs a signal field S")
            fs = _faces(state.S, ax, grid, h, reconstruct=False)
            gnorm = None
            if grid.dimension == 2:
                gnorm = np.sqrt(fs.grad ** 2 + _tangential(state.S, ax, grid))
            V = V + model.taxis.taxis_velocity(fs.grad, gnorm)
        if np.ndim(V):
            J = J + _upwind(V, fc)
            vmax = max(vmax, float(np.max(np.abs(V))))
        if not grid.periodic:
            J[tuple(slice(None) if i != ax else 0 for i in range(J.ndim))] = 0.0
            J[tuple(slice(None) if i != ax else -1 for i in range(J.ndim))] = 0.0
        out.append(J)
    return out, vmax


def divergence(fluxes, grid: SpatialGrid):
    div = 0.0
    for ax, (J, h) in enumerate(zip(fluxes, grid.spacing)):
        div = div + np.diff(J, axis=ax) / h
    return div


# ------------------------------------------------------------------ time step

def effective_diffusivity(state: MacroState, model: ModelSpec) -> float:
    spec = model.diffusion
    if spec is None:
        return 0.0
    p = spec.params
    cmax = float(np.max(state.c)) if state.c.size else 0.0
    fam = spec.family
    if fam == "linear-diffusion" or fam in ("relativistic", "psi-saturated"):
        return p["D_c"]
    if fam == "porous-medium":
        return p["D_c"] * max(cmax, 0.0) ** p["m"]
    if fam == "degenerate-singular":
        if cmax >= 0.999 * p["c_max"]:
            raise SingularBarrierError(
                f"max density {cmax:.6g} reached 0.999 c_max = {0.999 * p['c_max']:.6g}")
        return float(degenerate_singular_coeff(cmax, p["D_c"], p["a"], p["b"], p["c_max"]))
    if fam == "fsg":
        return moment(spec.measure, 2) / p["lam"]
    raise ValidationError(f"unknown diffusion family {fam!r}")


def max_speed(state: MacroState, model: ModelSpec) -> float:
    """Speed bound for the hyperbolic CFL branch.

    Saturating families contribute their caps (C, chi C, 1/eps, ...);
    unbounded taxis contributes the current maximum face speed.
    """
    v = 0.0
    if model.saturating_diffusion:
        v += model.diffusion.diffusion_cap()
    if model.taxis is not None:
        cap = model.taxis.taxis_cap()
        if cap is None:
            if state.S is None:
                raise ValidationError("taxis needs a signal field S")
            vel = 0.0
            for ax, h in enumerate(state.grid.spacing):
                fs = _faces(state.S, ax, state.grid, h, reconstruct=False)
                gnorm = None
                if state.grid.dimension == 2:
                    gnorm = np.sqrt(fs.grad ** 2 + _tangential(state.S, ax, state.grid))
                vel = max(vel, float(np.max(np.abs(model.taxis.taxis_velocity(fs.grad, gnorm)))))
            cap = vel
        v += cap
    return v


def cfl_dt(state: MacroState, model: ModelSpec, dt_max: float = math.inf) -> float:
    """``0.4 min(dx^2 / (2 d D_eff), dx / (2 d v_max))``, capped at ``dt_max``.

    In 1D this is the stated bound ``dx / (2 v_max)``; in 2D the hyperbolic
    branch is divided by the dimension as well.
    """
    grid = state.grid
    d = grid.dimension
    dx = grid.dx
    D = effective_diffusivity(state, model)
    v = max_speed(state, model)
    par = dx * dx / (2.0 * d * D) if D > 0 else math.inf
    hyp = dx / (2.0 * d * v) if v > 0 else math.inf
    return min(dt_max, 0.4 * min(par, hyp))


class SignalSolver:
    """Semi-implicit signal update with cached sparse LU factors."""

    def __init__(self, grid: SpatialGrid, spec: SignalSpec, cache_size: int = 8):
        self.grid = grid
        self.spec = spec
        self._lap = self._laplacian(grid)
        self._cache: dict = {}
        self._cache_size = cache_size

    @staticmethod
    def _laplacian(grid):
        mats = []
        for n, h in zip(grid.cells, grid.spacing):
            main = -2.0 * np.ones(n)
            off = np.ones(n - 1)
            L = sparse.diags([off, main, off], [-1, 0, 1], format="lil")
            if grid.periodic:
                L[0, n - 1] = 1.0
                L[n - 1, 0] = 1.0
            else:
                L[0, 0] = -1.0
                L[n - 1, n - 1] = -1.0
            mats.append(L.tocsr() / (h * h))
        if len(mats) == 1:
            return mats[0]
        I0 = sparse.identity(grid.cells[0], format="csr")
        I1 = sparse.identity(grid.cells[1], format="csr")
        return (sparse.kron(mats[0], I1) + sparse.kron(I0, mats[1])).tocsr()

    def _lu(self, dt):
        lu = self._cache.get(dt)
        if lu is None:
            n = self._lap.shape[0]
            A = (1.0 + dt * self.spec.alpha) * sparse.identity(n, format="csc") \
                - dt * self.spec.D_v * self._lap
            lu = splinalg.splu(A.tocsc())
            if len(self._cache) >= self._cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[dt] = lu
        return lu

    def step(self, S, c, dt):
        if self.spec.prescribed:
            return S
        rhs = (S + dt * self.spec.beta * c).ravel()
        return self._lu(dt).solve(rhs).reshape(S.shape)


def _advance(state: MacroState, model: ModelSpec, dt: float, signal_solver=None) -> MacroState:
    fluxes, _ = face_fluxes(state, model)
    c_new = state.c - dt * divergence(fluxes, state.grid)
    if model.reaction.active:
        c_new = c_new + dt * model.reaction(state.c, state.S)
    if not np.all(np.isfinite(c_new)):
        raise NegativeDensityError("density became non-finite")
    cmin = float(np.min(c_new))
    if cmin < NEG_GUARD:
        raise NegativeDensityError(f"density dropped to {cmin:.3e}")
    S_new = state.S
    if model.signal is not None and state.S is not None:
        if signal_solver is None:
            signal_solver = SignalSolver(state.grid, model.signal)
        S_new = signal_solver.step(state.S, state.c, dt)
    return MacroState(state.t + dt, c_new, state.grid, S_new)


def step(state: MacroState, model: ModelSpec, dt: float, signal_solver=None) -> MacroState:
    """One forward-Euler finite-volume step; checks the CFL bound first."""
    limit = cfl_dt(state, model)
    if dt <= 0 or dt > limit * (1.0 + 1e-12):
        raise CFLViolation(f"dt = {dt:.3e} exceeds the CFL bound {limit:.3e}")
    return _advance(state, model, dt, signal_solver)


# ---------------------------------------------------------------------- solve

@dataclass
class SolveConfig:
    """Run controls for :func:`solve`.

    ``snapshot_every`` is a time interval; ``dt_max`` caps the step and is
    used when no term limits it.
    """

    final_time: float
    snapshot_every: float | None = None
    dt_max: float = 1e-2
    theta: float = 1e-3
    front_every: float | None = None

    def __post_init__(self):
        if not self.final_time > 0:
            raise ValidationError("final_time must be positive")
        if self.dt_max <= 0:
            raise ValidationError("dt_max must be positive")


@dataclass
class Trajectory:
    snapshots: list
    diagnostics: list
    fronts: diag.FrontSeries
    steps: int = 0
    max_mass_drift: float = 0.0
    min_c: float = math.inf

    @property
    def final(self) -> MacroState:
        return self.snapshots[-1]


def _quantize(dt):
    # few distinct step sizes keep the signal LU cache small
    return 2.0 ** (math.floor(8.0 * math.log2(dt)) / 8.0)


def _diag_row(state, fronts_ref, theta):
    pos = diag.front_position(state.c, state.grid, theta, fronts_ref)
    row = {"t": state.t, "mass": state.mass, "min_c": float(np.min(state.c)),
           "max_c": float(np.max(state.c)),
           "front_left": None if pos is None else pos[0],
           "front_right": None if pos is None else pos[1]}
    return row


def solve(initial: MacroState, model: ModelSpec, config: SolveConfig,
          callback: Callable | None = None) -> Trajectory:
    """Advance ``initial`` to ``config.final_time``.

    Snapshots are kept at multiples of ``snapshot_every`` (plus the first
    and last state). Fronts are sampled every ``front_every`` (default: a
    hundredth of the run). Mass drift per step and the smallest density are
    tracked for the conservation checks.
    """
    if np.any(initial.c < NEG_GUARD):
        raise ValidationError("initial density must be nonnegative")
    if model.taxis is not None and initial.S is None:
        raise ValidationError("taxis needs an initial signal field S")
    T = config.final_time
    snap_dt = config.snapshot_every or T
    front_dt = config.front_every or T / 100.0
    ref = float(np.max(initial.c))
    solver = SignalSolver(initial.grid, model.signal) if model.signal is not None else None
    state = initial
    snaps = [state]
    rows = [_diag_row(state, ref, config.theta)]
    fronts = diag.FrontSeries()
    if ref > 0:
        fronts.append(state.t, state.c, state.grid, config.theta, ref)
    next_snap, next_front = snap_dt, front_dt
    steps, drift, cmin = 0, 0.0, float(np.min(state.c))
    conserve = not model.reaction.active
    while state.t < T - 1e-12 * T:
        dt = _quantize(cfl_dt(state, model, config.dt_max))
        target = min(next_snap, next_front, T)
        if state.t + dt > target - 1e-12 * T:
            dt = target - state.t
        m0 = state.mass
        state = _advance(state, model, dt, solver)
        steps += 1
        if conserve and m0 > 0:
            drift = max(drift, abs(state.mass - m0) / m0)
        cmin = min(cmin, float(np.min(state.c)))
        if state.t >= next_front - 1e-12 * T or state.t >= T - 1e-12 * T:
            if ref > 0:
                fronts.append(state.t, state.c, state.grid, config.theta, ref)
            rows.append(_diag_row(state, ref, config.theta))
            next_front += front_dt
        if state.t >= next_snap - 1e-12 * T and state.t < T - 1e-12 * T:
            snaps.append(state)
            next_snap += snap_dt
        if callback is not None:
            callback(state)
    if snaps[-1] is not state:
        snaps.append(state)
    return Trajectory(snaps, rows, fronts, steps, drift, cmin)


def with_time(state: MacroState, t: float) -> MacroState:
    return replace(state, t=t)
