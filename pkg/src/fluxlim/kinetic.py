"""Kinetic transport solver over space and velocity.

The rescaled equation is

    eps^k dc/dt + eps v . grad_x c - (a) d/dv((v - v*) c) = L(c),

with ``k = 2`` (parabolic), ``k = 1`` (hyperbolic) or no scaling. The state
``c`` is a density per unit velocity stored at the nodes of a velocity
quadrature; node ``j`` carries the flat volume ``omega_j = |V| w_j`` so that
``cbar = sum_j c_j omega_j``.

A time step is split into x-transport, v-drift (acceleration) and turning.
Turning can be integrated by forward Euler or exactly (relaxation kinds in
closed form, kernel kinds through a per-cell matrix exponential).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import CFLViolation, NegativeDensityError, ValidationError
from .flux_lib import ResponseFunction, spectral_norm
from .grid import SpatialGrid
from .macro_pde import SignalSolver, SignalSpec
from .velocity_measure import VelocityMeasure

TURNING_KINDS = ("relax-to-mu", "kernel-past-motion", "kernel-anterior-posterior", "relax-uniform")
SCALINGS = {"none": 0, "hyperbolic": 1, "parabolic": 2}
NEG_GUARD = -1e-10


@dataclass(frozen=True)
class ScalingSpec:
    """Time/space scaling of the kinetic equation.

    ``kernel_rescale`` switches the turning and drift ingredients from
    microscopic gradients (``eps grad``) to macroscopic ones (``grad``): Psi is
    replaced by ``eps Psi(./eps)``, alpha and v* read the unscaled gradient.
    """

    kind: str = "none"
    eps: float = 1.0
    kernel_rescale: bool = False

    def __post_init__(self):
        if self.kind not in SCALINGS:
            raise ValidationError(f"unknown scaling kind {self.kind!r}")
        if not 0.0 < self.eps <= 1.0:
            raise ValidationError(f"eps must lie in (0, 1], got {self.eps}")

    @property
    def kappa(self) -> int:
        return SCALINGS[self.kind]

    @property
    def e(self) -> float:
        """Effective eps (1 without scaling)."""
        return 1.0 if self.kind == "none" else self.eps

    @property
    def time_factor(self) -> float:
        return self.e ** self.kappa

    @property
    def speed_factor(self) -> float:
        """x-velocity is ``speed_factor * v``."""
        return self.e / self.time_factor

    @property
    def grad_factor(self) -> float:
        return 1.0 if self.kernel_rescale else self.e


@dataclass
class TurningOperatorSpec:
    """Turning operator.

    Parameters
    ----------
    kind : str
        One of :data:`TURNING_KINDS`.
    lam : float
        Relaxation rate (also the rate of the uniform part of kernel kinds).
    mu : VelocityMeasure, optional
        Target of ``relax-to-mu``; must share the kinetic velocity nodes.
    psi : ResponseFunction, optional
        Response of ``kernel-past-motion``.
    h : callable, optional
        Weight of ``kernel-anterior-posterior`` (default ``1/|V|``).
    D_c, C, chi : float
        Parameters of the cell velocity alpha.
    integrator : str
        ``"euler"`` or ``"exact"``.
    use_dtS : bool
        Include ``d_t S`` in the past-motion argument.
    """

    kind: str
    lam: float = 1.0
    mu: VelocityMeasure | None = None
    psi: ResponseFunction | Callable | None = None
    h: Callable | None = None
    D_c: float = 1.0
    C: float = 1.0
    chi: float = 0.0
    integrator: str = "euler"
    use_dtS: bool = True

    def __post_init__(self):
        if self.kind not in TURNING_KINDS:
            raise ValidationError(f"unknown turning kind {self.kind!r}")
        if self.lam < 0:
            raise ValidationError("lam must be nonnegative")
        if self.integrator not in ("euler", "exact"):
            raise ValidationError(f"unknown turning integrator {self.integrator!r}")
        if self.kind == "kernel-past-motion" and self.psi is None:
            raise ValidationError("kernel-past-motion needs a response function psi")
        if self.kind == "kernel-anterior-posterior" and (self.D_c <= 0 or self.C <= 0 or self.chi < 0):
            raise ValidationError("alpha needs D_c > 0, C > 0, chi >= 0")


@dataclass
class AccelSpec:
    """Velocity drift ``dv/dt = -a (v - v*)`` with ``v* = F g / (1 + |g|)``.

    ``scheme`` is ``"remap"`` (exact characteristics, one remap per step) or
    ``"muscl"`` (explicit limited substeps).
    """

    a: float = 1.0
    F: float = 1.0
    scheme: str = "remap"

    def __post_init__(self):
        if self.scheme not in ("remap", "muscl"):
            raise ValidationError(f"unknown drift scheme {self.scheme!r}")
        if self.a <= 0:
            raise ValidationError("acceleration rate a must be positive")
        if spectral_norm(self.F) > 1.0 + 1e-12:
            raise ValidationError("anisotropy must have spectral norm <= 1")


@dataclass
class KineticState:
    """Kinetic density of shape ``grid.shape + (n_velocities,)``."""

    t: float
    c: np.ndarray
    grid: SpatialGrid
    vspace: VelocityMeasure
    S: np.ndarray | None = None
    S_prev: np.ndarray | None = None
    dt_prev: float | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        want = self.grid.shape + (self.vspace.size,)
        if self.c.shape != want:
            raise ValidationError(f"kinetic density shape {self.c.shape}, expected {want}")
        if self.vspace.dimension != self.grid.dimension:
            raise ValidationError("velocity and space dimensions differ")
        if not np.all(np.isfinite(self.c)):
            raise ValidationError("kinetic density must be finite")

    @property
    def omega(self) -> np.ndarray:
        return self.vspace.cell_volumes

    @property
    def mass(self) -> float:
        return float(np.sum(self.c @ self.omega) * self.grid.cell_volume)


def local_equilibrium(cbar, grid: SpatialGrid, vspace: VelocityMeasure,
                      mu: VelocityMeasure | None = None, **kw) -> KineticState:
    """``c = cbar(x) mu(v)`` as a density per unit velocity."""
    mu = vspace if mu is None else mu
    _check_same_nodes(mu, vspace)
    prof = mu.weights / vspace.cell_volumes
    c = np.multiply.outer(np.asarray(cbar, dtype=float), prof)
    return KineticState(0.0, c, grid, vspace, **kw)


def _check_same_nodes(mu, vspace):
    if mu.size != vspace.size or not np.allclose(mu.nodes, vspace.nodes, atol=1e-14):
        raise ValidationError("the measure must share the kinetic velocity nodes")


def density_moment(state: KineticState, order: int = 0, scaling: ScalingSpec | None = None):
    """Order 0: ``cbar``. Order 1: mean velocity ``eps^(1-k) int v c / cbar``.

    The mean velocity is the macroscopic transport speed of ``cbar`` for the
    active scaling (``1/eps`` times the velocity average in the parabolic
    case); it is set to 0 where ``cbar <= 1e-14``.
    """
    w = state.omega
    cbar = state.c @ w
    if order == 0:
        return cbar
    if order != 1:
        raise ValidationError("order must be 0 or 1")
    s = (scaling or ScalingSpec()).speed_factor
    v = state.vspace.nodes
    ok = cbar > 1e-14
    if v.ndim == 1:
        j = state.c @ (v * w)
        return np.where(ok, s * j / np.where(ok, cbar, 1.0), 0.0)
    j = np.einsum("...k,k,kd->...d", state.c, w, v)
    return np.where(ok[..., None], s * j / np.where(ok, cbar, 1.0)[..., None], 0.0)


# --------------------------------------------------------------------- turning

def _signal_gradient(state: KineticState):
    if state.S is None:
        raise ValidationError("this turning kind needs a signal field S")
    return state.grid.gradient(state.S)


def _dtS(state: KineticState):
    if state.S_prev is None or not state.dt_prev:
        return 0.0 if state.S is None else np.zeros_like(state.S)
    return (state.S - state.S_prev) / state.dt_prev


def _past_motion_psi(state, spec, scaling):
    """Response values ``Psi_eff`` per cell and velocity node."""
    sc = scaling or ScalingSpec()
    e, k = sc.e, sc.kappa
    grads = _signal_gradient(state)
    v = state.vspace.nodes
    if v.ndim == 1:
        vg = np.multiply.outer(grads[0], v)
    else:
        vg = sum(np.multiply.outer(g, v[:, i]) for i, g in enumerate(grads))
    arg = e * vg
    if spec.use_dtS:
        arg = arg + (e ** k * _dtS(state))[..., None]
    if sc.kernel_rescale:
        return e * np.asarray(spec.psi(arg / e))
    return np.asarray(spec.psi(arg))


def alpha_field(state: KineticState, spec: TurningOperatorSpec, scaling=None):
    """Cell velocity ``-D grad cbar / sqrt(cbar^2 + (D/C)^2 |grad cbar|^2)
    + chi grad S / sqrt(1 + |grad S|^2)`` from central differences."""
    sc = scaling or ScalingSpec()
    if state.grid.dimension != 1:
        raise ValidationError("the anterior-posterior kernel is implemented in 1D")
    gf = sc.grad_factor
    cbar = density_moment(state, 0)
    gc = gf * state.grid.gradient(cbar)[0]
    D, C = spec.D_c, spec.C
    den = np.sqrt(cbar * cbar + (D / C) ** 2 * gc * gc)
    a = np.where(den > 0, -D * gc / np.where(den > 0, den, 1.0), 0.0)
    if spec.chi > 0:
        gs = gf * _signal_gradient(state)[0]
        a = a + spec.chi * gs / np.sqrt(1.0 + gs * gs)
    return a


def _h_values(state, spec):
    v = state.vspace.nodes
    vol = state.vspace.volume
    h = np.full(v.shape[0], 1.0 / vol) if spec.h is None else np.asarray(spec.h(v), dtype=float)
    return h


def check_h_moments(vspace: VelocityMeasure, h: Callable | None, tol: float = 1e-8) -> float:
    """Return the constant beta of ``int v v h dv = beta I``; raise if the
    moment conditions fail."""
    v = vspace.nodes
    w = vspace.cell_volumes
    hv = np.full(v.shape[0], 1.0 / vspace.volume) if h is None else np.asarray(h(v), dtype=float)
    if abs(np.dot(hv, w) - 1.0) > tol:
        raise ValidationError("h must integrate to 1")
    if v.ndim == 1:
        if abs(np.dot(hv * w, v)) > tol:
            raise ValidationError("h must have zero first moment")
        beta = float(np.dot(hv * w, v * v))
    else:
        if np.max(np.abs((hv * w) @ v)) > tol:
            raise ValidationError("h must have zero first moment")
        M = np.einsum("k,ki,kj->ij", hv * w, v, v)
        beta = float(M[0, 0])
        if np.max(np.abs(M - beta * np.eye(v.shape[1]))) > tol:
            raise ValidationError("second moment of h must be isotropic")
    if beta <= 0:
        raise ValidationError("second moment of h must be positive")
    return beta


def min_kernel_value(state, spec, scaling=None) -> float:
    """Most negative value of ``(alpha - v') v h(v)`` over cells and node pairs."""
    a = alpha_field(state, spec, scaling)
    v = state.vspace.nodes
    u = v * _h_values(state, spec)
    # extreme over v' of (a - v') at v' = +-max|v|
    vm = np.max(np.abs(v))
    vals = np.concatenate([np.multiply.outer(a - vm, u), np.multiply.outer(a + vm, u)], axis=-1)
    return float(np.min(vals))


def apply_turning(state: KineticState, spec: TurningOperatorSpec,
                  scaling: ScalingSpec | None = None) -> np.ndarray:
    """Turning rate ``L(c)`` (before division by ``eps^k``)."""
    c = state.c
    w = state.omega
    vol = state.vspace.volume
    cbar = c @ w
    if spec.kind == "relax-to-mu":
        mu = state.vspace if spec.mu is None else spec.mu
        _check_same_nodes(mu, state.vspace)
        return spec.lam * (np.multiply.outer(cbar, mu.weights / w) - c)
    uniform = spec.lam * (cbar[..., None] / vol - c)
    if spec.kind == "relax-uniform":
        return uniform
    if spec.kind == "kernel-past-motion":
        P = _past_motion_psi(state, spec, scaling)
        gain = np.sum(P * c * w, axis=-1)
        return uniform + gain[..., None] - vol * P * c
    # anterior-posterior
    check_h_moments(state.vspace, spec.h)
    a = alpha_field(state, spec, scaling)
    v = state.vspace.nodes
    u = v * _h_values(state, spec)
    j = c @ (v * w)
    return uniform + np.multiply.outer(a * cbar - j, u)


def turning_generator(state: KineticState, spec: TurningOperatorSpec, scaling=None) -> np.ndarray:
    """Per-cell matrix ``M`` with ``L(c) = M c``, shape ``grid.shape + (n, n)``."""
    n = state.vspace.size
    w = state.omega
    vol = state.vspace.volume
    shape = state.grid.shape
    I = np.eye(n)
    if spec.kind == "relax-to-mu":
        mu = state.vspace if spec.mu is None else spec.mu
        base = spec.lam * (np.outer(mu.weights / w, w) - I)
        return np.broadcast_to(base, shape + (n, n)).copy()
    base = spec.lam * (np.outer(np.full(n, 1.0 / vol), w) - I)
    M = np.broadcast_to(base, shape + (n, n)).copy()
    if spec.kind == "relax-uniform":
        return M
    if spec.kind == "kernel-past-motion":
        P = _past_motion_psi(state, spec, scaling)
        M += (P * w)[..., None, :]
        idx = np.arange(n)
        M[..., idx, idx] -= vol * P
        return M
    a = alpha_field(state, spec, scaling)
    v = state.vspace.nodes
    u = v * _h_values(state, spec)
    ell = (a[..., None] - v) * w
    M += u[:, None] * ell[..., None, :]
    return M


def turning_stiffness(state: KineticState, spec: TurningOperatorSpec, scaling=None) -> float:
    """Bound on the largest decay rate of the turning generator."""
    r = spec.lam
    if spec.kind == "kernel-past-motion":
        r += state.vspace.volume * float(np.max(np.abs(_past_motion_psi(state, spec, scaling))))
    elif spec.kind == "kernel-anterior-posterior":
        r += check_h_moments(state.vspace, spec.h) + float(np.max(np.abs(alpha_field(state, spec, scaling))))
    return r


class _TurningIntegrator:
    """Advances ``dc/dt = L(c) / eps^k`` over a time ``dt``."""

    def __init__(self, spec: TurningOperatorSpec, scaling: ScalingSpec):
        self.spec = spec
        self.scaling = scaling
        self._cache_key = None
        self._cache = None

    def __call__(self, state: KineticState, dt: float) -> np.ndarray:
        spec = self.spec
        tau = dt / self.scaling.time_factor
        if spec.integrator == "euler":
            return state.c + tau * apply_turning(state, spec, self.scaling)
        c = state.c
        w = state.omega
        if spec.kind in ("relax-to-mu", "relax-uniform"):
            cbar = c @ w
            if spec.kind == "relax-to-mu":
                mu = state.vspace if spec.mu is None else spec.mu
                eq = np.multiply.outer(cbar, mu.weights / w)
            else:
                eq = cbar[..., None] / state.vspace.volume
            return eq + (c - eq) * math.exp(-spec.lam * tau)
        if spec.kind == "kernel-anterior-posterior" and spec.lam == 0:
            a = alpha_field(state, spec, self.scaling)
            v = state.vspace.nodes
            u = v * _h_values(state, spec)
            beta = check_h_moments(state.vspace, spec.h)
            ell_c = a * (c @ w) - c @ (v * w)
            # exp(tau u l^T) c = c + u (l.c) (1 - exp(-beta tau)) / beta, since l.u = -beta
            return c + np.multiply.outer(ell_c * (-math.expm1(-beta * tau)) / beta, u)
        key = (tau, id(state.S), spec.kind == "kernel-anterior-posterior")
        if spec.kind == "kernel-anterior-posterior" or key != self._cache_key:
            self._cache = linalg.expm(tau * turning_generator(state, spec, self.scaling))
            self._cache_key = key
        return np.einsum("...ij,...j->...i", self._cache, c)


# ------------------------------------------------------------------- transport

def _mirror_index(v: np.ndarray):
    """Index of ``-v_j`` for each node, or None if the set is not symmetric."""
    if v.ndim != 1:
        return None
    order = np.argsort(v)
    if not np.allclose(v[order], -v[order[::-1]], atol=1e-12):
        return None
    mirror = np.empty_like(order)
    mirror[order] = order[::-1]
    return mirror


def transport_upwind(c, grid: SpatialGrid, vel: np.ndarray, dt: float, mirror=None):
    """First-order upwind step of ``dc/dt + vel . grad c = 0`` per velocity node.

    Walls reflect: the incoming flux of node ``j`` is the outgoing flux of its
    mirror node. Without a mirror map walls carry zero flux.
    """
    out = c.copy()
    for ax, h in enumerate(grid.spacing):
        u = vel if vel.ndim == 1 else vel[:, ax]
        if grid.periodic:
            left = np.roll(c, 1, axis=ax)
            right = np.roll(c, -1, axis=ax)
            FL = np.where(u > 0, u * left, u * c)      # flux at i - 1/2
            FR = np.where(u > 0, u * c, u * right)     # flux at i + 1/2
            out -= dt / h * (FR - FL)
            continue
        n = c.shape[ax]
        pad = [(0, 0)] * c.ndim
        pad[ax] = (1, 1)
        P = np.pad(c, pad, mode="edge")
        lo = [slice(None)] * c.ndim
        hi = [slice(None)] * c.ndim
        lo[ax] = 0
        hi[ax] = n + 1
        if mirror is not None and grid.dimension == 1:
            P[tuple(lo)] = c[0][mirror]
            P[tuple(hi)] = c[-1][mirror]
        faces_l = [slice(None)] * c.ndim
        faces_r = [slice(None)] * c.ndim
        faces_l[ax] = slice(0, n + 1)
        faces_r[ax] = slice(1, n + 2)
        A, B = P[tuple(faces_l)], P[tuple(faces_r)]
        F = np.where(u > 0, u * A, u * B)              # n + 1 faces
        if mirror is None or grid.dimension != 1:
            first = [slice(None)] * c.ndim
            last = [slice(None)] * c.ndim
            first[ax] = 0
            last[ax] = -1
            F[tuple(first)] = 0.0
            F[tuple(last)] = 0.0
        out -= dt / h * np.diff(F, axis=ax)
    return out


def transport_spectral(c, grid: SpatialGrid, vel: np.ndarray, dt: float):
    """Exact periodic shift by ``vel * dt`` in Fourier space.

    Round-off negatives in near-empty regions are clipped per velocity node
    with a rescaling that keeps each node's mass.
    """
    if not grid.periodic:
        raise ValidationError("spectral transport needs a periodic grid")
    spatial_axes = tuple(range(grid.dimension))
    ch = np.fft.rfftn(c, axes=spatial_axes) if grid.dimension == 1 else np.fft.fftn(c, axes=spatial_axes)
    phase = 0.0
    for ax, (n, h) in enumerate(zip(grid.cells, grid.spacing)):
        k = 2.0 * np.pi * (np.fft.rfftfreq(n, d=h) if (grid.dimension == 1) else np.fft.fftfreq(n, d=h))
        u = vel if vel.ndim == 1 else vel[:, ax]
        shape = [1] * (grid.dimension + 1)
        shape[ax] = k.size
        phase = phase + k.reshape(shape) * u.reshape([1] * grid.dimension + [u.size])
    ch = ch * np.exp(-1j * phase * dt)
    if grid.dimension == 1:
        out = np.fft.irfftn(ch, s=grid.cells, axes=spatial_axes)
    else:
        out = np.fft.ifftn(ch, axes=spatial_axes).real
    return _clip_negative(out, spatial_axes)


def _clip_negative(c, axes):
    """Remove round-off negatives, rescaling each velocity node to keep its mass."""
    if np.min(c) >= 0.0:
        return c
    total = np.sum(c, axis=axes, keepdims=True)
    pos = np.maximum(c, 0.0)
    ptot = np.sum(pos, axis=axes, keepdims=True)
    scale = np.where(ptot > 0, total / np.where(ptot > 0, ptot, 1.0), 0.0)
    return pos * scale


# -------------------------------------------------------------------- v-drift

def velocity_edges(vspace: VelocityMeasure) -> np.ndarray:
    """Cell edges in [-1, 1] from cumulative flat volumes; they bracket the nodes."""
    if vspace.dimension != 1:
        raise ValidationError("velocity drift is implemented for 1D velocities")
    if vspace.kind != "continuous-quadrature":
        raise ValidationError("velocity drift needs a continuous velocity quadrature")
    order = np.argsort(vspace.nodes)
    if not np.all(order == np.arange(vspace.size)):
        raise ValidationError("velocity nodes must be sorted")
    return -1.0 + np.concatenate([[0.0], np.cumsum(vspace.cell_volumes)])


def _edge_states(c, v, e):
    """Limited reconstructed densities on both sides of the interior edges."""
    dv = np.diff(v)
    d = np.diff(c, axis=-1) / dv
    dl, dr = d[..., :-1], d[..., 1:]
    prod = dl * dr
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(prod > 0, 2.0 * prod / (dl + dr), 0.0)
    s = np.concatenate([np.zeros_like(c[..., :1]), s, np.zeros_like(c[..., :1])], axis=-1)
    ei = e[1:-1]
    left = c[..., :-1] + s[..., :-1] * (ei - v[:-1])
    right = c[..., 1:] + s[..., 1:] * (ei - v[1:])
    lo = np.minimum(c[..., :-1], c[..., 1:])
    hi = np.maximum(c[..., :-1], c[..., 1:])
    left = np.clip(left, lo, np.minimum(hi, 2.0 * c[..., :-1]))
    right = np.clip(right, lo, np.minimum(hi, 2.0 * c[..., 1:]))
    return left, right


def vdrift_substep(c, v, e, omega, rate: float, vs: np.ndarray, dt: float):
    """MUSCL step of ``dc/dt = rate d/dv((v - v*) c)``; zero flux at |v| = 1."""
    U = -rate * (e[1:-1][None, :] - vs[:, None])    # v-velocity at interior edges
    left, right = _edge_states(c, v, e)
    F = U * np.where(U > 0, left, right)
    Fp = np.concatenate([np.zeros_like(F[:, :1]), F, np.zeros_like(F[:, :1])], axis=1)
    return c - dt * np.diff(Fp, axis=1) / omega


def vdrift_remap(c, e, omega, rate: float, vs: np.ndarray, dt: float):
    """Exact characteristic step of ``dc/dt = rate d/dv((v - v*) c)``.

    Over ``dt`` velocities contract affinely towards ``v*`` by the factor
    ``exp(-rate dt)``. The new cell masses are differences of the source
    cumulative mass at the pre-images of the edges, using a limited
    piecewise-linear density in each cell. Mass is conserved exactly and the
    update stays nonnegative for any step.
    """
    rho = math.exp(-rate * dt)
    mid = 0.5 * (e[1:] + e[:-1])
    dm = np.diff(mid)
    d = np.diff(c, axis=-1) / dm
    dl, dr = d[..., :-1], d[..., 1:]
    s = (np.abs(dr) * dl + np.abs(dl) * dr) / (np.abs(dl) + np.abs(dr) + 1e-300)
    cap = 2.0 * np.maximum(c[..., 1:-1], 0.0) / omega[1:-1]
    s = np.clip(s, -cap, cap)
    zero = np.zeros_like(c[..., :1])
    s = np.concatenate([zero, s, zero], axis=-1)
    m = c * omega
    cum = np.concatenate([zero, np.cumsum(m, axis=-1)], axis=-1)
    u = np.clip(vs[..., None] + (e - vs[..., None]) / rho, -1.0, 1.0)
    j = np.clip(np.searchsorted(e, u, side="right") - 1, 0, e.size - 2)
    cj = np.take_along_axis(c, j, axis=-1)
    sj = np.take_along_axis(s, j, axis=-1)
    ej, mj = e[j], mid[j]
    M = np.take_along_axis(cum, j, axis=-1) + cj * (u - ej) \
        + 0.5 * sj * ((u - mj) ** 2 - (ej - mj) ** 2)
    return np.diff(M, axis=-1) / omega


def vdrift_dt(omega, rate, vs) -> float:
    umax = rate * (1.0 + float(np.max(np.abs(vs))) if np.size(vs) else rate)
    return 0.2 * float(np.min(omega)) / umax


def preferred_velocity(state: KineticState, accel: AccelSpec, scaling: ScalingSpec):
    if state.S is None:
        vs = np.zeros(state.grid.shape)
        return vs
    g = (scaling or ScalingSpec()).grad_factor * state.grid.gradient(state.S)[0]
    return accel.F * g / (1.0 + np.abs(g))


# ------------------------------------------------------------------------ step

@dataclass
class StepStats:
    substeps: int = 0
    min_kernel: float = math.inf


def kinetic_cfl(state: KineticState, turning: TurningOperatorSpec | None,
                scaling: ScalingSpec, transport: str = "upwind") -> float:
    """Largest stable step for the explicit parts of :func:`kinetic_step`."""
    lim = math.inf
    if transport == "upwind":
        vmax = float(np.max(np.abs(state.vspace.nodes))) * scaling.speed_factor
        if vmax > 0:
            lim = 0.4 * state.grid.dx / (state.grid.dimension * vmax)
    if turning is not None and turning.integrator == "euler":
        r = turning_stiffness(state, turning, scaling)
        if r > 0:
            lim = min(lim, 0.5 * scaling.time_factor / r)
    return lim


def kinetic_step(state: KineticState, turning: TurningOperatorSpec | None,
                 scaling: ScalingSpec | None = None, accel: AccelSpec | None = None,
                 S=None, dt: float = 0.0, transport: str = "upwind",
                 check: bool = True, _integrator=None, _stats=None) -> KineticState:
    """One split step: x-transport, v-drift, turning.

    The v-drift (one remap, or explicit substeps for ``"muscl"``) is
    wrapped by half turning steps. ``S`` overrides the signal stored in the
    state.
    """
    sc = scaling or ScalingSpec()
    if S is not None:
        state = KineticState(state.t, state.c, state.grid, state.vspace, np.asarray(S, float),
                             state.S, state.dt_prev)
    if check:
        lim = kinetic_cfl(state, turning, sc, transport)
        if dt <= 0 or dt > lim * (1.0 + 1e-12):
            raise CFLViolation(f"dt = {dt:.3e} exceeds the kinetic bound {lim:.3e}")
    vel = state.vspace.nodes * sc.speed_factor
    if transport == "upwind":
        c = transport_upwind(state.c, state.grid, vel, dt, _mirror_index(state.vspace.nodes))
    elif transport == "spectral":
        c = transport_spectral(state.c, state.grid, vel, dt)
    else:
        raise ValidationError(f"unknown transport scheme {transport!r}")
    cur = KineticState(state.t, c, state.grid, state.vspace, state.S, state.S_prev, state.dt_prev)
    integ = _integrator
    if integ is None and turning is not None:
        integ = _TurningIntegrator(turning, sc)
    stats = _stats if _stats is not None else StepStats()
    if turning is not None and turning.kind == "kernel-anterior-posterior":
        stats.min_kernel = min(stats.min_kernel, min_kernel_value(cur, turning, sc))
    if accel is not None:
        if state.grid.dimension != 1:
            raise ValidationError("acceleration is implemented in 1D")
        v = state.vspace.nodes
        e = velocity_edges(state.vspace)
        omega = state.vspace.cell_volumes
        rate = accel.a / sc.time_factor
        vs = preferred_velocity(cur, accel, sc)
        if accel.scheme == "remap":
            n_sub = 1
        else:
            n_sub = max(1, int(math.ceil(dt / vdrift_dt(omega, rate, vs) - 1e-9)))
        h = dt / n_sub
        for _ in range(n_sub):
            if integ is not None:
                cur.c = integ(cur, 0.5 * h)
            if accel.scheme == "remap":
                cur.c = vdrift_remap(cur.c, e, omega, rate, vs, h)
            else:
                cur.c = vdrift_substep(cur.c, v, e, omega, rate, vs, h)
            if integ is not None:
                cur.c = integ(cur, 0.5 * h)
        stats.substeps += n_sub
    elif integ is not None:
        cur.c = integ(cur, dt)
    cmin = float(np.min(cur.c))
    if cmin < NEG_GUARD or not np.all(np.isfinite(cur.c)):
        raise NegativeDensityError(f"kinetic density dropped to {cmin:.3e}")
    return KineticState(state.t + dt, cur.c, state.grid, state.vspace, state.S,
                        state.S_prev, state.dt_prev)


# ----------------------------------------------------------------------- solve

@dataclass
class KineticRun:
    """Controls for :func:`solve_kinetic`."""

    final_time: float
    transport: str = "upwind"
    split_rate: float = 0.1
    dt_max: float = 1e-2
    snapshot_every: float | None = None
    signal: SignalSpec | None = None

    def __post_init__(self):
        if not self.final_time > 0:
            raise ValidationError("final_time must be positive")
        if not 0 < self.split_rate <= 0.5:
            raise ValidationError("split_rate must lie in (0, 0.5]")


@dataclass
class KineticTrajectory:
    final: KineticState
    snapshots: list = field(default_factory=list)   # (t, cbar, mean velocity)
    diagnostics: list = field(default_factory=list)
    steps: int = 0
    substeps: int = 0
    max_mass_drift: float = 0.0
    min_c: float = math.inf
    min_kernel: float | None = None


def solve_kinetic(initial: KineticState, turning: TurningOperatorSpec | None,
                  scaling: ScalingSpec | None, run: KineticRun,
                  accel: AccelSpec | None = None) -> KineticTrajectory:
    """Integrate to ``run.final_time`` with a fixed step.

    The step is the smallest of the explicit stability limit, ``dt_max`` and
    ``split_rate * eps^k / r`` where ``r`` bounds the turning and drift rates;
    the last keeps the splitting error small when both parts are stiff.
    """
    sc = scaling or ScalingSpec()
    T = run.final_time
    state = initial
    rates = []
    if turning is not None:
        rates.append(turning_stiffness(state, turning, sc))
    if accel is not None:
        rates.append(accel.a)
    r = max(rates) if rates else 0.0
    dt = min(run.dt_max, kinetic_cfl(state, turning, sc, run.transport))
    if r > 0:
        dt = min(dt, run.split_rate * sc.time_factor / r)
    nsteps = max(1, int(math.ceil(T / dt - 1e-9)))
    dt = T / nsteps
    integ = _TurningIntegrator(turning, sc) if turning is not None else None
    solver = SignalSolver(state.grid, run.signal) if run.signal is not None else None
    stats = StepStats()
    snap_dt = run.snapshot_every or T
    next_snap = snap_dt
    traj = KineticTrajectory(state)
    traj.snapshots.append((state.t, density_moment(state, 0), density_moment(state, 1, sc)))
    drift, cmin = 0.0, float(np.min(state.c))
    for i in range(nsteps):
        m0 = state.mass
        new = kinetic_step(state, turning, sc, accel, None, dt, run.transport,
                           check=(turning is not None and turning.integrator == "euler"),
                           _integrator=integ, _stats=stats)
        new.t = initial.t + (i + 1) * dt
        if solver is not None and state.S is not None and not run.signal.prescribed:
            S_new = solver.step(state.S, density_moment(state, 0), dt)
            new = KineticState(new.t, new.c, new.grid, new.vspace, S_new, state.S, dt)
        state = new
        if m0 > 0:
            drift = max(drift, abs(state.mass - m0) / m0)
        cmin = min(cmin, float(np.min(state.c)))
        if state.t >= next_snap - 1e-12 * T:
            traj.snapshots.append((state.t, density_moment(state, 0), density_moment(state, 1, sc)))
            traj.diagnostics.append({"t": state.t, "mass": state.mass, "min_c": float(np.min(state.c))})
            next_snap += snap_dt
    traj.final = state
    traj.steps = nsteps
    traj.substeps = stats.substeps
    traj.max_mass_drift = drift
    traj.min_c = cmin
    traj.min_kernel = None if stats.min_kernel == math.inf else stats.min_kernel
    return traj
