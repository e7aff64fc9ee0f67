"""Pointwise flux and velocity functions.

Diffusion families turn a density and its gradient into a cell velocity or a
flux; taxis families turn a signal gradient into a drift velocity. All
functions are vectorized with numpy. Vector arguments carry their components
on the last axis; a gradient with the same number of dimensions as the
density is read as a scalar (1D) gradient.

The turning-response side (``ResponseFunction``, :func:`phi_from_psi`) maps a
turning rate Psi to the macroscopic taxis velocity Phi by quadrature over
V = [-1, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import SingularBarrierError, ValidationError
from .velocity_measure import VelocityMeasure, g_of, make_lebesgue

DIFFUSION_FAMILIES = ("linear-diffusion", "porous-medium", "degenerate-singular",
                      "relativistic", "psi-saturated", "fsg")
TAXIS_FAMILIES = ("linear-taxis", "tanh-taxis", "psi-saturated", "phi-from-psi",
                  "vstar-saturated")
FAMILIES = tuple(dict.fromkeys(DIFFUSION_FAMILIES + TAXIS_FAMILIES))

# defaults per family; keys not listed here are rejected
_DEFAULTS = {
    "linear-diffusion": {"D_c": 1.0},
    "porous-medium": {"D_c": 1.0, "m": 1.0},
    "degenerate-singular": {"D_c": 1.0, "a": 1.0, "b": 1.0, "c_max": 1.0},
    "relativistic": {"D_c": 1.0, "C": 1.0},
    "psi-saturated": {"D_c": 1.0, "C": 1.0, "chi": 1.0},
    "fsg": {"eps": 0.1, "lam": 1.0},
    "linear-taxis": {"chi": 1.0},
    "tanh-taxis": {"chi": 1.0, "C": 1.0},
    "phi-from-psi": {"chi": 1.0, "C": 2.0, "lam": 1.0, "resolution": 64},
    "vstar-saturated": {"chi": 1.0, "eps": 1.0},
}
_POSITIVE = ("D_c", "C", "lam", "c_max", "resolution")
_NONNEG = ("chi", "m", "a", "b", "eps")


def _norm(z, vector: bool):
    return np.sqrt(np.sum(z * z, axis=-1)) if vector else np.abs(z)


def _is_vector(grad, c) -> bool:
    return np.ndim(grad) == np.ndim(c) + 1


def rh_flux(c, grad_c, D_c: float = 1.0, C: float = 1.0):
    """Relativistic heat flux ``D c grad_c / sqrt(c^2 + (D/C)^2 |grad_c|^2)``.

    This is the quantity inside the divergence, so the physical flux is its
    negative. Defined as 0 where ``c`` and ``grad_c`` both vanish.
    """
    c = np.asarray(c, dtype=float)
    g = np.asarray(grad_c, dtype=float)
    vec = _is_vector(g, c)
    gn = _norm(g, vec)
    den = np.sqrt(c * c + (D_c / C) ** 2 * gn * gn)
    safe = np.where(den > 0, den, 1.0)
    ratio = np.where(den > 0, D_c * c / safe, 0.0)
    return ratio[..., None] * g if vec else ratio * g


def psi_saturate(z, C: float = 1.0):
    """``z / sqrt(1 + |z|^2 / C^2)``; bounded by C, close to ``z`` when small.

    The last axis of ``z`` holds the vector components; a 0-d value is a
    one-component vector.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        return z / np.sqrt(1.0 + (z / C) ** 2)
    n = np.sqrt(np.sum(z * z, axis=-1, keepdims=True))
    return z / np.sqrt(1.0 + (n / C) ** 2)


def tanh_taxis(grad_S, chi: float = 1.0, C: float = 1.0):
    """Componentwise ``chi C tanh(y_i / (1 + C))``."""
    return chi * C * np.tanh(np.asarray(grad_S, dtype=float) / (1.0 + C))


def degenerate_singular_coeff(c, D_c: float = 1.0, a: float = 1.0, b: float = 1.0,
                              c_max: float = 1.0):
    """Diffusivity ``D c^b / (c_max - c)^a``; raises at or above the barrier."""
    c = np.asarray(c, dtype=float)
    if np.any(c >= c_max):
        raise SingularBarrierError(f"density reached c_max = {c_max}")
    out = D_c * np.power(np.maximum(c, 0.0), b) / np.power(c_max - c, a)
    return float(out) if out.ndim == 0 else out


def spectral_norm(F) -> float:
    """Largest spectral norm over a matrix or a stack of matrices."""
    F = np.asarray(F, dtype=float)
    if F.ndim < 2:
        return float(np.max(np.abs(F)))
    return float(np.max(np.linalg.svd(F, compute_uv=False)))


def vstar(grad_S, F=None):
    """Preferred velocity ``F grad_S / (1 + |grad_S|)``.

    The last axis of ``grad_S`` holds the components (0-d means 1D). ``F`` is
    a scalar, a ``(d, d)`` matrix or a per-point stack; ``None`` is the
    identity.
    """
    g = np.asarray(grad_S, dtype=float)
    F = np.asarray(1.0 if F is None else F, dtype=float)
    if spectral_norm(F) > 1.0 + 1e-12:
        raise ValidationError("anisotropy matrix must have spectral norm <= 1")
    if g.ndim == 0:
        return F * g / (1.0 + abs(g))
    n = np.sqrt(np.sum(g * g, axis=-1, keepdims=True))
    Fg = F * g if F.ndim < 2 else np.einsum("...ij,...j->...i", F, g)
    return Fg / (1.0 + n)


@dataclass
class ResponseFunction:
    """Turning-response rate Psi (1/time) with a text description."""

    psi: Callable[[np.ndarray], np.ndarray]
    description: str = ""

    def __post_init__(self):
        probe = np.asarray(self.psi(np.linspace(-100.0, 100.0, 401)), dtype=float)
        if probe.shape != (401,) or not np.all(np.isfinite(probe)):
            raise ValidationError("response function must be finite and vectorized on [-100, 100]")

    def __call__(self, beta):
        return self.psi(np.asarray(beta, dtype=float))


def psi_example(C: float = 2.0) -> ResponseFunction:
    """Response with ``Phi(beta) = beta / sqrt(1 + beta^2)`` for unit turning rate."""

    def psi(b):
        return C - b * (2.0 * b * b + 3.0) / (2.0 * (b * b + 1.0) ** 1.5)

    return ResponseFunction(psi, f"C - b(2b^2+3)/(2(b^2+1)^1.5), C={C}")


def psi_positivity_scan(psi: Callable, lo: float = -1.0, hi: float = 1.0,
                        n: int = 10_000, extent: float = 1e4) -> float:
    """Minimum of ``psi`` on a fine grid over [lo, hi] scaled out to ``extent``.

    Arguments of Psi are ``v * beta`` with ``|v| <= 1``; sampling both the unit
    interval and a logarithmic tail covers every gradient size.
    """
    core = np.linspace(lo, hi, n)
    tail = np.geomspace(1.0, extent, n)
    return float(np.min(psi(np.concatenate([core, tail, -tail]))))


def smallest_positive_constant(odd_part: Callable, n: int = 10_000) -> int:
    """Smallest integer C with ``C + odd_part >= 0`` on the scan grid."""
    m = psi_positivity_scan(odd_part, n=n)
    return max(0, int(math.ceil(-m - 1e-12)))


def phi_from_psi(psi: Callable, lam: float, mu: VelocityMeasure | None, beta):
    """``Phi(beta) = -(1/lam) int_V v Psi(v beta) dv`` by quadrature.

    ``mu`` supplies nodes and weights on V = [-1, 1]; weights are scaled by
    |V| to obtain the flat measure. ``None`` uses a 256-node Lebesgue rule,
    enough for 1e-6 accuracy when ``|beta| <= 10`` with the example response.
    """
    if lam <= 0:
        raise ValidationError("lam must be positive")
    if mu is None:
        mu = _lebesgue_cache(256)
    if mu.dimension != 1:
        raise ValidationError("phi_from_psi is defined on V = [-1, 1]")
    b = np.asarray(beta, dtype=float)
    v = mu.nodes
    w = mu.cell_volumes
    vals = np.asarray(psi(np.multiply.outer(b, v)), dtype=float)
    out = -(vals @ (v * w)) / lam
    return float(out) if b.ndim == 0 else out


_LEB = {}


def _lebesgue_cache(n: int) -> VelocityMeasure:
    if n not in _LEB:
        _LEB[n] = make_lebesgue(n)
    return _LEB[n]


@dataclass
class Calibration:
    lam: float
    residual: float
    betas: np.ndarray = field(repr=False)


def calibrate_lambda(psi: Callable, target: Callable, mu: VelocityMeasure | None = None,
                     betas=None) -> Calibration:
    """Least-squares turning rate so that :func:`phi_from_psi` fits ``target``.

    Phi scales like ``1/lam``, so the fit is linear in ``s = 1/lam``.
    """
    b = np.linspace(0.0, 10.0, 201) if betas is None else np.asarray(betas, dtype=float)
    p1 = phi_from_psi(psi, 1.0, mu, b)
    t = np.asarray(target(b), dtype=float)
    s = float(np.dot(p1, t) / np.dot(p1, p1))
    if s <= 0:
        raise ValidationError("calibration gave a non-positive turning rate")
    res = float(np.sqrt(np.mean((p1 * s - t) ** 2)))
    return Calibration(1.0 / s, res, b)


def response_from_phi(phi: Callable, lam: float, psi_even: Callable | None = None,
                      dphi: Callable | None = None, h: float = 1e-4) -> ResponseFunction:
    """Invert ``Phi -> Psi`` on V = [-1, 1] for a chosen even part.

    Uses ``Psi = Psi_even - lam (Phi + beta Phi' / 2)``; ``dphi`` defaults to
    a central difference.
    """
    if psi_even is None:
        def psi_even(b):
            return np.zeros_like(b)
    if dphi is None:
        def dphi(b):
            return (phi(b + h) - phi(b - h)) / (2.0 * h)

    def psi(b):
        b = np.asarray(b, dtype=float)
        return psi_even(b) - lam * (phi(b) + 0.5 * b * dphi(b))

    return ResponseFunction(psi, "inverted from Phi")


def fsg_velocity(c_face, grad, mu: VelocityMeasure, eps: float, lam: float):
    """Velocity ``-(1/eps) G(eps grad / (lam c))`` of the exponential-expansion
    equation; at ``c = 0`` it takes the saturated value ``-sign(grad)/eps``."""
    c_face = np.asarray(c_face, dtype=float)
    g = np.asarray(grad, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(c_face > 0, eps * g / (lam * np.where(c_face > 0, c_face, 1.0)),
                        np.sign(g) * 1e200)
    beta = np.clip(beta, -1e200, 1e200)
    return -g_of(mu, beta.ravel()).reshape(beta.shape) / eps


@dataclass
class FluxSpec:
    """Named flux family with parameters.

    Parameters
    ----------
    family : str
        One of :data:`FAMILIES`.
    params : dict
        Family parameters; missing ones take the family defaults.
    anisotropy : array, optional
        Constant matrix or per-cell table F with spectral norm <= 1
        (``vstar-saturated`` only).
    measure : VelocityMeasure, optional
        Measure behind G for the ``fsg`` family (default: two atoms at +-1).
    """

    family: str
    params: dict = field(default_factory=dict)
    anisotropy: object = None
    measure: VelocityMeasure | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown flux family {self.family!r}")
        defaults = _DEFAULTS[self.family]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ValidationError(
                f"unknown parameter(s) {sorted(unknown)} for family {self.family!r}")
        merged = dict(defaults)
        merged.update({k: float(v) for k, v in self.params.items()})
        for k, v in merged.items():
            if not math.isfinite(v):
                raise ValidationError(f"parameter {k} must be finite")
            if k in _POSITIVE and v <= 0:
                raise ValidationError(f"parameter {k} must be positive, got {v}")
            if k in _NONNEG and v < 0:
                raise ValidationError(f"parameter {k} must be nonnegative, got {v}")
        self.params = merged
        if self.anisotropy is not None:
            F = np.asarray(self.anisotropy, dtype=float)
            if spectral_norm(F) > 1.0 + 1e-12:
                raise ValidationError("anisotropy matrix must have spectral norm <= 1")
            self.anisotropy = F
        if self.family == "fsg" and self.measure is None:
            from .velocity_measure import make_discrete
            self.measure = make_discrete([(-1.0, 0.5), (1.0, 0.5)])
        self._response = None

    def __getitem__(self, key):
        return self.params[key]

    @property
    def can_diffuse(self) -> bool:
        return self.family in DIFFUSION_FAMILIES

    @property
    def can_taxis(self) -> bool:
        return self.family in TAXIS_FAMILIES

    @property
    def saturating(self) -> bool:
        return self.family not in ("linear-diffusion", "porous-medium",
                                   "degenerate-singular", "linear-taxis")

    def diffusion_cap(self) -> float | None:
        """Largest cell speed of a saturating diffusion family."""
        if self.family in ("relativistic", "psi-saturated"):
            return self.params["C"]
        if self.family == "fsg":
            return 1.0 / self.params["eps"]
        return None

    def taxis_cap(self) -> float | None:
        """Largest drift speed of a saturating taxis family."""
        p = self.params
        if self.family in ("tanh-taxis", "psi-saturated"):
            return p["chi"] * p["C"]
        if self.family == "vstar-saturated":
            if p["eps"] == 0:
                return None
            F = 1.0 if self.anisotropy is None else spectral_norm(self.anisotropy)
            return p["chi"] * F / p["eps"]
        if self.family == "phi-from-psi":
            b = np.geomspace(1e-3, 1e3, 400)
            return float(p["chi"] * np.max(np.abs(self.phi(b))))
        return None

    def response(self) -> ResponseFunction:
        if self._response is None:
            self._response = psi_example(self.params["C"])
        return self._response

    def phi(self, beta):
        n = int(self.params["resolution"])
        return phi_from_psi(self.response(), self.params["lam"], _lebesgue_cache(n), beta)

    def taxis_velocity(self, grad_n, grad_norm=None):
        """Drift velocity normal to a face.

        ``grad_n`` is the face-normal signal gradient, ``grad_norm`` the full
        gradient magnitude (defaults to ``|grad_n|``, the 1D case).
        """
        p = self.params
        g = np.asarray(grad_n, dtype=float)
        gn = np.abs(g) if grad_norm is None else grad_norm
        fam = self.family
        if fam == "linear-taxis":
            return p["chi"] * g
        if fam == "tanh-taxis":
            return tanh_taxis(g, p["chi"], p["C"])
        if fam == "psi-saturated":
            return p["chi"] * g / np.sqrt(1.0 + (gn / p["C"]) ** 2)
        if fam == "vstar-saturated":
            F = 1.0 if self.anisotropy is None else self.anisotropy
            F = np.asarray(F, dtype=float)
            if F.ndim >= 2:
                raise ValidationError("matrix anisotropy needs the vector form; use a scalar in 1D")
            return p["chi"] * F * g / (1.0 + p["eps"] * gn)
        if fam == "phi-from-psi":
            if grad_norm is not None:
                raise ValidationError("phi-from-psi taxis is one-dimensional")
            return p["chi"] * self.phi(g)
        raise ValidationError(f"family {fam!r} is not a taxis family")

    def to_json(self) -> dict:
        out = {"family": self.family, "params": dict(self.params)}
        if self.anisotropy is not None:
            out["anisotropy"] = np.asarray(self.anisotropy).tolist()
        return out


def flux_from_json(obj: Mapping | None) -> FluxSpec | None:
    """Build a :class:`FluxSpec` from ``{"family": ..., "params": {...}}``."""
    if obj is None:
        return None
    if not isinstance(obj, Mapping) or "family" not in obj:
        raise ValidationError("flux entry needs a 'family' key")
    extra = set(obj) - {"family", "params", "anisotropy", "measure"}
    if extra:
        raise ValidationError(f"unknown flux key(s) {sorted(extra)}")
    measure = None
    if "measure" in obj:
        from .velocity_measure import measure_from_json
        measure = measure_from_json(obj["measure"])
    return FluxSpec(obj["family"], dict(obj.get("params", {})), obj.get("anisotropy"), measure)
