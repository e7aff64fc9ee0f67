"""Probability measures on bounded velocity sets.

A measure is stored as a quadrature: nodes in the velocity set V and
nonnegative weights summing to one. Continuous measures (the normalized
Lebesgue measure) use Gauss-Legendre rules; discrete measures are atom lists.

The saturating map

    G(beta) = int v exp(beta v) dmu / int exp(beta v) dmu

is evaluated in a shifted form so that it never overflows.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ValidationError

KINDS = ("continuous-quadrature", "discrete-atoms")
SHAPES = ("interval", "ball")


@dataclass(frozen=True)
class VelocitySetSpec:
    """Velocity set V: ``interval`` is [-1, 1], ``ball`` the open unit disk."""

    dimension: int = 1
    shape: str = "interval"
    resolution: int = 32

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValidationError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.shape not in SHAPES:
            raise ValidationError(f"unknown velocity set shape {self.shape!r}")
        if self.resolution < 2:
            raise ValidationError(f"resolution must be >= 2, got {self.resolution}")

    @property
    def volume(self) -> float:
        """Lebesgue measure |V| of the velocity set."""
        if self.dimension == 1:
            return 2.0
        return math.pi if self.shape == "ball" else 4.0


def _odd_moments_vanish(nodes: np.ndarray, weights: np.ndarray, tol: float = 1e-10) -> bool:
    if nodes.ndim == 1:
        return all(abs(np.dot(weights, nodes**k)) <= tol for k in (1, 3, 5))
    for i in range(6):
        for j in range(6 - i):
            if (i + j) % 2 == 1:
                val = np.dot(weights, nodes[:, 0] ** i * nodes[:, 1] ** j)
                if abs(val) > tol:
                    return False
    return True


@dataclass(frozen=True, eq=False)
class VelocityMeasure:
    """Quadrature representation of a probability measure on V.

    Attributes
    ----------
    nodes : ndarray
        Shape ``(n,)`` in 1D, ``(n, 2)`` in 2D.
    weights : ndarray
        Nonnegative, summing to 1.
    kind : str
        ``"continuous-quadrature"`` or ``"discrete-atoms"``.
    symmetric : bool
        Declared symmetry ``mu(-A) = mu(A)``; checked on odd monomials.
    volume : float
        |V|, used to convert between ``dmu`` and the flat measure ``dv``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str
    symmetric: bool = True
    volume: float = 2.0
    shape: str = "interval"

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if self.kind not in KINDS:
            raise ValidationError(f"unknown measure kind {self.kind!r}")
        if nodes.ndim not in (1, 2) or (nodes.ndim == 2 and nodes.shape[1] != 2):
            raise ValidationError("nodes must have shape (n,) or (n, 2)")
        if weights.shape != (nodes.shape[0],):
            raise ValidationError("one weight per node is required")
        if np.any(weights < 0):
            raise ValidationError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValidationError(f"weights sum to {weights.sum()!r}, not 1")
        if nodes.ndim == 1:
            if np.any(np.abs(nodes) > 1.0):
                raise ValidationError("1D velocity nodes must lie in [-1, 1]")
        elif self.shape == "interval":
            if np.any(np.abs(nodes) > 1.0):
                raise ValidationError("2D velocity nodes must lie in the square [-1, 1]^2")
        elif np.any(np.hypot(nodes[:, 0], nodes[:, 1]) >= 1.0 + 1e-12):
            raise ValidationError("2D velocity nodes must lie in the open unit ball")
        if self.symmetric and not _odd_moments_vanish(nodes, weights):
            raise ValidationError("measure declared symmetric but odd moments do not vanish")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def dimension(self) -> int:
        return 1 if self.nodes.ndim == 1 else 2

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def cell_volumes(self) -> np.ndarray:
        """Flat-measure volume carried by each node, ``|V| * w``."""
        return self.volume * self.weights

    def to_json(self) -> dict:
        return {
            "kind": "discrete" if self.kind == "discrete-atoms" else "quadrature",
            "atoms": [[float(v), float(w)] for v, w in zip(self.nodes, self.weights)]
            if self.dimension == 1
            else [[list(map(float, v)), float(w)] for v, w in zip(self.nodes, self.weights)],
        }


def make_lebesgue(spec: VelocitySetSpec | int = 32) -> VelocityMeasure:
    """Normalized Lebesgue measure on V as a Gauss-Legendre type rule.

    In 1D this is an ``n``-point Gauss-Legendre rule on [-1, 1]. On the
    unit disk it is a polar product rule: Gauss-Legendre in ``r`` (with the
    ``r dr`` Jacobian) times an equispaced rule in the angle.
    """
    if isinstance(spec, int):
        spec = VelocitySetSpec(resolution=spec)
    n = spec.resolution
    x, w = np.polynomial.legendre.leggauss(n)
    if spec.dimension == 1:
        return VelocityMeasure(x, w / 2.0, "continuous-quadrature", volume=2.0)
    if spec.shape == "interval":
        # tensor rule on the square [-1, 1]^2
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = np.outer(w, w) / 4.0
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        return VelocityMeasure(nodes, W.ravel(), "continuous-quadrature",
                               volume=4.0, shape="interval")
    r = 0.5 * (x + 1.0)
    wr = 0.5 * w * r
    theta = 2.0 * np.pi * (np.arange(2 * n) + 0.5) / (2 * n)
    R, T = np.meshgrid(r, theta, indexing="ij")
    W = np.outer(wr, np.full(2 * n, 2.0 * np.pi / (2 * n)))
    nodes = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    W = W.ravel() / W.sum()
    return VelocityMeasure(nodes, W, "continuous-quadrature", volume=math.pi, shape="ball")


def make_discrete(atoms: Iterable[tuple], symmetric: bool | None = None) -> VelocityMeasure:
    """Atom-list measure from ``(velocity, weight)`` pairs.

    ``symmetric=None`` detects symmetry from the odd moments.
    """
    atoms = list(atoms)
    if not atoms:
        raise ValidationError("at least one atom is required")
    vel = np.array([a[0] for a in atoms], dtype=float)
    w = np.array([a[1] for a in atoms], dtype=float)
    if np.any(w < 0):
        raise ValidationError("atom weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValidationError(f"atom weights sum to {w.sum()!r}, not 1")
    if symmetric is None:
        symmetric = _odd_moments_vanish(vel, w)
    return VelocityMeasure(vel, w, "discrete-atoms", symmetric=symmetric,
                           volume=2.0 if vel.ndim == 1 else math.pi,
                           shape="interval" if vel.ndim == 1 else "ball")


def measure_from_json(obj: dict | str | Path) -> VelocityMeasure:
    """Load a measure description.

    Accepted forms are ``{"kind": "discrete", "atoms": [[v, w], ...]}``,
    ``{"kind": "lebesgue", "resolution": N}`` (optionally ``"dimension"`` and
    ``"shape"``) and ``{"kind": "quadrature", "atoms": ...}`` as written by
    :meth:`VelocityMeasure.to_json` for a 1D rule.
    """
    if isinstance(obj, (str, Path)):
        obj = json.loads(Path(obj).read_text())
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValidationError("measure JSON needs a 'kind' key")
    kind = obj["kind"]
    allowed = {"discrete": {"kind", "atoms", "symmetric"},
               "quadrature": {"kind", "atoms"},
               "lebesgue": {"kind", "resolution", "dimension", "shape"}}
    if kind not in allowed:
        raise ValidationError(f"unknown measure kind {kind!r}")
    extra = set(obj) - allowed[kind]
    if extra:
        raise ValidationError(f"unknown measure key(s) {sorted(extra)}")
    if kind in ("discrete", "quadrature"):
        if "atoms" not in obj:
            raise ValidationError(f"{kind} measure needs 'atoms'")
        atoms = [tuple(a) for a in obj["atoms"]]
        if kind == "discrete":
            return make_discrete(atoms, obj.get("symmetric"))
        v = np.array([a[0] for a in atoms], dtype=float)
        w = np.array([a[1] for a in atoms], dtype=float)
        if v.ndim != 1:
            raise ValidationError("quadrature atoms are supported in 1D only")
        return VelocityMeasure(v, w, "continuous-quadrature",
                               symmetric=_odd_moments_vanish(v, w), volume=2.0)
    dim = int(obj.get("dimension", 1))
    return make_lebesgue(VelocitySetSpec(
        dimension=dim,
        shape=obj.get("shape", "interval" if dim == 1 else "ball"),
        resolution=int(obj.get("resolution", 32)),
    ))


def moment(mu: VelocityMeasure, n: int, tensor: bool = False):
    """Quadrature of ``v**n`` against ``mu``.

    In 2D the scalar moment is that of ``|v|**n``; ``tensor=True`` with
    ``n == 2`` returns the matrix ``int v (x) v dmu``.
    """
    if n < 0 or n > 12:
        raise ValidationError(f"moment order must be in [0, 12], got {n}")
    v, w = mu.nodes, mu.weights
    if mu.dimension == 1:
        return float(np.dot(w, v**n))
    if tensor:
        if n != 2:
            raise ValidationError("tensor moments are only provided for n = 2")
        return np.einsum("k,ki,kj->ij", w, v, v)
    return float(np.dot(w, np.hypot(v[:, 0], v[:, 1]) ** n))


def _tilted(mu: VelocityMeasure, beta):
    """Weights of the exponentially tilted measure, shape ``(len(beta), n)``."""
    b = np.atleast_1d(np.asarray(beta, dtype=float))
    s = np.outer(b, mu.nodes)
    # factor out exp(beta * max v) node-wise maximum: never overflows
    s -= s.max(axis=1, keepdims=True)
    e = mu.weights * np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def g_of(mu: VelocityMeasure, beta):
    """The saturating map G of ``mu``; scalar in, scalar out."""
    if mu.dimension != 1:
        raise ValidationError("g_of is defined for 1D measures")
    scalar = np.ndim(beta) == 0
    out = _tilted(mu, beta) @ mu.nodes
    return float(out[0]) if scalar else out


def g_derivative(mu: VelocityMeasure, beta):
    """G'(beta): the variance of v under the tilted measure."""
    t = _tilted(mu, beta)
    mean = t @ mu.nodes
    var = np.einsum("bk,bk->b", t, (mu.nodes[None, :] - mean[:, None]) ** 2)
    return float(var[0]) if np.ndim(beta) == 0 else var


def _saturation_gap(mu: VelocityMeasure, beta):
    """``1 - |G(beta)|`` computed without cancellation."""
    b = np.atleast_1d(np.asarray(beta, dtype=float))
    t = _tilted(mu, b)
    sgn = np.where(b >= 0, 1.0, -1.0)
    return np.einsum("bk,bk->b", t, 1.0 - sgn[:, None] * mu.nodes[None, :])


@dataclass
class GReport:
    """Outcome of :func:`check_g_properties`."""

    odd: bool
    increasing: bool
    bounded: bool
    saturates: bool
    g_max_beta: float
    delta_sat: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def check_g_properties(mu: VelocityMeasure, betas: Sequence[float] | None = None) -> GReport:
    """Check oddness, strict monotonicity, the (-1, 1) bound and saturation of G.

    Never raises on a failed property; failures are listed in the report.
    """
    if betas is None:
        betas = np.linspace(-50.0, 50.0, 1001)
    b = np.asarray(betas, dtype=float)
    if not np.allclose(np.sort(b), np.sort(-b)) or b.max() < 50.0:
        raise ValidationError("betas must be symmetric about 0 and span [-50, 50]")
    g = g_of(mu, b)
    g_neg = g_of(mu, -b)
    odd = bool(np.max(np.abs(g + g_neg)) <= 1e-10)
    order = np.argsort(b)
    increasing = bool(np.all(g_derivative(mu, b) > 0.0) and np.all(np.diff(g[order]) >= 0.0))
    bounded = bool(np.all(_saturation_gap(mu, b) > 0.0))
    bmax = float(b.max())
    g_top = g_of(mu, bmax)
    # continuous measures approach 1 like 1 - 1/beta
    delta = 1e-10 if mu.kind == "discrete-atoms" else 2.0 / bmax
    saturates = bool(g_top >= 1.0 - delta)
    violations = [name for name, ok in
                  (("odd", odd), ("increasing", increasing),
                   ("bounded", bounded), ("saturates", saturates)) if not ok]
    return GReport(odd, increasing, bounded, saturates, g_top, delta, violations)


def fd_weights(order: int, offsets: Sequence[float]) -> np.ndarray:
    """Finite-difference weights at 0 for the given derivative order (Fornberg)."""
    z = np.asarray(offsets, dtype=float)
    n = len(z)
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, z[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, z[i]
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


@dataclass
class MomentReport:
    """Even derivatives of ``I(beta) = exp(int_0^beta g)`` at 0."""

    values: dict
    passed: dict
    tol: float

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def _central_derivative(f: Callable[[float], float], order: int, h: float, accuracy: int = 8) -> float:
    m = (order + accuracy - 1) // 2
    offsets = np.arange(-m, m + 1)
    w = fd_weights(order, offsets)
    vals = np.array([f(k * h) for k in offsets])
    return float(np.dot(w, vals) / h**order)


def _exp_integral(g: Callable, beta: float) -> float:
    """``exp(int_0^beta g)`` by composite 20-point Gauss-Legendre panels."""
    if beta == 0.0:
        return 1.0
    panels = max(1, int(math.ceil(abs(beta) / 0.5)))
    edges = np.linspace(0.0, beta, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * _GL20_X[None, :]).ravel()
    vals = np.asarray(g(pts), dtype=float).reshape(panels, -1)
    return math.exp(float(np.sum(half * (vals @ _GL20_W))))


_GL20_X, _GL20_W = np.polynomial.legendre.leggauss(20)


def moment_condition_test(g: Callable, orders=(2, 4), tol: float = 1e-4,
                          step: float = 0.05) -> MomentReport:
    """Test whether ``g`` can be the G of a probability measure on [-1, 1].

    The even derivatives of ``I(beta) = exp(int_0^beta g)`` at 0 are the even
    moments of the measure and must lie in (0, 1]. They are taken with an
    8th-order central stencil and one Richardson step. The step grows like
    ``step * (order / 2)**2`` so that round-off stays far below ``tol``.

    ``g`` must accept numpy arrays.
    """
    values, passed = {}, {}
    for k in orders:
        if k % 2 or k < 2 or k > 8:
            raise ValidationError(f"orders must be even and in [2, 8], got {k}")
        h = step * (k / 2.0) ** 2
        f = lambda b: _exp_integral(g, b)  # noqa: E731
        d_h = _central_derivative(f, k, h)
        d_h2 = _central_derivative(f, k, h / 2.0)
        d = (2.0**8 * d_h2 - d_h) / (2.0**8 - 1.0)
        values[k] = d
        passed[k] = bool(tol < d <= 1.0 + tol)
    return MomentReport(values, passed, tol)
