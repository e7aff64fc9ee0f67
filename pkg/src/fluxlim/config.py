"""Declarative experiment configuration.

An experiment is one JSON object. Every section is parsed strictly: unknown
keys raise :class:`ValidationError` naming the key, so a typo never runs a
silently different experiment. Parsing builds the solver specs up front,
which means a config that loads is a config whose specs validate.

Top-level keys
--------------
name, mode, description
    ``mode`` is one of :data:`MODES`.
grid
    ``{"lower", "upper", "cells", "boundary"}``; scalars for 1D.
ic
    Initial density, see :func:`parse_ic`.
model
    ``{"diffusion_flux", "taxis_flux", "signal", "reaction"}``.
run
    ``{"final_time", "dt_max", "theta", "front_every", "amplitudes",
    "speed_window"}``.
kinetic
    ``{"velocity", "turning", "scaling", "accel", "transport",
    "split_rate", "signal"}``.
sweep, correction, check, coefficients
    Mode-specific sections.
output
    ``{"dir", "snapshot_every", "formats"}``.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ValidationError
from .flux_lib import flux_from_json, psi_example
from .grid import SpatialGrid
from .kinetic import AccelSpec, ScalingSpec, TurningOperatorSpec
from .macro_pde import ModelSpec, ReactionSpec, SignalSpec
from .upscale import PAIRINGS, SweepPlan
from .velocity_measure import VelocityMeasure, measure_from_json

MODES = ("macro", "kinetic", "sweep", "correction", "coeff-table", "check")
FORMATS = ("csv", "jsonl", "svg", "kinetic-csv")
IC_TYPES = ("gaussian", "indicator", "constant", "linear", "sine", "sum")

_TOP = {"name", "mode", "description", "grid", "ic", "model", "run", "kinetic",
        "sweep", "correction", "check", "coefficients", "output"}
_REQUIRED = {
    "macro": ("grid", "ic", "model", "run"),
    "kinetic": ("grid", "ic", "kinetic", "run"),
    "sweep": ("sweep",),
    "correction": ("correction",),
    "coeff-table": ("coefficients",),
    "check": ("check",),
}


def _keys(obj, allowed, where: str, required=()) -> dict:
    if not isinstance(obj, Mapping):
        raise ValidationError(f"{where}: expected an object, got {type(obj).__name__}")
    for k in obj:
        if k not in allowed:
            raise ValidationError(f"{where}: unknown key {k!r}")
    for k in required:
        if k not in obj:
            raise ValidationError(f"{where}: missing key {k!r}")
    return dict(obj)


def _num(obj, key, where, default=None, positive=False, nonneg=False) -> float:
    if key not in obj:
        if default is None:
            raise ValidationError(f"{where}: missing key {key!r}")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(f"{where}.{key}: expected a finite number, got {v!r}")
    if positive and v <= 0:
        raise ValidationError(f"{where}.{key}: must be positive, got {v}")
    if nonneg and v < 0:
        raise ValidationError(f"{where}.{key}: must be nonnegative, got {v}")
    return float(v)


def _wrap(where: str, fn, *args, **kw):
    # prefix library validation messages with the config location
    try:
        return fn(*args, **kw)
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: {exc}") from None


# ------------------------------------------------------------------------ IC

@dataclass
class ICSpec:
    """Tagged initial profile; call with a grid to evaluate."""

    type: str
    params: dict = field(default_factory=dict)
    terms: list = field(default_factory=list)

    def __call__(self, grid: SpatialGrid) -> np.ndarray:
        X = grid.centers()
        X = [X] if grid.dimension == 1 else list(X)
        d = grid.dimension
        p = self.params

        def vec(key, default):
            v = np.atleast_1d(np.asarray(p.get(key, default), dtype=float))
            if v.size == 1:
                v = np.repeat(v, d)
            if v.size != d:
                raise ValidationError(f"ic.{key}: expected {d} components")
            return v

        if self.type == "gaussian":
            c0, w, m = vec("center", 0.0), p.get("width", 0.5), p.get("mass", 1.0)
            r2 = sum((x - c) ** 2 for x, c in zip(X, c0))
            return m * np.exp(-0.5 * r2 / w ** 2) / (2.0 * math.pi * w ** 2) ** (d / 2.0)
        if self.type == "indicator":
            a, b = vec("a", -1.0), vec("b", 1.0)
            inside = np.ones(grid.shape, dtype=bool)
            for x, lo, hi in zip(X, a, b):
                inside &= (x > lo) & (x < hi)
            return p.get("height", 1.0) * inside.astype(float)
        if self.type == "constant":
            return np.full(grid.shape, p.get("value", 1.0))
        if self.type == "linear":
            s = vec("slope", 1.0)
            return p.get("intercept", 0.0) + sum(si * x for si, x in zip(s, X))
        if self.type == "sine":
            L = p.get("period", grid.extent[0])
            return p.get("amplitude", 1.0) * np.sin(2.0 * math.pi * X[0] / L + p.get("phase", 0.0))
        return sum(t(grid) for t in self.terms)


_IC_KEYS = {
    "gaussian": {"center", "width", "mass"},
    "indicator": {"a", "b", "height"},
    "constant": {"value"},
    "linear": {"slope", "intercept"},
    "sine": {"amplitude", "period", "phase"},
    "sum": {"terms"},
}


def parse_ic(obj, where: str = "ic") -> ICSpec:
    """Parse ``{"type": tag, ...}``; tags are listed in :data:`IC_TYPES`."""
    if not isinstance(obj, Mapping) or "type" not in obj:
        raise ValidationError(f"{where}: needs a 'type' key")
    tag = obj["type"]
    if tag not in IC_TYPES:
        raise ValidationError(f"{where}.type: unknown initial-condition tag {tag!r}")
    body = _keys(obj, _IC_KEYS[tag] | {"type"}, where)
    if tag == "sum":
        terms = body.get("terms")
        if not isinstance(terms, list) or not terms:
            raise ValidationError(f"{where}.terms: expected a non-empty list")
        return ICSpec("sum", {}, [parse_ic(t, f"{where}.terms[{i}]") for i, t in enumerate(terms)])
    params = {}
    for k, v in body.items():
        if k == "type":
            continue
        try:
            arr = np.asarray(v, dtype=float) if not isinstance(v, bool) else None
        except (TypeError, ValueError):
            arr = None
        if arr is None or not np.all(np.isfinite(arr)):
            raise ValidationError(f"{where}.{k}: expected finite numbers, got {v!r}")
        params[k] = v if arr.ndim else float(arr)
    if tag == "gaussian":
        if params.get("width", 0.5) <= 0:
            raise ValidationError(f"{where}.width: must be positive")
        if params.get("mass", 1.0) < 0:
            raise ValidationError(f"{where}.mass: must be nonnegative")
    if tag == "indicator" and params.get("height", 1.0) < 0:
        raise ValidationError(f"{where}.height: must be nonnegative")
    return ICSpec(tag, params)


# --------------------------------------------------------------------- specs

def parse_grid(obj, where="grid") -> SpatialGrid:
    g = _keys(obj, {"lower", "upper", "cells", "boundary"}, where, ("lower", "upper", "cells"))
    for key in ("lower", "upper", "cells"):
        vals = g[key] if isinstance(g[key], (list, tuple)) else [g[key]]
        if not vals or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in vals):
            raise ValidationError(f"{where}.{key}: expected a number or a list of numbers, got {g[key]!r}")
    return _wrap(where, SpatialGrid, g["lower"], g["upper"], g["cells"], g.get("boundary", "no-flux"))


def parse_signal(obj, where) -> tuple:
    s = _keys(obj, {"D_v", "alpha", "beta", "prescribed", "initial"}, where)
    spec = _wrap(where, SignalSpec, _num(s, "D_v", where, 1.0, nonneg=True),
                 _num(s, "alpha", where, 0.0, nonneg=True), _num(s, "beta", where, 0.0),
                 bool(s.get("prescribed", False)))
    init = parse_ic(s["initial"], f"{where}.initial") if "initial" in s else ICSpec("constant", {"value": 0.0})
    return spec, init


def _flux(obj, where):
    return _wrap(where, flux_from_json, obj)


def parse_model(obj, where="model") -> tuple:
    """Returns ``(ModelSpec, signal ICSpec or None)``."""
    m = _keys(obj, {"diffusion_flux", "taxis_flux", "signal", "reaction"}, where)
    diff = _flux(m["diffusion_flux"], f"{where}.diffusion_flux") if "diffusion_flux" in m else None
    tax = _flux(m["taxis_flux"], f"{where}.taxis_flux") if "taxis_flux" in m else None
    signal, s_ic = (None, None)
    if "signal" in m:
        signal, s_ic = parse_signal(m["signal"], f"{where}.signal")
    reaction = ReactionSpec()
    if "reaction" in m:
        r = _keys(m["reaction"], {"kind", "rate", "capacity"}, f"{where}.reaction")
        if r.get("kind", "none") == "custom":
            raise ValidationError(f"{where}.reaction.kind: 'custom' is not available from JSON")
        reaction = _wrap(f"{where}.reaction", ReactionSpec, r.get("kind", "none"),
                         _num(r, "rate", where, 0.0), _num(r, "capacity", where, 1.0))
    model = _wrap(where, ModelSpec, diff, tax, signal, reaction)
    if tax is not None and s_ic is None:
        s_ic = ICSpec("constant", {"value": 0.0})
    return model, s_ic


@dataclass
class RunSpec:
    final_time: float
    dt_max: float = 1e-2
    theta: float = 1e-3
    front_every: float | None = None
    amplitudes: tuple = (1.0,)
    speed_window: tuple | None = None


def parse_run(obj, where="run") -> RunSpec:
    r = _keys(obj, {"final_time", "dt_max", "theta", "front_every", "amplitudes", "speed_window"},
              where, ("final_time",))
    amps = tuple(float(a) for a in r.get("amplitudes", (1.0,)))
    if not amps or any(a <= 0 for a in amps):
        raise ValidationError(f"{where}.amplitudes: expected positive factors")
    win = r.get("speed_window")
    if win is not None and (len(win) != 2 or not win[0] < win[1]):
        raise ValidationError(f"{where}.speed_window: expected [t0, t1] with t0 < t1")
    return RunSpec(_num(r, "final_time", where, positive=True),
                   _num(r, "dt_max", where, 1e-2, positive=True),
                   _num(r, "theta", where, 1e-3, positive=True),
                   _num(r, "front_every", where, positive=True) if "front_every" in r else None,
                   amps, tuple(win) if win is not None else None)


@dataclass
class KineticSetup:
    vspace: VelocityMeasure
    turning: TurningOperatorSpec | None
    scaling: ScalingSpec
    accel: AccelSpec | None
    transport: str
    split_rate: float
    signal: SignalSpec | None
    signal_ic: ICSpec | None


def parse_kinetic(obj, where="kinetic") -> KineticSetup:
    k = _keys(obj, {"velocity", "turning", "scaling", "accel", "transport", "split_rate", "signal"},
              where, ("velocity",))
    vspace = _wrap(f"{where}.velocity", measure_from_json, k["velocity"])
    turning = None
    if "turning" in k:
        w = f"{where}.turning"
        t = _keys(k["turning"], {"kind", "lam", "mu", "psi", "D_c", "C", "chi", "integrator", "use_dtS"},
                  w, ("kind",))
        mu = _wrap(f"{w}.mu", measure_from_json, t["mu"]) if "mu" in t else None
        if t["kind"] == "relax-to-mu" and mu is None:
            mu = vspace
        psi = None
        if "psi" in t:
            p = _keys(t["psi"], {"C"}, f"{w}.psi")
            psi = psi_example(_num(p, "C", f"{w}.psi", 2.0))
        turning = _wrap(w, TurningOperatorSpec, t["kind"], _num(t, "lam", w, 1.0, nonneg=True), mu, psi,
                        None, _num(t, "D_c", w, 1.0), _num(t, "C", w, 1.0), _num(t, "chi", w, 0.0),
                        t.get("integrator", "euler"), bool(t.get("use_dtS", True)))
    scaling = ScalingSpec()
    if "scaling" in k:
        s = _keys(k["scaling"], {"kind", "eps", "kernel_rescale"}, f"{where}.scaling")
        scaling = _wrap(f"{where}.scaling", ScalingSpec, s.get("kind", "none"),
                        _num(s, "eps", f"{where}.scaling", 1.0), bool(s.get("kernel_rescale", False)))
    accel = None
    if "accel" in k:
        a = _keys(k["accel"], {"a", "F", "scheme"}, f"{where}.accel")
        accel = _wrap(f"{where}.accel", AccelSpec, _num(a, "a", where, 1.0), a.get("F", 1.0),
                      a.get("scheme", "remap"))
    transport = k.get("transport", "upwind")
    if transport not in ("upwind", "spectral"):
        raise ValidationError(f"{where}.transport: unknown scheme {transport!r}")
    signal, s_ic = (None, None)
    if "signal" in k:
        signal, s_ic = parse_signal(k["signal"], f"{where}.signal")
    split = _num(k, "split_rate", where, 0.1, positive=True)
    if split > 0.5:
        raise ValidationError(f"{where}.split_rate: must not exceed 0.5")
    if turning is None and accel is None:
        raise ValidationError(f"{where}: needs a 'turning' or an 'accel' section")
    return KineticSetup(vspace, turning, scaling, accel, transport, split, signal, s_ic)


def parse_sweep(obj, where="sweep") -> SweepPlan:
    s = _keys(obj, {"pairing", "eps_list", "final_time", "cells", "nv", "norm", "params", "split_rate"},
              where, ("pairing",))
    if s["pairing"] not in PAIRINGS:
        raise ValidationError(f"{where}.pairing: unknown pairing {s['pairing']!r}")
    kw = {k: s[k] for k in ("eps_list", "final_time", "cells", "nv", "norm", "params", "split_rate") if k in s}
    if "eps_list" in kw:
        kw["eps_list"] = tuple(kw["eps_list"])
    return _wrap(where, SweepPlan, s["pairing"], **kw)


@dataclass
class CorrectionSpec:
    pairing: str = "relax-mu"
    eps: float = 0.1
    cells: int = 512
    nv: int = 32
    final_time: float = 0.5
    split_rate: float = 0.1


def parse_correction(obj, where="correction") -> CorrectionSpec:
    c = _keys(obj, {"pairing", "eps", "cells", "nv", "final_time", "split_rate"}, where)
    pairing = c.get("pairing", "relax-mu")
    if pairing not in ("relax-mu", "accel-parabolic"):
        raise ValidationError(f"{where}.pairing: must be 'relax-mu' or 'accel-parabolic'")
    eps = _num(c, "eps", where, 0.1, positive=True)
    if eps > 1:
        raise ValidationError(f"{where}.eps: must lie in (0, 1]")
    cells, nv = int(_num(c, "cells", where, 512, positive=True)), int(_num(c, "nv", where, 32, positive=True))
    if cells < 8 or nv < 2:
        raise ValidationError(f"{where}: needs cells >= 8 and nv >= 2")
    return CorrectionSpec(pairing, eps, cells, nv, _num(c, "final_time", where, 0.5, positive=True),
                          _num(c, "split_rate", where, 0.1, positive=True))


@dataclass
class CheckSpec:
    measure: VelocityMeasure
    betas: np.ndarray
    moment_orders: tuple = (2, 4)
    psi_C: float | None = None


def parse_check(obj, where="check") -> CheckSpec:
    c = _keys(obj, {"measure", "betas", "moment_orders", "psi"}, where, ("measure",))
    mu = _wrap(f"{where}.measure", measure_from_json, c["measure"])
    b = c.get("betas", {"min": -50.0, "max": 50.0, "num": 1001})
    if isinstance(b, Mapping):
        bb = _keys(b, {"min", "max", "num"}, f"{where}.betas")
        lo, hi = _num(bb, "min", where, -50.0), _num(bb, "max", where, 50.0)
        num = int(_num(bb, "num", where, 1001, positive=True))
        if not lo < hi or num < 2:
            raise ValidationError(f"{where}.betas: need min < max and num >= 2")
        betas = np.linspace(lo, hi, num)
    else:
        betas = _wrap(f"{where}.betas", np.asarray, b, dtype=float)
        if betas.ndim != 1 or betas.size == 0 or not np.all(np.isfinite(betas)):
            raise ValidationError(f"{where}.betas: expected a list of finite numbers")
    orders = tuple(int(o) for o in c.get("moment_orders", (2, 4)))
    if any(o < 1 for o in orders):
        raise ValidationError(f"{where}.moment_orders: orders must be positive")
    psi_C = None
    if "psi" in c:
        p = _keys(c["psi"], {"C"}, f"{where}.psi")
        psi_C = _num(p, "C", f"{where}.psi", 2.0, positive=True)
    return CheckSpec(mu, betas, orders, psi_C)


@dataclass
class CoefficientCase:
    label: str
    measure: VelocityMeasure
    lam: float
    a: float | None = None
    n: int | None = None


def parse_coefficients(obj, where="coefficients") -> list:
    c = _keys(obj, {"cases"}, where, ("cases",))
    if not isinstance(c["cases"], list) or not c["cases"]:
        raise ValidationError(f"{where}.cases: expected a non-empty list")
    out = []
    for i, case in enumerate(c["cases"]):
        w = f"{where}.cases[{i}]"
        k = _keys(case, {"label", "measure", "lam", "a", "n"}, w, ("measure", "lam"))
        out.append(CoefficientCase(str(k.get("label", f"case{i}")),
                                   _wrap(f"{w}.measure", measure_from_json, k["measure"]),
                                   _num(k, "lam", w, positive=True),
                                   _num(k, "a", w, positive=True) if "a" in k else None,
                                   int(_num(k, "n", w, positive=True)) if "n" in k else None))
    return out


@dataclass
class OutputSpec:
    dir: str
    snapshot_every: float | None = None
    formats: tuple = ("csv", "jsonl")


def parse_output(obj, name: str, where="output") -> OutputSpec:
    o = _keys(obj or {}, {"dir", "snapshot_every", "formats"}, where)
    fmts = tuple(o.get("formats", ("csv", "jsonl")))
    for f in fmts:
        if f not in FORMATS:
            raise ValidationError(f"{where}.formats: unknown format {f!r}")
    every = _num(o, "snapshot_every", where, positive=True) if "snapshot_every" in o else None
    return OutputSpec(str(o.get("dir", os.path.join("fluxlim-out", name))), every, fmts)


# ---------------------------------------------------------------- top level

@dataclass
class ExperimentConfig:
    """Validated experiment. Build with :meth:`from_dict` or :func:`load_config`."""

    name: str
    mode: str
    output: OutputSpec
    description: str = ""
    grid: SpatialGrid | None = None
    ic: ICSpec | None = None
    model: ModelSpec | None = None
    signal_ic: ICSpec | None = None
    run: RunSpec | None = None
    kinetic: KineticSetup | None = None
    sweep: SweepPlan | None = None
    correction: CorrectionSpec | None = None
    check: CheckSpec | None = None
    coefficients: list | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, obj: Mapping) -> "ExperimentConfig":
        d = _keys(obj, _TOP, "config", ("name", "mode"))
        name, mode = d["name"], d["mode"]
        if not isinstance(name, str) or not name or "/" in name:
            raise ValidationError("config.name: expected a non-empty string without '/'")
        if mode not in MODES:
            raise ValidationError(f"config.mode: unknown mode {mode!r}; known: {', '.join(MODES)}")
        for k in _REQUIRED[mode]:
            if k not in d:
                raise ValidationError(f"config: mode {mode!r} needs a {k!r} section")
        cfg = cls(name, mode, parse_output(d.get("output"), name), str(d.get("description", "")),
                  raw=json.loads(json.dumps(obj)))
        if mode in ("macro", "kinetic"):
            cfg.grid = parse_grid(d["grid"])
            cfg.ic = parse_ic(d["ic"])
            cfg.run = parse_run(d["run"])
            c0 = cfg.ic(cfg.grid)
            if np.any(c0 < 0):
                raise ValidationError("ic: initial density must be nonnegative")
            if not np.sum(c0) > 0:
                raise ValidationError("ic: initial mass must be positive")
        if mode == "macro":
            cfg.model, cfg.signal_ic = parse_model(d["model"])
            if cfg.model.diffusion is not None and cfg.model.diffusion.family == "fsg" \
                    and cfg.grid.dimension != 1:
                raise ValidationError("model.diffusion_flux: fsg is one-dimensional")
        if mode == "kinetic":
            cfg.kinetic = parse_kinetic(d["kinetic"])
            if cfg.kinetic.vspace.dimension != cfg.grid.dimension:
                raise ValidationError("kinetic.velocity: dimension differs from the grid")
        if mode == "sweep":
            cfg.sweep = parse_sweep(d["sweep"])
        if mode == "correction":
            cfg.correction = parse_correction(d["correction"])
        if mode == "check":
            cfg.check = parse_check(d["check"])
        if mode == "coeff-table":
            cfg.coefficients = parse_coefficients(d["coefficients"])
        return cfg

    @property
    def conservative(self) -> bool:
        """True when the run has no cell kinetics (``f_c = 0``)."""
        return self.model is None or not self.model.reaction.active

    @property
    def dynamic(self) -> bool:
        return self.mode in ("macro", "kinetic", "sweep", "correction")


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(obj)

