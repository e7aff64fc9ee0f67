"""Built-in experiment configs, runnable at desk scale."""
from __future__ import annotations

import copy

from .errors import ValidationError

_LINE = {"lower": -4.0, "upper": 4.0, "cells": 512, "boundary": "no-flux"}
_BOX = {"type": "indicator", "a": -1.0, "b": 1.0, "height": 1.0}
_TWO_ATOMS = {"kind": "discrete", "atoms": [[-1.0, 0.5], [1.0, 0.5]]}

_PRESETS = {
    "rh-front": {
        "description": "relativistic heat flux: front speed C, amplitudes 1 and 2",
        "mode": "macro", "grid": _LINE, "ic": _BOX,
        "model": {"diffusion_flux": {"family": "relativistic", "params": {"D_c": 1.0, "C": 1.0}}},
        "run": {"final_time": 1.5, "front_every": 0.015, "amplitudes": [1.0, 2.0],
                "speed_window": [0.5, 1.5]},
        "output": {"snapshot_every": 0.5, "formats": ["csv", "jsonl", "svg"]},
    },
    "pm-contrast": {
        "description": "porous-medium flux: amplitude-dependent front speed",
        "mode": "macro", "grid": _LINE, "ic": _BOX,
        "model": {"diffusion_flux": {"family": "porous-medium", "params": {"D_c": 1.0, "m": 1.0}}},
        "run": {"final_time": 1.5, "front_every": 0.015, "amplitudes": [1.0, 2.0],
                "speed_window": [0.5, 1.5]},
        "output": {"snapshot_every": 0.5, "formats": ["csv", "jsonl", "svg"]},
    },
    "ks-classic": {
        "description": "linear diffusion with linear chemotaxis and a produced signal",
        "mode": "macro", "grid": dict(_LINE, cells=256),
        "ic": {"type": "gaussian", "center": 0.0, "width": 0.5, "mass": 1.0},
        "model": {"diffusion_flux": {"family": "linear-diffusion", "params": {"D_c": 1.0}},
                  "taxis_flux": {"family": "linear-taxis", "params": {"chi": 1.0}},
                  "signal": {"D_v": 1.0, "alpha": 1.0, "beta": 1.0}},
        "run": {"final_time": 1.0},
        "output": {"snapshot_every": 0.25, "formats": ["csv", "jsonl", "svg"]},
    },
    "ksfs-tanh": {
        "description": "linear diffusion with tanh-saturated chemotaxis",
        "mode": "macro", "grid": dict(_LINE, cells=256),
        "ic": {"type": "gaussian", "center": 0.0, "width": 0.5, "mass": 1.0},
        "model": {"diffusion_flux": {"family": "linear-diffusion", "params": {"D_c": 1.0}},
                  "taxis_flux": {"family": "tanh-taxis", "params": {"chi": 1.0, "C": 1.0}},
                  "signal": {"D_v": 1.0, "alpha": 1.0, "beta": 1.0}},
        "run": {"final_time": 1.0},
        "output": {"snapshot_every": 0.25, "formats": ["csv", "jsonl", "svg"]},
    },
    "new-fullfl": {
        "description": "flux-limited diffusion and flux-limited taxis, speed bound C + chi",
        "mode": "macro", "grid": _LINE, "ic": _BOX,
        "model": {"diffusion_flux": {"family": "relativistic", "params": {"D_c": 1.0, "C": 1.0}},
                  "taxis_flux": {"family": "psi-saturated", "params": {"chi": 0.5, "C": 1.0}},
                  "signal": {"D_v": 1.0, "alpha": 0.1, "beta": 1.0,
                             "initial": {"type": "linear", "slope": 3.0, "intercept": 12.0}}},
        "run": {"final_time": 1.5, "front_every": 0.015, "speed_window": [0.5, 1.5]},
        "output": {"snapshot_every": 0.5, "formats": ["csv", "jsonl", "svg"]},
    },
    "sweep-relax-mu": {
        "description": "relaxation to two atoms against linear diffusion",
        "mode": "sweep", "sweep": {"pairing": "relax-mu"},
        "output": {"formats": ["csv", "jsonl", "svg"]},
    },
    "sweep-pastmotion": {
        "description": "past-motion kernel against diffusion-taxis with Phi from Psi",
        "mode": "sweep", "sweep": {"pairing": "past-motion"},
        "output": {"formats": ["csv", "jsonl", "svg"]},
    },
    "sweep-accel": {
        "description": "velocity acceleration, parabolic scaling, drift-diffusion limit",
        "mode": "sweep", "sweep": {"pairing": "accel-parabolic"},
        "output": {"formats": ["csv", "jsonl", "svg"]},
    },
    "hyp-drift": {
        "description": "velocity acceleration, hyperbolic scaling, pure drift limit",
        "mode": "sweep", "sweep": {"pairing": "accel-hyperbolic"},
        "output": {"formats": ["csv", "jsonl", "svg"]},
    },
    "fsg-tanh": {
        "description": "exponential-expansion equation with G = tanh against the kinetic run",
        "mode": "correction", "correction": {"pairing": "relax-mu", "eps": 0.1},
    },
    "coeff-table": {
        "description": "closed-form macroscopic coefficients",
        "mode": "coeff-table",
        "coefficients": {"cases": [
            {"label": "two-atoms-lam2", "measure": _TWO_ATOMS, "lam": 2.0},
            {"label": "lebesgue-lam1", "measure": {"kind": "lebesgue", "resolution": 32}, "lam": 1.0},
            {"label": "accel-a1-lam1-n1", "measure": {"kind": "lebesgue", "resolution": 32},
             "lam": 1.0, "a": 1.0, "n": 1},
        ]},
    },
    "psi-phi-check": {
        "description": "G properties, moment discriminator and the Phi-Psi correspondence",
        "mode": "check",
        "check": {"measure": _TWO_ATOMS, "psi": {"C": 2.0}},
    },
}

PRESET_NAMES = tuple(_PRESETS)


def get_preset(name: str) -> dict:
    """A fresh copy of the named preset config."""
    if name not in _PRESETS:
        raise ValidationError(f"unknown preset {name!r}; run 'fluxlim presets' for the list")
    cfg = copy.deepcopy(_PRESETS[name])
    return {"name": name, **cfg}


def list_presets() -> str:
    """Text table of preset names, modes and descriptions."""
    width = max(len(n) for n in _PRESETS)
    lines = [f"{'name':<{width}}  {'mode':<11}  description"]
    for n, p in _PRESETS.items():
        lines.append(f"{n:<{width}}  {p['mode']:<11}  {p['description']}")
    return "\n".join(lines)
