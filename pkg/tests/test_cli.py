import csv
import hashlib
import json

import numpy as np
import pytest

from fluxlim.cli import EXIT_SOLVER, EXIT_VALIDATION, main
from fluxlim.config import ExperimentConfig
from fluxlim.presets import PRESET_NAMES, get_preset


def small_macro(name="small", **model):
    cfg = get_preset("rh-front")
    cfg["name"] = name
    cfg["grid"]["cells"] = 128
    cfg["run"] = {"final_time": 0.3, "front_every": 0.05, "amplitudes": [1.0]}
    cfg["output"] = {"snapshot_every": 0.1, "formats": ["csv", "jsonl", "svg"]}
    if model:
        cfg["model"]["diffusion_flux"]["params"].update(model)
    return cfg


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_presets_lists_all(capsys):
    assert main(["presets"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1 + len(PRESET_NAMES) == 13
    for name in PRESET_NAMES:
        assert any(line.startswith(name) for line in lines)


def test_every_preset_validates():
    for name in PRESET_NAMES:
        cfg = ExperimentConfig.from_dict(get_preset(name))
        assert cfg.name == name


def test_macro_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", write_cfg(tmp_path, small_macro()), "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"snapshots.csv", "fronts.csv", "diagnostics.jsonl", "snapshots.svg",
            "config.json", "summary.json", "manifest.json"} <= names
    rows = read_csv(out / "snapshots.csv")
    assert rows[0] == ["t", "x", "c"]
    assert len(rows) == 1 + 4 * 128
    summary = json.loads((out / "summary.json").read_text())
    assert summary["max_mass_drift"] <= 1e-12 and summary["min_c"] >= -1e-10
    assert "finished" in capsys.readouterr().out


def test_manifest_checksums(tmp_path):
    out = tmp_path / "out"
    assert main(["run", write_cfg(tmp_path, small_macro()), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    listed = {f["file"] for f in manifest["files"]}
    assert listed == {p.name for p in out.iterdir()} - {"manifest.json"}
    for f in manifest["files"]:
        data = (out / f["file"]).read_bytes()
        assert len(data) == f["bytes"]
        assert hashlib.sha256(data).hexdigest() == f["sha256"]


def test_runs_are_byte_identical(tmp_path):
    path = write_cfg(tmp_path, small_macro())
    assert main(["run", path, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", path, "--out", str(tmp_path / "b")]) == 0
    for name in ("snapshots.csv", "fronts.csv", "diagnostics.jsonl", "summary.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_negative_diffusion_rejected_without_output(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", write_cfg(tmp_path, small_macro(D_c=-1.0)), "--out", str(out)])
    assert code == EXIT_VALIDATION
    assert not out.exists()
    assert "D_c" in capsys.readouterr().err


def test_unknown_key_is_named(tmp_path, capsys):
    cfg = small_macro()
    cfg["run"]["finale_time"] = 1.0
    out = tmp_path / "out"
    assert main(["run", write_cfg(tmp_path, cfg), "--out", str(out)]) == EXIT_VALIDATION
    assert "finale_time" in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize("mutate,needle", [
    (lambda c: c.update(mode="bogus"), "mode"),
    (lambda c: c.pop("grid"), "grid"),
    (lambda c: c["ic"].update(height=-1.0), "nonnegative"),
    (lambda c: c["output"].update(formats=["xlsx"]), "xlsx"),
    (lambda c: c["grid"].update(cells="many"), "cells"),
])
def test_validation_messages(tmp_path, capsys, mutate, needle):
    cfg = small_macro()
    mutate(cfg)
    assert main(["run", write_cfg(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
    assert needle in capsys.readouterr().err


def test_bad_json_and_missing_target(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["run", str(p)]) == EXIT_VALIDATION
    assert main(["run", "no-such-preset-or-file"]) == EXIT_VALIDATION
    capsys.readouterr()


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_check_mode_discrete_measure(tmp_path):
    m = tmp_path / "two.json"
    m.write_text(json.dumps({"kind": "discrete", "atoms": [[-1, 0.5], [1, 0.5]]}))
    out = tmp_path / "chk"
    assert main(["check", str(m), "--out", str(out)]) == 0
    rows = read_csv(out / "g_table.csv")
    assert rows[0][:3] == ["beta", "G", "tanh"]
    G = np.array([float(r[1]) for r in rows[1:]])
    th = np.array([float(r[2]) for r in rows[1:]])
    assert np.max(np.abs(G - th)) <= 1e-12
    report = json.loads((out / "check_report.json").read_text())
    assert report["g_properties"]["passed"]


def test_kinetic_mode(tmp_path):
    cfg = {
        "name": "kin", "mode": "kinetic",
        "grid": {"lower": -2.0, "upper": 2.0, "cells": 64, "boundary": "periodic"},
        "ic": {"type": "gaussian", "center": 0.0, "width": 0.4, "mass": 1.0},
        "run": {"final_time": 0.2},
        "kinetic": {"velocity": {"kind": "lebesgue", "resolution": 8},
                    "turning": {"kind": "relax-uniform", "lam": 1.0, "integrator": "exact"},
                    "scaling": {"kind": "parabolic", "eps": 0.5}},
        "output": {"snapshot_every": 0.1, "formats": ["csv", "kinetic-csv"]},
    }
    out = tmp_path / "kin"
    assert main(["run", write_cfg(tmp_path, cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "moments.csv")
    assert rows[0] == ["t", "x", "c", "V"] and len(rows) == 1 + 3 * 64
    assert len(read_csv(out / "kinetic.csv")) == 1 + 64 * 8
    summary = json.loads((out / "summary.json").read_text())
    assert summary["max_mass_drift"] <= 1e-12


def test_solver_failure_exit_code(tmp_path, capsys):
    cfg = small_macro()
    cfg["model"]["diffusion_flux"] = {"family": "degenerate-singular", "params": {"c_max": 1.0}}
    out = tmp_path / "o"
    assert main(["run", write_cfg(tmp_path, cfg), "--out", str(out)]) == EXIT_SOLVER
    assert not out.exists()
    assert "solver failure" in capsys.readouterr().err
