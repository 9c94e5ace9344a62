import json

import numpy as np
import pytest

from magrod.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, EXIT_SOLVER, main
from magrod.oracles import chi_roots
from magrod.bvp import make_mesh
from magrod.model import set_preset
from magrod.records import csv_body, emit_plot_script, export_solution, load_snapshot, read_csv, read_manifest, save_snapshot
from magrod.stationary import trivial_solution


def _cfg(tmp_path, body, name="s.cfg"):
    p = tmp_path / name
    p.write_text(body)
    return str(p)


ROOTS = "[params]\npreset = set\n\n[run]\nkind = buckling-roots\nn = 3\n"
SHORT = """\
[params]
preset = set

[run]
kind = continue
param_min = 0
param_max = {hi}
label = trivial
{extra}

[solver]
mesh_intervals = 12
step_initial = 0.05
step_max = 0.1
"""


def test_buckling_roots_run(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["buckling-roots", "--config", _cfg(tmp_path, ROOTS), "--out", str(out)]) == EXIT_OK
    status, items = read_manifest(out)
    assert status == "complete"
    kinds = {k for k, _ in items}
    assert {"roots", "scenario", "events", "summary"} <= kinds
    meta, cols, rows = read_csv(out / "buckling_roots.csv")
    assert cols == ["k", "beta", "B_f1", "B"]
    expected = [r.B_scaled for r in chi_roots(3, 0.5526, 500.5639)]
    assert np.allclose([r[3] for r in rows], expected, rtol=1e-12)
    assert "root 1" in capsys.readouterr().out


def test_config_error_exit_code(tmp_path, capsys):
    path = _cfg(tmp_path, ROOTS + "colour = red\n")
    assert main(["buckling-roots", "--config", path, "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert ":7:" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_kind_mismatch_is_config_error(tmp_path):
    assert main(["diagram", "--config", _cfg(tmp_path, ROOTS)]) == EXIT_CONFIG


def test_empty_range_completes(tmp_path):
    out = tmp_path / "e"
    assert main(["continue", "--config", _cfg(tmp_path, SHORT.format(hi=0, extra="")), "--out", str(out)]) == EXIT_OK
    meta, cols, rows = read_csv(out / "branch_trivial.csv")
    assert rows == [] and meta["note"] == "no points"


def test_replay_is_byte_identical(tmp_path):
    path = _cfg(tmp_path, SHORT.format(hi=0.3, extra=""))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["continue", "--config", path, "--out", str(a)]) == EXIT_OK
    assert main(["continue", "--config", str(a / "scenario.cfg"), "--out", str(b)]) == EXIT_OK
    assert csv_body(a / "branch_trivial.csv") == csv_body(b / "branch_trivial.csv")
    assert (a / "scenario.cfg").read_text() == (b / "scenario.cfg").read_text().replace(str(b), str(a))


def test_export_and_plot_script(tmp_path):
    out = tmp_path / "a"
    assert main(["continue", "--config", _cfg(tmp_path, SHORT.format(hi=0.3, extra="")), "--out", str(out)]) == EXIT_OK
    _, items = read_manifest(out)
    snaps = [rel for kind, rel in items if kind == "snapshot"]
    assert snaps
    sid = snaps[-1].rsplit("/", 1)[-1][:-5]
    sol = load_snapshot(out / snaps[-1])
    prof = export_solution(out, sid)
    _, cols, rows = read_csv(prof)
    assert cols[:4] == ["s", "x", "y", "z"] and len(rows) == len(sol.mesh.nodes)
    assert np.allclose([r[3] for r in rows], sol.y[:, 2])
    data = json.loads(export_solution(out, sid, fmt="json").read_text())
    assert np.allclose(data["z"], sol.y[:, 2])
    with pytest.raises(KeyError):
        export_solution(out, "nope")
    assert main(["export", str(out), "nope"]) == EXIT_CONFIG
    script = emit_plot_script(out)
    text = script.read_text()
    compile(text, str(script), "exec")
    assert "branch_trivial.csv" in text and "measure1" in text


def test_plot_script_for_empty_directory(tmp_path):
    text = emit_plot_script(tmp_path).read_text()
    assert "warning" in text
    compile(text, "p.py", "exec")


def test_solver_failure_exit_code(tmp_path):
    # a far-from-equilibrium start: Newton cannot converge and nothing is written
    sol = trivial_solution(set_preset(), make_mesh(12, 4))
    sol.y = sol.y + np.random.default_rng(0).normal(scale=50.0, size=sol.y.shape)
    save_snapshot(tmp_path / "bad.json", sol)
    body = SHORT.format(hi=0.3, extra="").replace("label = trivial", "label = trivial\nstart = bad.json")
    out = tmp_path / "f"
    assert main(["continue", "--config", _cfg(tmp_path, body), "--out", str(out)]) == EXIT_SOLVER
    status, _ = read_manifest(out)
    assert status.startswith("failed")


def test_partial_run_exit_code(tmp_path):
    out = tmp_path / "p"
    body = SHORT.format(hi=0.3, extra="switch_bp = 2")
    assert main(["continue", "--config", _cfg(tmp_path, body), "--out", str(out)]) == EXIT_PARTIAL
    status, items = read_manifest(out)
    assert status.startswith("partial") and any(k == "branch" for k, _ in items)
