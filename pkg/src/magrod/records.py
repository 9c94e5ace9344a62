"""On-disk artifacts of a run: CSV tables, JSON snapshots, manifest, plot script.

CSV files start with ``#`` metadata lines (``# key: value``), followed by a
header row and data rows.  The ``created`` metadata line carries a
timestamp and is the only part of a file that may differ between two runs
of the same scenario.  Column sets:

``branch``
    index, <param>, B, omega, measure1, measure2, defect, det_sign, event
``eigenpath``
    mode, <param>, lambda_r, lambda_i, event
``codim2``
    index, B, omega, lambda_i
``profile``
    s, x, y, z, F1, F2, F3, M1, M2, M3, d11, ..., d33
``roots`` / ``spectrum``
    see the writers in the CLI module.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
from pathlib import Path

import numpy as np

from .bvp import BvpSolution, Mesh
from .config import fmt_number

PROFILE_COLUMNS = ("s", "x", "y", "z", "F1", "F2", "F3", "M1", "M2", "M3") + tuple(
    f"d{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)
)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_number(float(v))
    return str(v)


def write_csv(path, columns, rows, meta: dict | None = None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}: {value}\n")
        fh.write(f"# created: {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path):
    """Return ``(meta, columns, rows)``; numeric cells become floats."""
    meta, lines = {}, []
    with Path(path).open(newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader, [])
    rows = []
    for raw in reader:
        row = []
        for cell in raw:
            try:
                row.append(float(cell))
            except ValueError:
                row.append(cell)
        rows.append(row)
    return meta, columns, rows


def csv_body(path) -> str:
    """File text without the ignorable ``created`` line."""
    return "".join(line for line in Path(path).read_text().splitlines(True) if not line.startswith("# created:"))


# -- snapshots ---------------------------------------------------------------


def solution_to_dict(sol: BvpSolution) -> dict:
    return {
        "mesh": {"nodes": sol.mesh.nodes.tolist(), "degree": sol.mesh.degree},
        "params": {k: float(v) for k, v in sol.params.items()},
        "y": sol.y.tolist(),
        "K": sol.K.tolist(),
    }


def solution_from_dict(data: dict) -> BvpSolution:
    mesh = Mesh(np.asarray(data["mesh"]["nodes"], dtype=float), int(data["mesh"]["degree"]))
    return BvpSolution(mesh, np.asarray(data["y"], dtype=float), np.asarray(data["K"], dtype=float), dict(data["params"]))


def save_snapshot(path, sol: BvpSolution) -> Path:
    path = Path(path)
    path.write_text(json.dumps(solution_to_dict(sol), separators=(",", ":")))
    return path


def load_snapshot(path) -> BvpSolution:
    return solution_from_dict(json.loads(Path(path).read_text()))


def profile_rows(sol: BvpSolution, s=None):
    """Equilibrium fields at the mesh nodes (or at ``s``), one row per station."""
    if s is None:
        s, Y = sol.mesh.nodes, sol.y[:, :18]
    else:
        s = np.asarray(s, dtype=float)
        Y = sol(s)[:, :18]
    return [[float(si), *map(float, yi)] for si, yi in zip(s, Y)]


# -- manifest ----------------------------------------------------------------


class RunDirectory:
    """One output directory with its manifest of artifacts."""

    def __init__(self, root, version: str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.version = version
        self.artifacts: list[tuple[str, str]] = []  # (kind, relative path)

    def path(self, name: str) -> Path:
        return self.root / name

    def add(self, kind: str, path) -> Path:
        rel = Path(path).relative_to(self.root).as_posix()
        self.artifacts.append((kind, rel))
        return Path(path)

    def table(self, kind: str, name: str, columns, rows, meta=None) -> Path:
        meta = {"magrod-version": self.version, "table": kind, **(meta or {})}
        return self.add(kind, write_csv(self.path(name), columns, rows, meta))

    def snapshot(self, name: str, sol: BvpSolution) -> Path:
        return self.add("snapshot", save_snapshot(self.path(name), sol))

    def text(self, kind: str, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        return self.add(kind, p)

    def write_manifest(self, status: str) -> Path:
        lines = [f"# magrod {self.version}", f"status = {status}"]
        lines += [f"{kind} {rel}" for kind, rel in self.artifacts]
        p = self.path("manifest.txt")
        p.write_text("\n".join(lines) + "\n")
        return p


def read_manifest(root) -> tuple[str, list]:
    status, items = "", []
    for line in (Path(root) / "manifest.txt").read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        if line.startswith("status ="):
            status = line.split("=", 1)[1].strip()
        else:
            kind, rel = line.split(" ", 1)
            items.append((kind, rel))
    return status, items


def export_solution(root, snapshot_id: str, fmt: str = "csv", out=None) -> Path:
    """Write the profile of snapshot ``snapshot_id`` from run directory ``root``.

    ``snapshot_id`` is the file stem listed in the manifest.  CSV output
    holds one row per mesh node with :data:`PROFILE_COLUMNS`; JSON output
    is the snapshot itself.
    """
    if fmt not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    root = Path(root)
    _, items = read_manifest(root)
    names = {Path(rel).stem: rel for kind, rel in items if kind == "snapshot"}
    if snapshot_id not in names:
        raise KeyError(f"unknown snapshot id {snapshot_id!r}")
    sol = load_snapshot(root / names[snapshot_id])
    out = Path(out) if out is not None else root / f"{snapshot_id}.profile.{fmt}"
    if fmt == "json":
        out.write_text(json.dumps({c: [r[i] for r in profile_rows(sol)] for i, c in enumerate(PROFILE_COLUMNS)}))
        return out
    return write_csv(out, PROFILE_COLUMNS, profile_rows(sol), {"table": "profile", "snapshot": snapshot_id})


# -- plot script -------------------------------------------------------------

_PLOT_HEAD = '''"""Plots for the tables in this directory (generated by magrod)."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent


def load(name):
    with open(HERE / name, newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    data = {}
    for rec in csv.DictReader(rows):
        for key, value in rec.items():
            try:
                data.setdefault(key, []).append(float(value))
            except ValueError:
                data.setdefault(key, []).append(value)
    return data

'''


def emit_plot_script(root, name: str = "plot_results.py") -> Path:
    """Write a matplotlib script that draws every table found in ``root``.

    Branch tables become measure1-vs-B diagrams, eigenpath tables become
    lambda_r and lambda_i panels, codim2 tables become curves in the
    (B, omega) plane.  The toolkit itself does not import matplotlib.
    """
    root = Path(root)
    groups = {"branch": [], "eigenpath": [], "codim2": []}
    for p in sorted(root.glob("*.csv")):
        meta, columns, _ = read_csv(p)
        kind = meta.get("table")
        if kind in groups:
            groups[kind].append((p.name, meta, columns))
    out = root / name
    if not any(groups.values()):
        out.write_text(
            '"""Plots for this directory (generated by magrod)."""\n'
            "# warning: no branch, eigenpath or codim2 tables were found; nothing to plot.\n"
        )
        return out
    body = [_PLOT_HEAD]
    if groups["branch"]:
        body.append("fig, ax = plt.subplots()")
        for fname, meta, columns in groups["branch"]:
            label = meta.get("label", fname)
            body.append(f"d = load({fname!r})")
            body.append(f"ax.plot(d['B'], d['measure1'], label={label!r})")
        body += ["ax.set_xlabel('B')", "ax.set_ylabel('measure1')", "ax.legend()", "fig.savefig(HERE / 'diagram.png')", ""]
    if groups["eigenpath"]:
        body.append("fig, (axr, axi) = plt.subplots(2, 1, sharex=True)")
        for fname, meta, columns in groups["eigenpath"]:
            param = meta.get("param", columns[1])
            body += [
                f"d = load({fname!r})",
                "for m in sorted(set(d['mode'])):",
                "    idx = [i for i, v in enumerate(d['mode']) if v == m]",
                f"    axr.plot([d[{param!r}][i] for i in idx], [d['lambda_r'][i] for i in idx], label=f'mode {{int(m)}}')",
                f"    axi.plot([d[{param!r}][i] for i in idx], [d['lambda_i'][i] for i in idx])",
            ]
            body.append(f"axi.set_xlabel({param!r})")
        body += ["axr.set_ylabel('lambda_r')", "axi.set_ylabel('lambda_i')", "axr.legend()", "fig.savefig(HERE / 'eigenpaths.png')", ""]
    if groups["codim2"]:
        body.append("fig, ax = plt.subplots()")
        for fname, meta, columns in groups["codim2"]:
            label = f"{meta.get('curve', '')} gamma={meta.get('gamma', '')}"
            body.append(f"d = load({fname!r})")
            body.append(f"ax.plot(d['B'], d['omega'], label={label!r})")
        body += ["ax.set_xlabel('B')", "ax.set_ylabel('omega')", "ax.legend()", "fig.savefig(HERE / 'codim2.png')", ""]
    body.append("plt.show()\n")
    out.write_text("\n".join(body))
    return out
