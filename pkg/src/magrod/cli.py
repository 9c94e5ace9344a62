"""Command-line driver: ``magrod <run-kind> --config <path> [options]``.

Every run writes into one directory: CSV tables, JSON snapshots of the
solutions at detected events, ``events.log``, ``summary.txt`` and
``manifest.txt``.  Exit status is 0 on success, 2 for an invalid scenario,
3 when the solver failed before producing anything and 4 when the outputs
are incomplete (they are kept and the manifest says so).
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .bvp import make_mesh
from .codim2 import trace_codim2
from .config import RUN_KINDS, ConfigError, Scenario, fmt_number, parse_config, write_config
from .continuation import StepControl, continue_branch, switch_branch
from .eigen import eigen_init, track_eigenvalues
from .oracles import chi_roots, unperturbed_spectrum
from .records import RunDirectory, emit_plot_script, export_solution, load_snapshot
from .stationary import PARAM_NAMES, StationarySystem, trivial_solution

log = logging.getLogger("magrod")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PARTIAL = 0, 2, 3, 4

BRANCH_COLUMNS = ("index", "B", "omega", "measure1", "measure2", "defect", "det_sign", "event")

# branch end reasons that mean the requested range was not covered
_INCOMPLETE = ("step underflow",)


class PartialRun(RuntimeError):
    """Some outputs were written but the run could not finish."""


def _step(sc: Scenario) -> StepControl:
    s = sc.solver
    return StepControl(s["step_initial"], s["step_min"], s["step_max"])


def _meta(sc: Scenario, **extra) -> dict:
    p = sc.rod_params()
    meta = {
        "run": sc.kind,
        "params": ", ".join(f"{k}={fmt_number(getattr(p, k))}" for k in PARAM_NAMES),
        "solver": ", ".join(f"{k}={fmt_number(v)}" for k, v in sc.solver.items()),
    }
    meta.update({k: v for k, v in extra.items() if v is not None})
    return meta


def _start_solution(sc: Scenario):
    start = sc.run.get("start", "trivial")
    if start == "trivial":
        mesh = make_mesh(sc.solver["mesh_intervals"], sc.solver["degree"])
        return trivial_solution(sc.rod_params(), mesh)
    sol = load_snapshot(sc.resolve(start))
    if sol.n != 18:
        raise ConfigError(f"[run] start: {start!r} is not an equilibrium snapshot")
    return sol


def _bounds(sc):
    return (sc.run["param_min"], sc.run["param_max"])


def _branch_rows(branch):
    marks = {}
    for ev in branch.events:
        marks.setdefault(max(ev.index - 1, 0), []).append(ev.kind)
    rows = []
    for i, pt in enumerate(branch.points):
        m = pt.monitors
        rows.append(
            [
                i,
                pt.params[branch.param],
                pt.params["B"],
                pt.params["omega"],
                m.get("measure1"),
                m.get("measure2"),
                m.get("defect"),
                int(pt.det_sign),
                "+".join(marks.get(i, [])),
            ]
        )
    return rows


def _branch_columns(branch):
    cols = list(BRANCH_COLUMNS)
    if branch.param not in ("B", "omega"):
        cols.insert(1, branch.param)
    return cols


def _write_branch(rd: RunDirectory, sc, branch, events: list, summary: list):
    cols = _branch_columns(branch)
    rows = _branch_rows(branch)
    if branch.param in ("B", "omega"):
        rows = [r[:1] + r[2:] for r in rows]
    note = None if rows else "no points"
    rd.table("branch", f"branch_{branch.label}.csv", cols, rows, _meta(sc, label=branch.label, param=branch.param, end=branch.reason, note=note))
    if not rows:
        summary.append(f"branch {branch.label}: no points ({branch.reason})")
    else:
        summary.append(f"branch {branch.label}: {len(rows)} points, ended by {branch.reason}")
    for k, ev in enumerate(branch.events, start=1):
        name = f"{branch.label}_{ev.kind}{k}"
        info = " ".join(f"{key}={_fmt_info(v)}" for key, v in sorted(ev.data.items()) if key in ("nullity", "multiplicity", "lambda_i"))
        events.append(f"branch={branch.label} kind={ev.kind} {ev.param}={fmt_number(ev.value)} {info}".rstrip())
        summary.append(f"  {ev.kind} at {ev.param} = {ev.value:.6f}" + (f" ({info})" if info else ""))
        if sc.output["snapshots"] == "json":
            rd.snapshot(f"{name}.json", ev.solution)
    if branch.points and sc.output["snapshots"] == "json":
        rd.snapshot(f"{branch.label}_end.json", branch.points[-1].solution)


def _fmt_info(v):
    return fmt_number(v) if isinstance(v, float) else str(v)


# -- run kinds ---------------------------------------------------------------


def _run_buckling(sc, rd, events, summary, threads):
    p = sc.rod_params()
    roots = chi_roots(sc.run["n"], p.R, p.f)
    rows = [[k, r.beta, r.B_f1, r.B_scaled] for k, r in enumerate(roots, start=1)]
    rd.table("roots", "buckling_roots.csv", ("k", "beta", "B_f1", "B"), rows, _meta(sc))
    summary += [f"root {k}: beta = {r.beta:.6f}, B = {r.B_scaled:.6f}" for k, r in enumerate(roots, start=1)]


def _run_trivial_eigs(sc, rd, events, summary, threads):
    modes = unperturbed_spectrum(sc.rod_params(), sc.run["n"])
    rows = [[k, m.family, m.order, m.value] for k, m in enumerate(modes, start=1)]
    rd.table("spectrum", "trivial_spectrum.csv", ("k", "family", "order", "lambda_i"), rows, _meta(sc))
    summary += [f"mode {k}: lambda_i = {m.value:.8f} ({m.family} {m.order})" for k, m in enumerate(modes, start=1)]


def _continue(sc, start, label, bounds, direction, max_points):
    return continue_branch(
        StationarySystem(),
        start,
        sc.run["param"],
        bounds,
        step=_step(sc),
        direction=direction,
        max_points=max_points,
        tol=sc.solver["tol"],
        label=label,
    )


def _run_continue(sc, rd, events, summary, threads):
    start = _start_solution(sc)
    br = _continue(sc, start, sc.run["label"], _bounds(sc), sc.run["direction"], sc.solver["max_points"])
    _write_branch(rd, sc, br, events, summary)
    incomplete = br.reason in _INCOMPLETE
    k = sc.run["switch_bp"]
    if k:
        bps = br.events_of("BP")
        if k > len(bps):
            raise PartialRun(f"switch_bp = {k} but only {len(bps)} branch points were found")
        new = switch_branch(br, bps[k - 1], sc.run["branch_direction"], sc.run["which_null"], tol=sc.solver["tol"])
        sub = _continue(sc, new, f"{sc.run['label']}_bp{k}", _bounds(sc), 1.0, sc.run["branch_max_points"])
        _write_branch(rd, sc, sub, events, summary)
        incomplete |= sub.reason in _INCOMPLETE
    if incomplete:
        raise PartialRun("continuation stopped before the end of the range")


def _run_diagram(sc, rd, events, summary, threads):
    start = _start_solution(sc)
    trunk = _continue(sc, start, "trivial", _bounds(sc), sc.run["direction"], sc.solver["max_points"])
    bps = trunk.events_of("BP")
    summary.append("branch points: " + (", ".join(f"{ev.value:.6f}" for ev in bps) or "none"))
    _write_branch(rd, sc, trunk, events, summary)
    if not sc.run["follow"] or not bps:
        return
    jobs = []
    for k, ev in enumerate(bps, start=1):
        nulls = (0, 1) if sc.run["both_nulls"] and ev.data.get("nullity", 1) >= 2 else (0,)
        for which in nulls:
            jobs.append((f"b{k}" + ("" if len(nulls) == 1 else "ab"[which]), ev, which))

    def follow(job):
        label, ev, which = job
        new = switch_branch(trunk, ev, sc.run["branch_direction"], which, tol=sc.solver["tol"])
        return _continue(sc, new, label, _bounds(sc), 1.0, sc.run["branch_max_points"])

    failures = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [pool.submit(follow, job) for job in jobs]
        for job, fut in zip(jobs, futures):
            try:
                _write_branch(rd, sc, fut.result(), events, summary)
            except Exception as exc:  # keep the other branches
                failures.append(f"{job[0]}: {exc}")
                summary.append(f"branch {job[0]}: failed ({exc})")
    if failures:
        raise PartialRun("; ".join(failures))


def _run_eigen_init(sc, rd, events, summary, threads):
    base = _start_solution(sc)
    pairs = eigen_init(base, sc.run["n_modes"], sc.run["eigen_kind"], tol=sc.solver["tol"])
    rows = [[k, pr.lambda_r, pr.lambda_i] for k, pr in enumerate(pairs, start=1)]
    rd.table("eigenvalues", "eigenvalues.csv", ("mode", "lambda_r", "lambda_i"), rows, _meta(sc))
    for k, pr in enumerate(pairs, start=1):
        summary.append(f"mode {k}: lambda = {pr.lambda_r:.10g} + {pr.lambda_i:.10g} i")
        if sc.output["snapshots"] == "json":
            rd.snapshot(f"eigenpair{k}.json", pr.solution)
    if len(pairs) < sc.run["n_modes"]:
        raise PartialRun(f"found {len(pairs)} of {sc.run['n_modes']} modes")


def _run_track(sc, rd, events, summary, threads):
    base = _start_solution(sc)
    pairs = eigen_init(base, sc.run["n_modes"], sc.run["eigen_kind"], tol=sc.solver["tol"])
    param = sc.run["param"]
    paths = track_eigenvalues(pairs, param, _bounds(sc), step=_step(sc), direction=sc.run["direction"], max_points=sc.solver["max_points"], tol=sc.solver["tol"])
    rows = []
    for k, path in enumerate(paths, start=1):
        marks = {}
        for ev in path.events:
            marks.setdefault(max(ev.index - 1, 0), []).append(ev.kind)
            events.append(f"mode={k} kind={ev.kind} {param}={fmt_number(ev.value)} lambda_i={fmt_number(ev.data['lambda_i'])}")
            summary.append(f"mode {k}: {ev.kind} at {param} = {ev.value:.6f}")
        for i, (x, lr, li) in enumerate(path.samples):
            rows.append([k, x, lr, li, "+".join(marks.get(i, []))])
        for w in path.warnings:
            summary.append(f"mode {k}: warning: {w}")
    rd.table("eigenpath", "eigenpaths.csv", ("mode", param, "lambda_r", "lambda_i", "event"), rows, _meta(sc, param=param))
    if len(pairs) < sc.run["n_modes"]:
        raise PartialRun(f"found {len(pairs)} of {sc.run['n_modes']} modes")


def _run_codim2(sc, rd, events, summary, threads):
    seed = load_snapshot(sc.resolve(sc.run["seed"]))
    b0, b1, w0, w1 = (tuple(sc.run["box"]) + (None,) * 4)[:4]
    if None in (b0, b1, w0, w1):
        raise ConfigError("[run] box needs four numbers: B_min, B_max, omega_min, omega_max")
    gammas = sc.run["gammas"] or (seed.params.get("gamma", sc.rod_params().gamma),)
    kind = sc.run["curve"]
    # the extended systems are solved to 1e-9 at best, see the codim2 module
    tol = max(sc.solver["tol"], 1e-9)

    def trace(g):
        return trace_codim2(kind, seed, box=((b0, b1), (w0, w1)), gamma=g, step=_step(sc), max_points=sc.solver["max_points"], tol=tol)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        curves = list(pool.map(trace, gammas))
    for g, curve in zip(gammas, curves):
        rows = [[i, B, w, li] for i, (B, w, li) in enumerate(curve.points)]
        exits = "; ".join(f"({fmt_number(B)}, {fmt_number(w)})" for B, w in curve.exits) or "none"
        meta = _meta(sc, curve=kind, gamma=fmt_number(g), closed=str(curve.closed).lower(), exits=exits, ends=", ".join(curve.reasons))
        rd.table("codim2", f"codim2_{kind}_gamma{g:g}.csv", ("index", "B", "omega", "lambda_i"), rows, meta)
        shape = "closed" if curve.closed else "open"
        summary.append(f"{kind} at gamma = {g:g}: {shape} curve, {len(rows)} points, exits {exits}")
        events.append(f"curve={kind} gamma={fmt_number(g)} closed={str(curve.closed).lower()} ends={','.join(curve.reasons)}")


_RUNNERS = {
    "buckling-roots": _run_buckling,
    "trivial-eigs": _run_trivial_eigs,
    "continue": _run_continue,
    "eigen-init": _run_eigen_init,
    "track-eigs": _run_track,
    "codim2": _run_codim2,
    "diagram": _run_diagram,
}


def run_scenario(sc: Scenario, threads: int = 1) -> int:
    """Execute a scenario and return the process exit status."""
    rd = RunDirectory(sc.output["dir"], __version__)
    rd.text("scenario", "scenario.cfg", write_config(sc))
    events: list[str] = []
    summary: list[str] = [f"magrod {__version__}: {sc.kind}"]
    status, code = "complete", EXIT_OK
    try:
        _RUNNERS[sc.kind](sc, rd, events, summary, threads)
    except ConfigError:
        raise
    except PartialRun as exc:
        status, code = f"partial: {exc}", EXIT_PARTIAL
    except Exception as exc:  # solver failures of any kind end up here
        log.error("solver failure: %s", exc)
        partial = any(kind not in ("scenario",) for kind, _ in rd.artifacts)
        status = f"{'partial' if partial else 'failed'}: {type(exc).__name__}: {exc}"
        code = EXIT_PARTIAL if partial else EXIT_SOLVER
    summary.append(f"status: {status}")
    rd.text("events", "events.log", "\n".join(events) + ("\n" if events else ""))
    rd.text("summary", "summary.txt", "\n".join(summary) + "\n")
    rd.write_manifest(status)
    return code


# -- entry point -------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="magrod", description="Continuation runs for a current-carrying rod in a magnetic field.")
    ap.add_argument("--version", action="version", version=f"magrod {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in RUN_KINDS:
        p = sub.add_parser(kind, help=f"{kind} run")
        p.add_argument("--config", required=True, help="scenario file")
        p.add_argument("--out", help="output directory (overrides [output] dir)")
        p.add_argument("--mesh-intervals", type=int, help="collocation intervals")
        p.add_argument("--tol", type=float, help="Newton tolerance")
        p.add_argument("--threads", type=int, default=1, help="worker threads for independent sub-runs")
        p.add_argument("-v", "--verbose", action="store_true")
    p = sub.add_parser("export", help="write the profile of a stored snapshot")
    p.add_argument("rundir")
    p.add_argument("snapshot")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p = sub.add_parser("plot-script", help="emit a matplotlib script for a run directory")
    p.add_argument("rundir")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "export":
        try:
            print(export_solution(args.rundir, args.snapshot, args.format, args.out))
        except (KeyError, FileNotFoundError) as exc:
            print(f"magrod: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    if args.command == "plot-script":
        print(emit_plot_script(args.rundir))
        return EXIT_OK
    try:
        sc = parse_config(args.config)
        if sc.kind != args.command:
            raise ConfigError(f"config describes a {sc.kind} run, not {args.command}", args.config)
        if args.out:
            sc.output = dict(sc.output, dir=args.out)
        if args.mesh_intervals is not None:
            if args.mesh_intervals < 4:
                raise ConfigError("--mesh-intervals must be at least 4")
            sc.solver = dict(sc.solver, mesh_intervals=args.mesh_intervals)
        if args.tol is not None:
            if not args.tol > 0:
                raise ConfigError("--tol must be positive")
            sc.solver = dict(sc.solver, tol=args.tol)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        code = run_scenario(sc, args.threads)
    except ConfigError as exc:
        print(f"magrod: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(sc.output["dir"])
    print((out / "summary.txt").read_text(), end="")
    return code


if __name__ == "__main__":
    sys.exit(main())
