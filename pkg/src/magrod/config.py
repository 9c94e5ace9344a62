"""Scenario files: a sectioned ``key = value`` text format.

Grammar (one construct per line, leading/trailing blanks ignored)::

    file     := { blank | comment | header | entry }
    comment  := ("#" | ";") any text
    header   := "[" section "]"
    entry    := key "=" value

Sections and keys are listed in :data:`SCHEMA`.  Values are floats, ints,
booleans (``true``/``false``), bare strings or comma-separated float lists.
Every entry must sit under a header, a key may appear only once per
section, and unknown sections or keys are rejected with their line number.
Exactly one of ``[params]`` and ``[dimensional]`` describes the rod; a
``[params]`` block may start from ``preset = set`` and override single
groups.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .model import DimensionalParams, ParameterError, RodParams, nondimensionalize, set_preset

RUN_KINDS = ("buckling-roots", "trivial-eigs", "continue", "eigen-init", "track-eigs", "codim2", "diagram")

REQUIRED = object()


def _floats(text: str) -> tuple:
    parts = [t.strip() for t in text.split(",") if t.strip()]
    return tuple(float(t) for t in parts)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARAM_KEYS = {name: (float, None) for name in ("P", "R", "B", "Gamma", "gamma", "omega", "T", "f")}
_PARAM_KEYS["preset"] = (str, None)
_DIM_KEYS = {name: (float, REQUIRED) for name in ("L", "A", "E", "EI1", "EI2", "G", "f")}
_DIM_KEYS.update({name: (float, None) for name in ("rho", "B0", "I_current", "T_dim", "gamma_v", "omega")})

# run-section keys: type, default, kinds that accept the key
_RUN_KEYS = {
    "kind": (str, REQUIRED, RUN_KINDS),
    "n": (int, 3, ("buckling-roots", "trivial-eigs")),
    "n_modes": (int, 5, ("eigen-init", "track-eigs")),
    "eigen_kind": (str, "imag", ("eigen-init", "track-eigs")),
    "start": (str, "trivial", ("continue", "eigen-init", "track-eigs", "diagram")),
    "param": (str, "B", ("continue", "track-eigs", "diagram")),
    "param_min": (float, 0.0, ("continue", "track-eigs", "diagram")),
    "param_max": (float, 1.0, ("continue", "track-eigs", "diagram")),
    "direction": (float, 1.0, ("continue", "track-eigs", "diagram")),
    "label": (str, "branch", ("continue",)),
    "switch_bp": (int, 0, ("continue",)),
    "which_null": (int, 0, ("continue",)),
    "branch_direction": (float, 1.0, ("continue", "diagram")),
    "follow": (_bool, True, ("diagram",)),
    "both_nulls": (_bool, False, ("diagram",)),
    "branch_max_points": (int, 80, ("continue", "diagram")),
    "seed": (str, REQUIRED, ("codim2",)),
    "curve": (str, "secondary_pitchfork", ("codim2",)),
    "gammas": (_floats, (), ("codim2",)),
    "box": (_floats, (0.0, 4.0, 0.0, 8.0), ("codim2",)),
}

_SOLVER_KEYS = {
    "mesh_intervals": (int, 40),
    "degree": (int, 4),
    "tol": (float, 1e-10),
    "step_initial": (float, 0.02),
    "step_min": (float, 1e-7),
    "step_max": (float, 0.1),
    "max_points": (int, 400),
}

_OUTPUT_KEYS = {
    "dir": (str, "magrod-out"),
    "snapshots": (str, "json"),
}

SCHEMA = {
    "params": _PARAM_KEYS,
    "dimensional": _DIM_KEYS,
    "run": {k: v[:2] for k, v in _RUN_KEYS.items()},
    "solver": _SOLVER_KEYS,
    "output": _OUTPUT_KEYS,
}

_CHOICES = {
    ("run", "eigen_kind"): ("imag", "real", "both"),
    ("run", "curve"): ("secondary_pitchfork", "hopf_lambda1", "hopf_lambda2"),
    ("output", "snapshots"): ("json", "none"),
    ("params", "preset"): ("set",),
}


class ConfigError(ValueError):
    """Invalid scenario file; ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass
class Scenario:
    kind: str
    params: RodParams | None = None
    dimensional: DimensionalParams | None = None
    f: float | None = None  # scaling constant used with a dimensional block
    dim_omega: float = 0.0  # whirl rate applied after nondimensionalising
    run: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), compare=False)

    def rod_params(self) -> RodParams:
        if self.params is not None:
            return self.params
        return nondimensionalize(self.dimensional, self.f).with_(omega=self.dim_omega)

    def resolve(self, name: str) -> Path:
        """Path of a referenced input file, relative to the scenario file."""
        p = Path(name)
        return p if p.is_absolute() else self.base_dir / p


def _key_lines(text: str) -> dict:
    """Map (section, key) and section names to their line numbers."""
    where = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            where.setdefault(section, i)
        elif "=" in line:
            where.setdefault((section, line.split("=", 1)[0].strip()), i)
    return where


def _convert(section, key, typ, raw, path, line):
    try:
        value = typ(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key}: {exc}", path, line) from None
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(f"[{section}] {key} must be finite", path, line)
    choices = _CHOICES.get((section, key))
    if choices and value not in choices:
        raise ConfigError(f"[{section}] {key} must be one of {', '.join(choices)}", path, line)
    return value


def parse_config_text(text: str, path=None, base_dir=None) -> Scenario:
    """Validate scenario text; ``path`` only labels error messages."""
    where = _key_lines(text)
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"), strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("entry before the first [section] header", path, exc.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], path, exc.lineno) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc), path) from None

    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", path, where.get(section))
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", path, where.get((section, key)))

    def read(section, key):
        typ, default = SCHEMA[section][key]
        if cp.has_option(section, key):
            return _convert(section, key, typ, cp[section][key], path, where.get((section, key)))
        if default is REQUIRED:
            raise ConfigError(f"missing required key {key!r} in [{section}]", path, where.get(section))
        return default

    if not cp.has_section("run"):
        raise ConfigError("missing [run] section", path)
    kind = read("run", "kind")
    if kind not in RUN_KINDS:
        raise ConfigError(f"run kind must be one of {', '.join(RUN_KINDS)}", path, where.get(("run", "kind")))
    run = {"kind": kind}
    for key, (_, _, kinds) in _RUN_KEYS.items():
        if key == "kind":
            continue
        if kind not in kinds:
            if cp.has_option("run", key):
                raise ConfigError(f"key {key!r} does not apply to run kind {kind}", path, where.get(("run", key)))
            continue
        run[key] = read("run", key)

    solver = {key: read("solver", key) if cp.has_section("solver") else SCHEMA["solver"][key][1] for key in _SOLVER_KEYS}
    output = {key: read("output", key) if cp.has_section("output") else SCHEMA["output"][key][1] for key in _OUTPUT_KEYS}
    if solver["mesh_intervals"] < 4:
        raise ConfigError("[solver] mesh_intervals must be at least 4", path, where.get(("solver", "mesh_intervals")))
    if not 2 <= solver["degree"] <= 7:
        raise ConfigError("[solver] degree must lie in [2, 7]", path, where.get(("solver", "degree")))
    if not 0 < solver["step_min"] <= solver["step_initial"] <= solver["step_max"]:
        raise ConfigError("[solver] need 0 < step_min <= step_initial <= step_max", path, where.get("solver"))

    has_p, has_d = cp.has_section("params"), cp.has_section("dimensional")
    if has_p and has_d:
        raise ConfigError("give either [params] or [dimensional], not both", path, where.get("dimensional"))
    if not (has_p or has_d):
        raise ConfigError("missing [params] or [dimensional] section", path)
    sc = Scenario(kind, run=run, solver=solver, output=output, base_dir=Path(base_dir or "."))
    try:
        if has_p:
            values = {k: read("params", k) for k in cp["params"]}
            preset = values.pop("preset", None)
            if preset is None:
                for name in ("P", "R"):
                    if name not in values:
                        raise ConfigError(f"missing required key {name!r} in [params]", path, where.get("params"))
                sc.params = RodParams(**values)
            else:
                sc.params = set_preset().with_(**values)
        else:
            values = {k: read("dimensional", k) for k in cp["dimensional"]}
            sc.f = values.pop("f")
            sc.dim_omega = values.pop("omega", None) or 0.0
            sc.dimensional = DimensionalParams(**{k: v for k, v in values.items() if v is not None})
            sc.rod_params()
    except ParameterError as exc:
        raise ConfigError(str(exc), path, where.get("params") or where.get("dimensional")) from None

    for key in ("start", "seed"):
        name = run.get(key)
        if name and name != "trivial" and not sc.resolve(name).is_file():
            raise ConfigError(f"[run] {key}: file {name!r} not found", path, where.get(("run", key)))
    return sc


def parse_config(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return parse_config_text(text, path, path.parent)


def fmt_number(v) -> str:
    """17 significant digits: every double survives a write/read cycle."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".17g")


def _fmt_value(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(fmt_number(x) for x in v)
    if isinstance(v, (bool, int, float)):
        return fmt_number(v)
    return str(v)


def write_config(sc: Scenario) -> str:
    """Serialise a scenario; :func:`parse_config_text` inverts it."""
    lines = []
    if sc.params is not None:
        lines.append("[params]")
        lines += [f"{f_.name} = {fmt_number(getattr(sc.params, f_.name))}" for f_ in fields(RodParams)]
    else:
        lines.append("[dimensional]")
        lines += [f"{f_.name} = {fmt_number(getattr(sc.dimensional, f_.name))}" for f_ in fields(DimensionalParams)]
        lines.append(f"f = {fmt_number(sc.f)}")
        lines.append(f"omega = {fmt_number(sc.dim_omega)}")
    for name, table in (("run", sc.run), ("solver", sc.solver), ("output", sc.output)):
        lines.append("")
        lines.append(f"[{name}]")
        for key, value in table.items():
            if isinstance(value, tuple) and not value:
                continue
            lines.append(f"{key} = {_fmt_value(value)}")
    return "\n".join(lines) + "\n"
