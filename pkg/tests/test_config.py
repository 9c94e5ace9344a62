import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magrod.config import RUN_KINDS, ConfigError, Scenario, parse_config, parse_config_text, write_config
from magrod.model import RodParams, set_dimensional

PRESET_ROOTS = """\
[params]
preset = set

[run]
kind = buckling-roots
n = 3
"""


def test_preset_scenario():
    sc = parse_config_text(PRESET_ROOTS)
    assert sc.kind == "buckling-roots" and sc.run["n"] == 3
    assert sc.rod_params().R == 0.5526 and sc.rod_params().f == 500.5639
    assert sc.solver["mesh_intervals"] == 40


def test_anisotropy_above_one_rejected():
    text = PRESET_ROOTS.replace("preset = set", "P = 0.001\nR = 1.5")
    with pytest.raises(ConfigError, match="R must lie"):
        parse_config_text(text)


def test_dimensional_block_is_nondimensionalised():
    d = set_dimensional()
    body = "\n".join(f"{k} = {getattr(d, k)!r}" for k in ("L", "A", "E", "EI1", "EI2", "G"))
    text = f"[dimensional]\n{body}\nf = 500.5639\n\n[run]\nkind = buckling-roots\n"
    p = parse_config_text(text).rod_params()
    assert p.P == pytest.approx(0.001, rel=2e-3)
    assert p.R == pytest.approx(0.5526, abs=1e-4)


def test_both_parameter_blocks_rejected():
    text = PRESET_ROOTS + "\n[dimensional]\nL = 1\nA = 1\nE = 1\nEI1 = 1\nEI2 = 1\nG = 1\nf = 1\n"
    with pytest.raises(ConfigError, match="either"):
        parse_config_text(text)


def test_unknown_key_reports_line():
    text = PRESET_ROOTS + "bogus = 1\n"
    with pytest.raises(ConfigError) as info:
        parse_config_text(text, path="s.cfg")
    assert info.value.line == 7
    assert "s.cfg:7" in str(info.value)


@pytest.mark.parametrize(
    "text, match",
    [
        (PRESET_ROOTS.replace("n = 3", "n = three"), "n"),
        (PRESET_ROOTS.replace("kind = buckling-roots", "kind = sweep"), "run kind"),
        (PRESET_ROOTS.replace("[run]\nkind = buckling-roots\n", "[run]\n"), "missing required key 'kind'"),
        (PRESET_ROOTS + "\n[plots]\nx = 1\n", "unknown section"),
        ("x = 1\n" + PRESET_ROOTS, "before the first"),
        (PRESET_ROOTS + "n = 4\n", "n"),
        (PRESET_ROOTS.replace("n = 3", "n = 3\nswitch_bp = 1"), "does not apply"),
        (PRESET_ROOTS + "\n[solver]\nmesh_intervals = 2\n", "mesh_intervals"),
        (PRESET_ROOTS + "\n[solver]\ntol = nan\n", "finite"),
        ("[run]\nkind = diagram\n", "missing \\[params\\]"),
    ],
)
def test_invalid_scenarios(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


def test_referenced_files_must_exist(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[params]\npreset = set\n\n[run]\nkind = codim2\nseed = missing.json\n")
    with pytest.raises(ConfigError, match="not found"):
        parse_config(cfg)
    (tmp_path / "missing.json").write_text("{}")
    assert parse_config(cfg).resolve("missing.json").is_file()


def test_unreadable_file():
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config("/nonexistent/x.cfg")


pos = st.floats(1e-6, 1e3, allow_nan=False, allow_infinity=False)
anyf = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def scenarios(draw):
    params = RodParams(
        P=draw(pos), R=draw(st.floats(1e-3, 1.0)), B=draw(anyf), Gamma=draw(pos), gamma=draw(st.floats(0, 10)), omega=draw(anyf), T=draw(anyf), f=draw(pos)
    )
    kind = draw(st.sampled_from([k for k in RUN_KINDS if k != "codim2"]))
    text = f"[params]\nP = 1\nR = 1\n\n[run]\nkind = {kind}\n"
    sc = parse_config_text(text)
    sc.params = params
    for key, value in list(sc.run.items()):
        if isinstance(value, float):
            sc.run[key] = draw(anyf)
        elif isinstance(value, bool):
            sc.run[key] = draw(st.booleans())
        elif isinstance(value, int):
            sc.run[key] = draw(st.integers(0, 50))
    sc.solver["tol"] = draw(st.floats(1e-14, 1e-4))
    sc.solver["step_initial"] = draw(st.floats(1e-3, 0.05))
    sc.output["dir"] = draw(st.sampled_from(["out", "runs/a", "x-y_z"]))
    return sc


@given(scenarios())
@settings(max_examples=60, deadline=None)
def test_write_parse_round_trip(sc):
    again = parse_config_text(write_config(sc))
    assert again == sc
    assert write_config(again) == write_config(sc)


def test_round_trip_dimensional_and_lists():
    d = set_dimensional()
    sc = Scenario("codim2", dimensional=d, f=2.5, dim_omega=0.3, run={"kind": "codim2", "seed": __file__, "curve": "secondary_pitchfork", "gammas": (0.01, 0.04375), "box": (0.0, 4.0, 0.0, 3.0)})
    sc.solver = parse_config_text(PRESET_ROOTS).solver
    sc.output = {"dir": "o", "snapshots": "none"}
    again = parse_config_text(write_config(sc))
    assert again == sc
