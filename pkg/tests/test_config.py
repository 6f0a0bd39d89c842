import math

import numpy as np
import pytest

from rdpi.config import BUNDLED, ConfigError, bundled_config, load_config, parse_config
from rdpi.sim import DISTURBANCE_D0, REFERENCE_R, disturbance_scenario, reference_scenario

MINIMAL = """
[plant]
c = 1.25
L = 2*pi
[control]
D = 1
poles = -0.5, -0.6, -0.7, -0.8
"""


def _problems(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return dict(info.value.problems)


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_match_builtin_scenarios(name):
    cfg = bundled_config(name)
    sc = cfg.scenario()
    ref = reference_scenario() if name == "reference" else disturbance_scenario()
    assert sc.name == name
    assert (sc.D, sc.poles, sc.J_sim, sc.dt, sc.T) == (ref.D, ref.poles, ref.J_sim, ref.dt, ref.T)
    assert sc.profile.is_constant and sc.profile.value == 1.25 and sc.profile.L == pytest.approx(2 * math.pi)
    t = np.linspace(0, 90, 181)
    assert np.array_equal(sc.r.sample(t), ref.r.sample(t))
    assert np.array_equal(sc.d0.sample(t), ref.d0.sample(t))
    x = np.linspace(0, sc.profile.L, 7)
    assert np.allclose(sc.y0(x), ref.y0(x)) and np.allclose(sc.g(x), ref.g(x))


def test_bundled_signal_texts():
    assert bundled_config("reference").r_text == REFERENCE_R
    assert bundled_config("disturbance").d0_text == DISTURBANCE_D0


def test_minimal_config_defaults(tmp_path):
    p = tmp_path / "mine.ini"
    p.write_text(MINIMAL)
    cfg = load_config(p)
    assert cfg.J_sim == 10 and cfg.dt == 0.005 and cfg.T == 90 and cfg.formats == ("csv",)
    assert cfg.scenario().name == "mine"
    assert cfg.scenario().r(50.0) == 0.0


def test_sampled_profile():
    cfg = parse_config(MINIMAL.replace("c = 1.25", "c = 1 + 0.5*sin(x)"))
    assert not cfg.profile.is_constant
    x = np.linspace(0, cfg.L, 5)
    assert np.allclose(cfg.profile(x), 1 + 0.5 * np.sin(x), atol=1e-9)


def test_missing_required_fields():
    probs = _problems("[plant]\nc = 1\n")
    assert "plant.L" in probs
    assert "control" in probs


def test_missing_required_key_in_present_section():
    probs = _problems(MINIMAL.replace("D = 1\n", ""))
    assert probs == {"control.D": "required field is missing"}


def test_unknown_keys_and_sections():
    probs = _problems(MINIMAL + "gain = 3\n[extra]\nx = 1\n")
    assert probs["control.gain"] == "unknown key"
    assert probs["extra"] == "unknown section"


def test_all_problems_are_reported_together():
    bad = MINIMAL.replace("L = 2*pi", "L = -1").replace("poles = -0.5, -0.6, -0.7, -0.8", "poles = -0.5, 0.3")
    bad += "[simulation]\ndt = 0.003\nJ_sim = 2.5\n[output]\nformats = csv, png\n"
    with pytest.raises(ConfigError) as info:
        parse_config(bad)
    fields = [f for f, _ in info.value.problems]
    for f in ("plant.L", "control.poles", "simulation.dt", "simulation.J_sim", "output.formats"):
        assert f in fields
    assert "plant.L:" in str(info.value) and "png" in str(info.value)


@pytest.mark.parametrize(
    "patch, field",
    [
        ("[simulation]\ndt = 0.3\n", "simulation.dt"),  # does not divide D
        ("[simulation]\nT = 1\n", "simulation.T"),  # horizon not beyond D
        ("[simulation]\ny0 = sqrt(x) + __class__\n", "simulation.y0"),
        ("[simulation]\ny0 = 1/(x - x)\n", "simulation.y0"),
        ("[signals]\nr = 0:10 const(1)\n", "signals.r"),
        ("[signals]\nd0 = banana\n", "signals.d0"),
        ("[plant]\nmesh_size = 20\n", "plant.mesh_size"),
    ],
)
def test_field_errors_are_named(patch, field):
    text = MINIMAL
    sec = patch.split("]")[0] + "]"
    if sec in text:
        text = text.replace(sec + "\n", patch)
    else:
        text += patch
    assert field in _problems(text)


def test_poles_validation():
    assert "control.poles" in _problems(MINIMAL.replace("-0.6", "-0.5"))
    assert "control.poles" in _problems(MINIMAL.replace("-0.6", "oops"))
    assert "control.poles" in _problems(MINIMAL.replace("-0.5, -0.6, -0.7, -0.8", ""))


def test_syntax_error_and_missing_file(tmp_path):
    assert "file" in _problems("not an ini file")
    with pytest.raises(ConfigError) as info:
        load_config(tmp_path / "absent.ini")
    assert info.value.problems[0][0] == "file"


def test_unknown_bundled_name():
    with pytest.raises(ConfigError):
        bundled_config("nope")
