"""
Scenario grammar, validation diagnostics and round trips.
"""
from pathlib import Path

import pytest

from config.grammar import ScenarioError, parse_document
from config.scenario import dump_scenario, load_scenario, parse_scenario
from protocol.messages import MessageKind

SCENARIOS = Path(__file__).resolve().parent / "scenarios"


@pytest.mark.parametrize("name", ["registration", "temperature-alert", "incompatible-approach", "warehouse", "desk-sweep"])
def test_dump_then_parse_is_identity(name):
    config = load_scenario(SCENARIOS / f"{name}.cfg")
    again = parse_scenario(dump_scenario(config), base_dir=SCENARIOS)
    assert again == config


def test_dump_writes_every_model_field():
    config = load_scenario(SCENARIOS / "warehouse.cfg")
    doc = parse_document(dump_scenario(config))
    assert set(doc["mac"].entries) == set(type(config.mac).model_fields)
    assert set(doc["channel"].entries) == set(type(config.channel).model_fields)


def test_bundled_matrix_is_loaded():
    config = load_scenario(SCENARIOS / "incompatible-approach.cfg")
    assert not config.matrix.is_compatible("NH3", "HNO3")
    assert config.matrix.is_compatible("NH3", "NaCl")
    assert config.products[6].waypoints == ((19.0, 12.0),)


def test_flavors_select_ncf_variant():
    config = load_scenario(SCENARIOS / "registration.cfg")
    assert config.product_config(1).ncf_kind() == MessageKind.NCF0
    assert config.product_config(2).ncf_kind() == MessageKind.NCF2
    assert config.provision(1).symbol == "NH3"


def test_product_rule_override():
    config = parse_scenario(
        "[rules]\nv_max = 30\n[topology]\nn_nodes = 3\n[product.2]\nv_max = 14\ndelta_v = 0\n"
    )
    assert config.effective_rules(2).v_max == 14
    assert config.effective_rules(2).t_cr == config.rules.t_cr
    assert config.effective_rules(1).v_max == 30


def test_override_ignores_missing_values():
    config = load_scenario(SCENARIOS / "warehouse.cfg")
    changed = config.override(seed=99, trials=None, duration=50.0)
    assert changed.scenario.seed == 99
    assert changed.scenario.trials == config.scenario.trials
    assert changed.scenario.duration == 50.0
    assert config.override() is config


def test_grammar_comments_and_case():
    doc = parse_document("; header\n[Scenario]  \nDuration = 5  # seconds\nboot-jitter = 0.5\n")
    section = doc["scenario"]
    assert section.get("duration") == "5"
    assert section.get("boot_jitter") == "0.5"
    assert section.line_of("boot_jitter") == 4


@pytest.mark.parametrize("text, line, fragment", [
    ("[scenario]\nduration = 5\nduration = 6\n", 3, "duplicate key"),
    ("[scenario]\n[scenario]\n", 2, "duplicate section"),
    ("duration = 5\n", 1, "outside of any section"),
    ("[scenario]\nthis is not an entry\n", 2, "expected"),
    ("[scenario]\nname = x\n\nduration = -1\n", 4, "duration"),
    ("[scenario]\nrouting = ospf\n", 2, "routing"),
    ("[topology]\nn_nodes = 2\n[product.5]\nsymbol = \n", 3, "exceeds"),
    ("[bogus]\nkey = 1\n", 1, "unknown section"),
    ("[mac]\nwindow = 3\n", 2, "unknown key"),
    ("[topology]\nn_nodes = 4\n[operator]\ncommands = 5 explode 2\n", 4, "operator"),
    ("[rules]\nv_min = 0\nv_max = 4\ndelta_v = 3\n", 1, "good band"),
])
def test_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(text, path="bad.cfg")
    assert excinfo.value.line == line
    assert str(excinfo.value).startswith(f"bad.cfg:{line}: ")
    assert fragment in str(excinfo.value)


def test_symbol_must_be_in_matrix(tmp_path):
    (tmp_path / "matrix.txt").write_text("NH3 HNO3 incompatible\n")
    path = tmp_path / "s.cfg"
    path.write_text("[topology]\nn_nodes = 2\n[matrix]\npath = matrix.txt\n[product.1]\nsymbol = XeF9\n")
    with pytest.raises(ScenarioError) as excinfo:
        load_scenario(path)
    assert excinfo.value.line == 6
    assert "XeF9" in str(excinfo.value)


def test_missing_matrix_file(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text("[scenario]\nname = m\n[matrix]\npath = nowhere.txt\n")
    with pytest.raises(ScenarioError) as excinfo:
        load_scenario(path)
    assert excinfo.value.line == 4
    assert "nowhere.txt" in str(excinfo.value)


def test_missing_scenario_file(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "absent.cfg")


def test_sweep_section():
    config = load_scenario(SCENARIOS / "desk-sweep.cfg")
    assert config.sweep.densities == (50, 100, 200)
    assert config.sweep.protocols == ("ours", "rrr")
    assert config.scenario.application is False
    with pytest.raises(ScenarioError):
        parse_scenario("[sweep]\ndensities = \n")
