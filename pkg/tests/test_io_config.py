import json

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from onsager_corpora.config import BUILTIN, SchemaError, dump_config, load_config, validate_config
from onsager_corpora.io import read_csv, read_density, write_csv, write_density, write_json
from onsager_corpora.space import Axis, Density, build_space


@given(st.lists(st.floats(min_value=0, max_value=1e300, allow_subnormal=True), min_size=7, max_size=7)
       .filter(lambda v: 0 < sum(v) < 1e300))
def test_density_file_round_trip_is_bit_exact(tmp_path_factory, vals):
    space = build_space([Axis.interval(0, 1)], 7)
    f = Density.normalized(vals, space)
    path = tmp_path_factory.mktemp("d") / "f.txt"
    write_density(path, f, {"b": 3.0})
    g, header = read_density(path, space)
    assert np.array_equal(g.values, f.values)
    assert header["meta"] == {"b": 3.0}


def test_density_file_checks_space(tmp_path):
    s1 = build_space([Axis.periodic()], 4)
    s2 = build_space([Axis.interval(0, 1)], 4)
    write_density(tmp_path / "f.txt", Density.uniform(s1))
    with pytest.raises(ValueError):
        read_density(tmp_path / "f.txt", s2)
    (tmp_path / "bad.txt").write_text("hello\n")
    with pytest.raises(ValueError):
        read_density(tmp_path / "bad.txt")


def test_csv_round_trip_of_floats(tmp_path):
    rows = [(0.1, 1, True, "x"), (1e-300, 2, False, "y")]
    write_csv(tmp_path / "t.csv", ("a", "b", "c", "d"), rows)
    header, body = read_csv(tmp_path / "t.csv")
    assert header == ["a", "b", "c", "d"]
    assert float(body[0][0]) == 0.1 and float(body[1][0]) == 1e-300
    assert body[0][2] == "1"


def test_json_handles_non_finite(tmp_path):
    write_json(tmp_path / "r.json", {"x": float("nan"), "y": np.float64(2.5), "z": np.arange(2)})
    d = json.loads((tmp_path / "r.json").read_text())
    assert d == {"x": "nan", "y": 2.5, "z": [0, 1]}


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_builtins_validate_and_survive_yaml(name, tmp_path):
    cfg = load_config(name)
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg


def test_version_is_mandatory():
    raw = dict(BUILTIN["example3"])
    raw.pop("version")
    with pytest.raises(SchemaError) as exc:
        validate_config(raw)
    assert exc.value.path == "version"


def test_decreasing_schedule_names_b_schedule():
    raw = dict(BUILTIN["example3"], b_schedule=[10, 5])
    with pytest.raises(SchemaError) as exc:
        validate_config(raw)
    assert exc.value.path == "b_schedule"


@pytest.mark.parametrize("patch, path", [
    ({"solver": {"damping": 2}}, "solver.damping"),
    ({"solver": {"bogus": 1}}, "solver.bogus"),
    ({"solver": {"point_seeds": -1}}, "solver.point_seeds"),
    ({"space": {"axes": [{"kind": "interval", "lo": 0, "hi": "pi/x"}]}}, "space.axes[0].hi"),
    ({"analyses": {"concentration": {"eps": 0.1, "candidates": []}}}, "analyses.concentration.candidates"),
])
def test_schema_errors_carry_field_paths(patch, path):
    raw = yaml.safe_load(dump_config(load_config("example3")))
    raw.update(patch)
    with pytest.raises(SchemaError) as exc:
        validate_config(raw)
    assert exc.value.path == path


def test_pi_expressions():
    cfg = validate_config(dict(BUILTIN["example3"]))
    assert cfg["space"]["axes"][0]["hi"] == pytest.approx(np.pi / 2)
