import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynbn import scenario as sc
from dynbn.errors import ScenarioError

seeds = st.integers(0, 2 ** 64 - 1)


def minimal(**extra):
    step = {"variables": [{"id": "x", "dim": 1}], "conditionals": [{"child": "x", "noise_cov": 1.0}]}
    step.update(extra)
    return {"version": 1, "steps": [step]}


def test_parse_minimal():
    s = sc.parse(json.dumps(minimal()))
    assert s.steps[0].variables[0].id == "x"


@pytest.mark.parametrize("doc", [
    {**minimal(), "extra": 1},
    minimal(unknown_key=[]),
    {"version": 2, "steps": []},
    {"steps": [{"variables": [{"id": "x", "dim": 0}]}]},
    {"version": 1, "steps": [{"variables": [{"id": "x"}], "observations": [
        {"family": {"type": "gamma"}, "F": {"x": 1}, "y": 1}]}]},
])
def test_strict_schema_rejects(doc):
    with pytest.raises(ScenarioError):
        sc.parse(json.dumps(doc))


def test_parse_garbage():
    with pytest.raises(ScenarioError):
        sc.parse("{not json")


def test_load_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        sc.load(tmp_path / "absent.json")


@given(st.sampled_from(sc.TEMPLATES), seeds)
def test_round_trip(template, seed):
    s = sc.generate(template, seed)
    assert sc.parse(sc.emit(s)) == s


@pytest.mark.parametrize("template", sc.TEMPLATES)
def test_generation_is_deterministic(template, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    sc.save(sc.generate(template, 99), a)
    sc.save(sc.generate(template, 99), b)
    assert a.read_bytes() == b.read_bytes()
    assert sc.emit(sc.generate(template, 100)) != a.read_text()


def test_unknown_template():
    with pytest.raises(ScenarioError, match="unknown template"):
        sc.generate("nope", 1)


def test_shapes():
    np.testing.assert_array_equal(sc.as_vector(2.0, 3, "v"), [2, 2, 2])
    np.testing.assert_array_equal(sc.as_matrix(2.0, 1, 1, "m"), [[2]])
    with pytest.raises(ScenarioError):
        sc.as_vector([1, 2], 3, "v")
    with pytest.raises(ScenarioError):
        sc.as_matrix([[1, 2]], 2, 2, "m")


def test_dispersal_template_shape():
    s = sc.generate("dispersal-chain", 7)
    assert len(s.steps) == 10
    for t, step in enumerate(s.steps):
        assert step.frontier == [f"m{t}"]
        assert all(o.family.type == "poisson" and o.y == int(o.y) >= 0 for o in step.observations)


def test_growth_template_appends_cliques():
    s = sc.generate("growth", 3)
    sizes = [len(step.variables) for step in s.steps]
    assert sizes == sorted(sizes) and sizes[0] < sizes[-1]
