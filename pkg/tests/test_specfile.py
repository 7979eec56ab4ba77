from __future__ import annotations

import json

import pytest

from sftcarpet.errors import InconsistentMatrix, SchemaError
from sftcarpet.fixtures import NAMES, fixture_path, load_fixture
from sftcarpet.specfile import parse_spec, spec_from_dict

CARPET = {
    "kind": "carpet", "l": 3, "m": 2,
    "rectangles": [{"x": 1, "y": 0}, {"x": 0, "y": 1}, {"x": 2, "y": 1}],
    "transitions": [[0, 1, 0], [1, 1, 1], [1, 0, 1]],
}


@pytest.mark.parametrize("name", NAMES)
def test_fixtures_load(name):
    sf = load_fixture(name)
    assert sf.name == name
    assert sf.description
    assert parse_spec(fixture_path(name)).pi.symbol_map == sf.pi.symbol_map


def test_carpet_fixture():
    sf = load_fixture("ex5_1")
    assert sf.kind == "carpet"
    assert len(sf.X.alphabet) == 3 and len(sf.Y.alphabet) == 2
    assert sf.carpet.l == 3 and sf.carpet.m == 2


def test_four_symbol_fixture():
    sf = load_fixture("ex5_2")
    assert len(sf.X.alphabet) == 4 and len(sf.Y.alphabet) == 2


def test_carpet_dict():
    sf = spec_from_dict(CARPET, "c")
    assert sf.pi.symbol_map == {"1": "0", "2": "1", "3": "1"}


def test_l_must_exceed_m():
    with pytest.raises(SchemaError, match="l > m"):
        spec_from_dict({**CARPET, "l": 2})


def test_schema_errors_name_the_field():
    with pytest.raises(SchemaError, match='field "rectangles/0"'):
        spec_from_dict({**CARPET, "rectangles": [{"x": 1}]})
    with pytest.raises(SchemaError, match='field "kind"'):
        spec_from_dict({"kind": "sponge"})
    with pytest.raises(SchemaError, match="transitions"):
        spec_from_dict({**CARPET, "transitions": [[0, 2, 0], [1, 1, 1], [1, 0, 1]]})


def test_matrix_size_mismatch():
    with pytest.raises(InconsistentMatrix):
        spec_from_dict({**CARPET, "transitions": [[1, 1], [1, 1]]})
    with pytest.raises(InconsistentMatrix):
        spec_from_dict({"kind": "symbolic", "x_alphabet": ["a", "b"],
                        "x_transitions": [[1, 1]], "factor_map": {"a": "1", "b": "2"}})


def test_factor_map_must_respect_codomain():
    data = {"kind": "symbolic", "x_alphabet": ["a", "b"], "x_transitions": [[1, 1], [1, 1]],
            "factor_map": {"a": "1", "b": "2"},
            "y_alphabet": ["1", "2"], "y_transitions": [[0, 1], [1, 1]]}
    with pytest.raises(InconsistentMatrix):
        spec_from_dict(data)


def test_factor_map_total():
    with pytest.raises(SchemaError, match="factor_map"):
        spec_from_dict({"kind": "symbolic", "x_alphabet": ["a", "b"],
                        "x_transitions": [[1, 1], [1, 1]], "factor_map": {"a": "1"}})


def test_empty_subshift_is_schema_error():
    with pytest.raises(SchemaError):
        spec_from_dict({**CARPET, "transitions": [[0, 1, 0], [0, 0, 1], [0, 0, 0]]})


def test_bad_json_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"kind": "carpet",\n  "l": 3\n')
    with pytest.raises(SchemaError, match="line 3"):
        parse_spec(p)


def test_missing_file(tmp_path):
    with pytest.raises(SchemaError, match="cannot read"):
        parse_spec(tmp_path / "nope.json")


def test_name_defaults_to_stem(tmp_path):
    p = tmp_path / "mine.json"
    p.write_text(json.dumps(CARPET))
    assert parse_spec(p).name == "mine"
