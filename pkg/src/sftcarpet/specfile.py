"""Carpet and factor-map specification files (JSON).

Two kinds are accepted::

    {"kind": "carpet", "l": 3, "m": 2,
     "rectangles": [{"x": 1, "y": 0}, ...],
     "transitions": [[0, 1, 0], ...]}            # optional, default full

    {"kind": "symbolic", "x_alphabet": ["1", "2"],
     "x_transitions": [[1, 1], [1, 0]],
     "y_alphabet": [...], "y_transitions": [...], # optional, derived if absent
     "factor_map": {"1": "a", "2": "b"}}

Optional ``name`` and ``description`` strings are carried along.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .dimension import CarpetSpec, carpet_to_symbolic
from .errors import EmptySubshift, InconsistentMatrix, InvalidFactorMap, SchemaError
from .symdyn import FactorMap, Sft, TransitionMatrix, validate_sft

_MATRIX = {
    "type": "array",
    "minItems": 1,
    "items": {"type": "array", "items": {"enum": [0, 1]}},
}
_SYMBOLS = {"type": "array", "minItems": 1, "items": {"type": "string"}}
_COMMON = {"kind": {}, "name": {"type": "string"}, "description": {"type": "string"}}

SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                **_COMMON,
                "kind": {"const": "carpet"},
                "l": {"type": "integer", "minimum": 2},
                "m": {"type": "integer", "minimum": 2},
                "rectangles": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "properties": {
                            "x": {"type": "integer", "minimum": 0},
                            "y": {"type": "integer", "minimum": 0},
                        },
                        "required": ["x", "y"],
                        "additionalProperties": False,
                    },
                },
                "transitions": _MATRIX,
            },
            "required": ["kind", "l", "m", "rectangles"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                **_COMMON,
                "kind": {"const": "symbolic"},
                "x_alphabet": _SYMBOLS,
                "x_transitions": _MATRIX,
                "y_alphabet": _SYMBOLS,
                "y_transitions": _MATRIX,
                "factor_map": {"type": "object", "additionalProperties": {"type": "string"}},
                "distinguished": {"type": "string"},
            },
            "required": ["kind", "x_alphabet", "x_transitions", "factor_map"],
            "additionalProperties": False,
        },
    ]
}


@dataclass(frozen=True)
class SpecFile:
    """A validated specification with its derived factor map."""

    kind: str
    name: str
    pi: FactorMap = field(repr=False)
    carpet: CarpetSpec | None = None
    description: str = ""

    @property
    def X(self) -> Sft:
        return self.pi.domain

    @property
    def Y(self) -> Sft:
        return self.pi.codomain


def _square(rows, size: int, what: str) -> TransitionMatrix:
    if len(rows) != size or any(len(r) != size for r in rows):
        raise InconsistentMatrix(f"{what}: expected a {size} x {size} matrix")
    return TransitionMatrix.of(rows)


def _path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def spec_from_dict(data, name: str = "") -> SpecFile:
    """Validate a decoded specification and derive (X, Y, pi)."""
    if not isinstance(data, dict) or data.get("kind") not in ("carpet", "symbolic"):
        raise SchemaError('field "kind": expected "carpet" or "symbolic"')
    branch = SCHEMA["oneOf"][0 if data["kind"] == "carpet" else 1]
    try:
        jsonschema.validate(data, branch)
    except jsonschema.ValidationError as err:
        raise SchemaError(f'field "{_path(err)}": {err.message}') from None
    name = data.get("name", name)
    desc = data.get("description", "")
    if data["kind"] == "carpet":
        rects = [(r["x"], r["y"]) for r in data["rectangles"]]
        matrix = None
        if "transitions" in data:
            matrix = _square(data["transitions"], len(rects), 'field "transitions"')
        try:
            spec = CarpetSpec(data["l"], data["m"], tuple(rects), matrix)
            _, _, pi = carpet_to_symbolic(spec)
        except EmptySubshift as exc:
            raise SchemaError(f'field "transitions": {exc}') from None
        return SpecFile("carpet", name, pi, spec, desc)

    alph = data["x_alphabet"]
    if len(set(alph)) != len(alph):
        raise SchemaError('field "x_alphabet": symbols must be distinct')
    xmat = _square(data["x_transitions"], len(alph), 'field "x_transitions"')
    try:
        X = validate_sft(xmat, alph)
    except EmptySubshift as exc:
        raise SchemaError(f'field "x_transitions": {exc}') from None
    fmap = data["factor_map"]
    if set(fmap) != set(alph):
        raise SchemaError('field "factor_map": must assign every x symbol exactly once')
    dist = data.get("distinguished")
    try:
        if "y_transitions" in data:
            yalph = data.get("y_alphabet")
            if yalph is None:
                raise SchemaError('field "y_alphabet": required with "y_transitions"')
            Y = Sft(tuple(yalph), _square(data["y_transitions"], len(yalph), 'field "y_transitions"'))
            pi = FactorMap(X, Y, fmap, dist)
        else:
            pi = FactorMap.onto_image(X, fmap, data.get("y_alphabet"), dist)
    except InvalidFactorMap as exc:
        raise InconsistentMatrix(f'field "factor_map": {exc}') from None
    except KeyError as exc:
        raise SchemaError(f'field "factor_map": unknown symbol {exc}') from None
    return SpecFile("symbolic", name, pi, None, desc)


def parse_spec(path) -> SpecFile:
    """Read and validate a specification file.

    Raises
    ------
    SchemaError
        Malformed JSON (with line and column) or a field violating the schema.
    InconsistentMatrix
        Matrix dimensions disagree with the alphabets, or the factor map
        sends an allowed step to a forbidden one.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return spec_from_dict(data, path.stem)
