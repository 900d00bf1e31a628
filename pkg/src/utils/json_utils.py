#!/usr/bin/env python3
"""
JSON Utilities for Parameter Files and Reports

This module provides centralized JSON handling for coalbranch:

1. Loading and dumping parameter files for both parameter spaces
2. Validation against the versioned schemas in schemas/<type>/v1.0
3. Error messages that name the offending field path

Used by the CLI commands and by the tests.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import jsonschema

from src.models.errors import ParamsFormatError, StructuralError
from src.models.params import (
    BranchingParams,
    CoalescentParams,
    DomainTag,
    measures_from_lists,
)

logger = logging.getLogger(__name__)

SCHEMA_DIR = Path(__file__).resolve().parents[2] / "schemas"
SCHEMA_VERSION = "v1.0"

Params = Union[BranchingParams, CoalescentParams]

_schema_cache: Dict[str, Dict[str, Any]] = {}


def load_schema(schema_type: str, version: str = SCHEMA_VERSION) -> Dict[str, Any]:
    """Load schemas/<schema_type>/<version>/schema.json (cached)."""
    key = f"{schema_type}/{version}"
    if key not in _schema_cache:
        path = SCHEMA_DIR / schema_type / version / "schema.json"
        with open(path, "r") as f:
            _schema_cache[key] = json.load(f)
        logger.debug(f"Loaded schema {path}")
    return _schema_cache[key]


def _field_path(error: jsonschema.exceptions.ValidationError) -> str:
    return ".".join(str(p) for p in error.absolute_path) or "<root>"


def validate_against_schema(data: Any, schema_type: str) -> None:
    """
    Validate data against a named schema.

    Raises:
        ParamsFormatError: naming the field path of the first violation
    """
    schema = load_schema(schema_type)
    validator = jsonschema.Draft7Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        raise ParamsFormatError(first.message, field=_field_path(first))


def detect_kind(data: Dict[str, Any]) -> str:
    """'branching' for (B, c, mu) files, 'coalescent' for (rho, Q) files."""
    if not isinstance(data, dict):
        raise ParamsFormatError("Parameter file must hold a JSON object")
    if "B" in data or "mu" in data:
        return "branching"
    if "rho" in data or "Q" in data:
        return "coalescent"
    raise ParamsFormatError("Cannot tell parameter kind: expected keys B/c/mu or rho/Q")


def _check_d(data: Dict[str, Any], matrix_key: str, vector_keys) -> int:
    d = data["d"]
    rows = data[matrix_key]
    if len(rows) != d:
        raise StructuralError(f"{matrix_key}: expected {d} rows, got {len(rows)}")
    for k, row in enumerate(rows):
        if len(row) != d:
            raise StructuralError(f"{matrix_key}.{k}: expected {d} entries, got {len(row)}")
    for key in vector_keys:
        if len(data[key]) != d:
            raise StructuralError(f"{key}: expected {d} entries, got {len(data[key])}")
    return d


def params_to_dict(p: Params) -> Dict[str, Any]:
    return p.to_dict()


def params_from_dict(data: Dict[str, Any], kind: Optional[str] = None) -> Params:
    """
    Build parameters from a decoded JSON object.

    Args:
        data: Decoded JSON object
        kind: 'branching' or 'coalescent'; detected from the keys when omitted
    """
    kind = kind or detect_kind(data)
    validate_against_schema(data, kind)

    def atoms(raw):
        return [[(a["point"], a["weight"]) for a in per_type] for per_type in raw]

    if kind == "branching":
        d = _check_d(data, "B", ("c", "mu"))
        return BranchingParams(
            B=data["B"],
            c=data["c"],
            mu=measures_from_lists(atoms(data["mu"]), d, DomainTag.POSITIVE_ORTHANT),
        )
    if kind == "coalescent":
        d = _check_d(data, "rho", ("Q",))
        return CoalescentParams(
            rho=data["rho"],
            Q=measures_from_lists(atoms(data["Q"]), d, DomainTag.UNIT_CUBE),
        )
    raise ParamsFormatError(f"Unknown parameter kind '{kind}'")


def load_json(path: Union[str, Path]) -> Any:
    try:
        with open(path, "r") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ParamsFormatError(f"Invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}", field=str(path))


def load_params(path: Union[str, Path], kind: Optional[str] = None) -> Params:
    data = load_json(path)
    params = params_from_dict(data, kind)
    logger.debug(f"Loaded {type(params).__name__} (d={params.d}) from {path}")
    return params


def dump_json(data: Any, path: Union[str, Path]) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2)


def dump_params(p: Params, path: Union[str, Path]) -> None:
    dump_json(params_to_dict(p), path)
