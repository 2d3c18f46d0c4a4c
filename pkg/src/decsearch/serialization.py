"""JSON policy files for discrete FSAs and SK-FSAs.

Floats are written with Python's shortest round-trip representation, so a
loaded policy is bit-identical to the one saved.
"""
from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .fsa import FsaPolicy, Grid
from .skfsa import KernelTransitionFunction, SkFsaPolicy

FSA_FORMAT = "decsearch-fsa"
SKFSA_FORMAT = "decsearch-skfsa"
VERSION = 1


class PolicyFormatError(ValueError):
    """A policy file is malformed or does not match the schema."""


_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_tensor3 = {"type": "array", "items": _matrix}

FSA_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "grid", "robots"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": FSA_FORMAT},
        "version": {"const": VERSION},
        "grid": {
            "type": "object",
            "required": ["bounds", "d"],
            "additionalProperties": False,
            "properties": {"bounds": _matrix, "d": {"type": "integer", "minimum": 1}},
        },
        "robots": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["n_nodes", "ma_probs", "trans_probs"],
                "additionalProperties": False,
                "properties": {"n_nodes": {"type": "integer", "minimum": 1},
                               "ma_probs": _matrix, "trans_probs": _tensor3},
            },
        },
    },
}

SKFSA_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "sigma", "lambda", "robots"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": SKFSA_FORMAT},
        "version": {"const": VERSION},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "lambda": {"type": "number", "minimum": 0},
        "robots": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["n_nodes", "ma_probs", "transitions"],
                "additionalProperties": False,
                "properties": {
                    "n_nodes": {"type": "integer", "minimum": 1},
                    "ma_probs": _matrix,
                    "transitions": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["basis", "weights", "mix"],
                            "additionalProperties": False,
                            "properties": {"basis": _matrix, "weights": _matrix,
                                           "mix": {"type": "number", "minimum": 0, "maximum": 1}},
                        },
                    },
                },
            },
        },
    },
}


def fsa_to_dict(joint) -> dict:
    grid = joint[0].grid
    return {
        "format": FSA_FORMAT,
        "version": VERSION,
        "grid": {"bounds": grid.bounds.tolist(), "d": grid.d},
        "robots": [{"n_nodes": p.n_nodes, "ma_probs": p.ma_probs.tolist(),
                    "trans_probs": p.trans_probs.tolist()} for p in joint],
    }


def skfsa_to_dict(joint, lam: float) -> dict:
    sigma = joint[0].transitions[0].sigma
    robots = []
    for p in joint:
        robots.append({
            "n_nodes": p.n_nodes,
            "ma_probs": p.ma_probs.tolist(),
            "transitions": [{"basis": fn.basis.tolist(), "weights": fn.weights.tolist(),
                             "mix": fn.mix} for fn in p.transitions],
        })
    return {"format": SKFSA_FORMAT, "version": VERSION, "sigma": sigma, "lambda": lam,
            "robots": robots}


def _validate(doc, schema):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise PolicyFormatError(f"{where}: {exc.message}") from None


def fsa_from_dict(doc: dict) -> list:
    _validate(doc, FSA_SCHEMA)
    try:
        grid = Grid(np.array(doc["grid"]["bounds"], dtype=float), doc["grid"]["d"])
        return [FsaPolicy(np.array(r["ma_probs"], dtype=float),
                          np.array(r["trans_probs"], dtype=float), grid) for r in doc["robots"]]
    except ValueError as exc:
        raise PolicyFormatError(str(exc)) from None


def skfsa_from_dict(doc: dict) -> tuple[list, float]:
    """Returns the joint policy and the regulariser it was trained with."""
    _validate(doc, SKFSA_SCHEMA)
    sigma = float(doc["sigma"])
    joint = []
    try:
        for r in doc["robots"]:
            nn = r["n_nodes"]
            fns = []
            for t in r["transitions"]:
                basis = np.array(t["basis"], dtype=float)
                weights = np.array(t["weights"], dtype=float).reshape(nn, -1)
                if basis.size == 0:
                    basis = np.empty((0, 0))
                fns.append(KernelTransitionFunction(nn, sigma, basis, weights, float(t["mix"])))
            joint.append(SkFsaPolicy(np.array(r["ma_probs"], dtype=float), fns))
    except ValueError as exc:
        raise PolicyFormatError(str(exc)) from None
    return joint, float(doc["lambda"])


def save_policy(path, joint, lam: float | None = None) -> None:
    """Write a joint FSA or SK-FSA policy; SK-FSAs also record ``lam``."""
    if isinstance(joint[0], FsaPolicy):
        doc = fsa_to_dict(joint)
    elif isinstance(joint[0], SkFsaPolicy):
        doc = skfsa_to_dict(joint, 0.0 if lam is None else lam)
    else:
        raise TypeError(f"cannot serialise {type(joint[0]).__name__}")
    Path(path).write_text(json.dumps(doc, allow_nan=False) + "\n")


def load_policy(path) -> tuple[str, list]:
    """Read a policy file; returns ``(format, joint_policy)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise PolicyFormatError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise PolicyFormatError("policy file must hold a JSON object")
    fmt = doc.get("format")
    if fmt == FSA_FORMAT:
        return fmt, fsa_from_dict(doc)
    if fmt == SKFSA_FORMAT:
        return fmt, skfsa_from_dict(doc)[0]
    raise PolicyFormatError(f"unknown policy format {fmt!r}")
