"""Report envelope, schema validation, and internal consistency checks.

Every CLI run emits one JSON report: a fixed envelope (schema tag,
version, command echo, inputs, tolerances, wall time) around a results
object tagged with its kind. Numeric claims are {"value": x, "tol": t}
pairs so a report is checkable without rerunning the solver: validation
re-derives the residual from the embedded form and compares against ten
times the stated tolerance.
"""
from __future__ import annotations

import json
import math
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np
from jsonschema import Draft202012Validator

from . import __version__
from .angles import make_context
from .gd import FORM_VERTICES, cell_graph, _assemble_cell
from .networks import ConductanceForm, _trace_matrix
from .renorm import _boundary_matrix, _replicate_matrix
from .structure import build_structure, level_vertices

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "version", "command", "wall_time_s",
                 "inputs", "tolerances", "results"],
    "properties": {
        "schema": {"const": "fr-1"},
        "version": {"type": "string"},
        "command": {"type": "array", "items": {"type": "string"}},
        "wall_time_s": {"type": "number", "minimum": 0},
        "inputs": {"type": "object"},
        "tolerances": {"type": "object", "minProperties": 1},
        "results": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"type": "string"}},
        },
    },
    "additionalProperties": False,
}

_VALIDATOR = Draft202012Validator(REPORT_SCHEMA)

KINDS = ("structure", "harmonic", "relations", "resistance", "flows",
         "gd_structure", "gd_harmonic", "gd_rhos")


def claim(value: float, tol: float) -> dict:
    """A numeric claim: the value together with its tolerance."""
    return {"value": float(value), "tol": float(tol)}


def form_to_json(form: ConductanceForm) -> dict:
    return {
        "vertices": [str(v) for v in form.vertices],
        "edges": [[str(x), str(y), w] for x, y, w in form.pairs()],
    }


def _form_matrix_from_json(data: dict) -> tuple[list[str], np.ndarray]:
    verts = list(data["vertices"])
    index = {v: i for i, v in enumerate(verts)}
    mat = np.zeros((len(verts), len(verts)))
    for x, y, w in data["edges"]:
        mat[index[x], index[y]] += float(w)
        mat[index[y], index[x]] += float(w)
    return verts, mat


def render_report(report: Mapping) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_report(path: str, report: Mapping) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_report(report))


def _check_claim(node, name: str, errors: list[str]) -> Optional[float]:
    if not isinstance(node, dict) or "value" not in node or "tol" not in node:
        errors.append(f"{name}: numeric claim must carry value and tol")
        return None
    if not (isinstance(node["value"], (int, float))
            and isinstance(node["tol"], (int, float))):
        errors.append(f"{name}: value and tol must be numbers")
        return None
    return float(node["value"])


def _recompute_ms_residual(results: dict, errors: list[str]) -> None:
    harmonic = results.get("harmonic")
    if not isinstance(harmonic, dict):
        errors.append("harmonic results missing the harmonic block")
        return
    eta = _check_claim(harmonic.get("eta"), "eta", errors)
    resid = harmonic.get("residual")
    stated = _check_claim(resid, "residual", errors)
    if eta is None or stated is None:
        return
    tol = float(resid["tol"])
    ctx_data = results.get("structure", {}).get("ctx")
    if not isinstance(ctx_data, dict):
        errors.append("harmonic results missing structure.ctx")
        return
    try:
        ctx = make_context(int(ctx_data["n"]), int(ctx_data["m"]),
                           Fraction(ctx_data["theta"]))
        structure = build_structure(
            ctx, symmetrize=bool(results["structure"]["symmetrized"]))
        verts, mat = _form_matrix_from_json(harmonic["form"])
    except Exception as exc:
        errors.append(f"cannot rebuild structure/form: {exc}")
        return
    expected = [str(a) for a in structure.boundary]
    if sorted(verts) != sorted(expected):
        errors.append("embedded form vertices do not match the boundary")
        return
    order = [verts.index(s) for s in expected]
    w = mat[np.ix_(order, order)]
    lv1 = level_vertices(structure, 1)
    traced = _trace_matrix(_replicate_matrix(lv1, w),
                           list(lv1.boundary_ids))
    recomputed = float(np.abs(eta * traced - w).max() / np.abs(w).max())
    if recomputed > 10.0 * max(tol, 1e-15):
        errors.append(
            f"recomputed residual {recomputed:.3e} exceeds 10x stated "
            f"tolerance {tol:.1e}")


def _recompute_gd_residual(results: dict, errors: list[str]) -> None:
    harmonic = results.get("harmonic")
    if not isinstance(harmonic, dict):
        errors.append("gd_harmonic results missing the harmonic block")
        return
    eta = _check_claim(harmonic.get("eta"), "eta", errors)
    resid = harmonic.get("residual")
    stated = _check_claim(resid, "residual", errors)
    if eta is None or stated is None:
        return
    if not results.get("converged", True):
        return  # exploratory run; no eigen equation to check
    tol = float(resid["tol"])
    ctx = results.get("ctx", {})
    try:
        n, m = int(ctx["n"]), int(ctx["m"])
        verts, mat = _form_matrix_from_json(harmonic["form"])
    except Exception as exc:
        errors.append(f"cannot rebuild gd form: {exc}")
        return
    if sorted(verts) != sorted(FORM_VERTICES):
        errors.append("gd form vertices must be p0, q0, p1, q1")
        return
    order = [verts.index(s) for s in FORM_VERTICES]
    w = mat[np.ix_(order, order)]
    graph = cell_graph(n, m, 0)
    traced = _trace_matrix(_assemble_cell(graph, w), list(graph.corners))
    recomputed = float(np.abs(eta * traced - w).max() / np.abs(w).max())
    if recomputed > 10.0 * max(tol, 1e-15):
        errors.append(
            f"recomputed gd residual {recomputed:.3e} exceeds 10x stated "
            f"tolerance {tol:.1e}")


def _check_resistance(results: dict, errors: list[str]) -> None:
    matrix = results.get("matrix")
    verts = results.get("vertices")
    if not isinstance(matrix, list) or not isinstance(verts, list):
        errors.append("resistance results need vertices and matrix")
        return
    nv = len(verts)
    if len(matrix) != nv or any(len(row) != nv for row in matrix):
        errors.append("resistance matrix shape does not match vertices")
        return
    for i in range(nv):
        if abs(matrix[i][i]) > 1e-12:
            errors.append("resistance matrix diagonal must be zero")
            break
        for j in range(nv):
            if matrix[i][j] < -1e-12:
                errors.append("resistance matrix must be nonnegative")
                return
            if abs(matrix[i][j] - matrix[j][i]) > 1e-9:
                errors.append("resistance matrix must be symmetric")
                return


def _check_structure(results: dict, errors: list[str]) -> None:
    s = results.get("structure")
    if not isinstance(s, dict):
        errors.append("structure results missing structure block")
        return
    boundary = s.get("boundary", [])
    cells = s.get("cells", {})
    if set(boundary) != set(cells):
        errors.append("cells mapping does not cover the boundary")
    if not set(s.get("glue_points", [])) <= set(boundary):
        errors.append("glue points must be boundary angles")


def _check_gd_structure(results: dict, errors: list[str]) -> None:
    ctx = results.get("ctx", {})
    try:
        ring = int(ctx["n"]) + int(ctx["m"])
    except Exception:
        errors.append("gd_structure results missing ctx")
        return
    if results.get("num_vertices") != 2 * ring * ring:
        errors.append("gd vertex count does not equal 2(m+n)^2")
    tables = results.get("corner_maps", [])
    if len(tables) != 4 * ring * ring:
        errors.append("corner map table must have 4(m+n)^2 rows")


def validate_report_details(path: str) -> list[str]:
    """Schema plus consistency validation; empty list means valid."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            report = json.load(fh)
        except json.JSONDecodeError as exc:
            return [f"not valid JSON: {exc}"]
    errors = [f"schema: {e.message}" for e in _VALIDATOR.iter_errors(report)]
    if errors:
        return errors
    results = report["results"]
    kind = results.get("kind")
    if kind not in KINDS:
        return [f"unknown result kind {kind!r}"]
    if kind == "harmonic":
        _recompute_ms_residual(results, errors)
    elif kind == "gd_harmonic":
        _recompute_gd_residual(results, errors)
    elif kind == "resistance":
        _check_resistance(results, errors)
    elif kind == "structure":
        _check_structure(results, errors)
    elif kind == "gd_structure":
        _check_gd_structure(results, errors)
    for value in report["tolerances"].values():
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            errors.append("tolerances must be finite numbers")
            break
    return errors


def validate_report(path: str) -> bool:
    return not validate_report_details(path)
