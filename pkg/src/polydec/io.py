"""JSON file formats.

Polynomial map file::

    {"m": 2, "n": 2, "d": 3,
     "terms": [{"i": 1, "alpha": [3, 0], "coeff": -3.0}, ...]}

Output indices are 1-based in files and 0-based in memory. Tensors are
written as ``{"dims": [...], "data": [...]}`` with column-major data.
Model files hold row-major ``W`` (n x r), ``V`` (m x r) and ``C`` (r x d)
plus a free-form ``metadata`` object.
"""
from __future__ import annotations

import json
import math
import sys
from pathlib import Path
from typing import Any, IO

import numpy as np

from .exceptions import DimensionError
from .polymap import DecoupledModel, PolyMap, polymap_from_terms
from .tensorize import SamplePlan, unvec, vec


class FileFormatError(ValueError):
    """Raised when an input file cannot be parsed."""


def _read_json(source: str | Path | IO[str]) -> Any:
    try:
        if hasattr(source, "read"):
            return json.load(source)
        if str(source) == "-":
            return json.load(sys.stdin)
        with open(source, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"invalid JSON: {exc}") from exc
    except OSError as exc:
        raise FileFormatError(f"cannot read {source}: {exc}") from exc


def dumps(obj: Any) -> str:
    """Deterministic UTF-8 JSON text terminated by a newline."""
    return json.dumps(_plain(obj), indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        if not math.isfinite(val):
            raise ValueError(f"cannot serialize nonfinite value {val}")
        return val
    return obj


def polymap_from_dict(doc: Any) -> PolyMap:
    if not isinstance(doc, dict):
        raise FileFormatError("polynomial file must be a JSON object")
    try:
        m, n, d = (doc[k] for k in ("m", "n", "d"))
        raw_terms = doc["terms"]
    except KeyError as exc:
        raise FileFormatError(f"missing field {exc}") from exc
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in (m, n, d)):
        raise FileFormatError("m, n and d must be integers")
    if not isinstance(raw_terms, list):
        raise FileFormatError("terms must be an array")
    terms = []
    for pos, t in enumerate(raw_terms):
        try:
            i, alpha, coeff = t["i"], t["alpha"], t["coeff"]
        except (KeyError, TypeError) as exc:
            raise FileFormatError(f"term {pos} needs fields i, alpha, coeff") from exc
        if not isinstance(i, int) or not isinstance(alpha, list):
            raise FileFormatError(f"term {pos}: i must be an integer and alpha an array")
        if not isinstance(coeff, (int, float)) or isinstance(coeff, bool):
            raise FileFormatError(f"term {pos}: coeff must be a number")
        if len(alpha) == m and sum(alpha) == 0:
            raise FileFormatError(
                f"term {pos} is a constant term (|alpha| = 0); constant terms are not supported"
            )
        terms.append((i - 1, alpha, coeff))
    try:
        return polymap_from_terms(m, n, d, terms)
    except DimensionError:
        raise
    except ValueError as exc:
        raise FileFormatError(str(exc)) from exc


def load_polymap(source) -> PolyMap:
    """Read a polynomial map file (``"-"`` reads stdin)."""
    return polymap_from_dict(_read_json(source))


def polymap_to_dict(f: PolyMap) -> dict[str, Any]:
    return {
        "m": f.m,
        "n": f.n,
        "d": f.d,
        "terms": [
            {"i": i + 1, "alpha": list(alpha), "coeff": c}
            for (i, alpha), c in f.terms.items()
        ],
    }


def tensor_to_dict(T: np.ndarray) -> dict[str, Any]:
    return {"dims": list(T.shape), "data": vec(T)}


def tensor_from_dict(doc: Any) -> np.ndarray:
    try:
        dims = [int(x) for x in doc["dims"]]
        data = np.asarray(doc["data"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"bad tensor object: {exc}") from exc
    if data.size != int(np.prod(dims)):
        raise DimensionError(f"tensor data has {data.size} entries for dims {dims}")
    return unvec(data, dims)


def plan_to_dict(plan: SamplePlan) -> dict[str, Any]:
    return {"d": plan.d, "points": plan.points, "A": tensor_to_dict(plan.A)}


def load_points(source) -> np.ndarray:
    """Read points as a JSON array of vectors or ``{"points": [...]}``."""
    doc = _read_json(source)
    if isinstance(doc, dict):
        doc = doc.get("points")
    try:
        pts = np.asarray(doc, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"points must be an array of numeric vectors: {exc}") from exc
    if pts.ndim != 2:
        raise FileFormatError("points must be an array of equal-length vectors")
    return pts


def model_to_dict(model: DecoupledModel, metadata: dict[str, Any] | None = None) -> dict[str, Any]:
    return {"W": model.W, "V": model.V, "C": model.C, "metadata": metadata or {}}


def model_from_dict(doc: Any) -> DecoupledModel:
    if not isinstance(doc, dict):
        raise FileFormatError("model file must be a JSON object")
    try:
        mats = [np.asarray(doc[k], dtype=float) for k in ("W", "V", "C")]
    except KeyError as exc:
        raise FileFormatError(f"missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"W, V and C must be numeric matrices: {exc}") from exc
    if any(a.ndim != 2 for a in mats):
        raise FileFormatError("W, V and C must be 2-D arrays")
    return DecoupledModel(*mats)


def load_model(source) -> DecoupledModel:
    return model_from_dict(_read_json(source))


def write_text(path: str | Path | None, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")
