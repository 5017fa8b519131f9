"""JSON problem files.

Fields: ``n``, ``p``, ``Q`` (dense rows or ``{"diag": [...]}``), ``q``,
``alpha``, ``F`` (dense, ``{"diag": [...]}`` or ``"identity"``) and the
optional ``A``, ``B``, ``c`` in the same matrix encodings.  Omitted ``A``
means ``A = F``, omitted ``B`` the identity and omitted ``c`` zero.
Floats are written with ``repr`` precision, so a round trip is bit-exact.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .core import DimensionMismatchError, ProblemSpec


class ProblemFormatError(ValueError):
    """Malformed problem file; carries the offending field and line if known."""

    def __init__(self, message, field=None, line=None):
        self.field, self.line = field, line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


def _line_of(text, key):
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


def _matrix(obj, rows, cols, name, text, allow_identity=True):
    def fail(msg):
        raise ProblemFormatError(msg, name, _line_of(text, name))

    if isinstance(obj, str):
        if obj == "identity" and allow_identity:
            if rows != cols:
                fail(f"identity needs a square shape, got {rows}x{cols}")
            return np.eye(rows)
        fail(f"unknown matrix keyword {obj!r}")
    if isinstance(obj, dict):
        if set(obj) != {"diag"}:
            fail("matrix objects must have exactly the key 'diag'")
        d = _vector(obj["diag"], None, name, text)
        if d.shape[0] != rows or rows != cols:
            fail(f"diag has length {d.shape[0]} but shape is {rows}x{cols}")
        return np.diag(d)
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        fail("entries must be numbers")
    if arr.ndim != 2:
        fail(f"expected a list of rows, got {arr.ndim}-D data")
    if arr.shape != (rows, cols):
        fail(f"expected shape {rows}x{cols}, got {arr.shape[0]}x{arr.shape[1]}")
    return arr


def _vector(obj, length, name, text):
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise ProblemFormatError("entries must be numbers", name, _line_of(text, name)) from None
    if arr.ndim != 1:
        raise ProblemFormatError("expected a flat list", name, _line_of(text, name))
    if length is not None and arr.shape[0] != length:
        raise ProblemFormatError(
            f"expected length {length}, got {arr.shape[0]}", name, _line_of(text, name)
        )
    return arr


def loads(text: str) -> ProblemSpec:
    """Parse problem JSON text."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(exc.msg, None, exc.lineno) from None
    if not isinstance(data, dict):
        raise ProblemFormatError("top level must be an object", None, 1)
    for key in ("n", "q", "alpha", "Q", "F"):
        if key not in data:
            raise ProblemFormatError("missing required field", key)
    n = data["n"]
    if not isinstance(n, int) or n < 1:
        raise ProblemFormatError("must be a positive integer", "n", _line_of(text, "n"))
    F_raw = data["F"]
    p = data.get("p")
    if p is None:
        p = n if isinstance(F_raw, (str, dict)) else len(F_raw)
    if not isinstance(p, int) or p < 1:
        raise ProblemFormatError("must be a positive integer", "p", _line_of(text, "p"))
    alpha = data["alpha"]
    if not isinstance(alpha, (int, float)) or isinstance(alpha, bool):
        raise ProblemFormatError("must be a number", "alpha", _line_of(text, "alpha"))
    Q = _matrix(data["Q"], n, n, "Q", text, allow_identity=True)
    q = _vector(data["q"], n, "q", text)
    F = _matrix(F_raw, p, n, "F", text)
    A = None if "A" not in data else _matrix(data["A"], p, n, "A", text)
    B = None if "B" not in data else _matrix(data["B"], p, p, "B", text)
    c = None if "c" not in data else _vector(data["c"], p, "c", text)
    try:
        return ProblemSpec(Q, q, float(alpha), F=F, A=A, B=B, c=c)
    except DimensionMismatchError as exc:
        raise ProblemFormatError(str(exc), exc.field_a) from None


def load(path) -> ProblemSpec:
    return loads(Path(path).read_text())


def _encode_matrix(M, identity_ok=True):
    M = np.asarray(M)
    if M.shape[0] == M.shape[1]:
        if identity_ok and np.array_equal(M, np.eye(M.shape[0])):
            return "identity"
        if not np.any(M - np.diag(np.diag(M))):
            return {"diag": [float(v) for v in np.diag(M)]}
    return [[float(v) for v in row] for row in M]


def to_dict(spec: ProblemSpec) -> dict:
    out = {
        "n": spec.n,
        "p": spec.p,
        "Q": _encode_matrix(spec.quad_Q, identity_ok=False),
        "q": [float(v) for v in spec.quad_q],
        "alpha": float(spec.alpha),
        "F": _encode_matrix(spec.F),
    }
    if not np.array_equal(spec.A, spec.F) or spec.A.shape != spec.F.shape:
        out["A"] = _encode_matrix(spec.A)
    if not (spec.B.shape[0] == spec.B.shape[1] and np.array_equal(spec.B, np.eye(spec.B.shape[0]))):
        out["B"] = _encode_matrix(spec.B)
    if np.any(spec.c):
        out["c"] = [float(v) for v in spec.c]
    return out


def dumps(spec: ProblemSpec) -> str:
    return json.dumps(to_dict(spec), indent=1) + "\n"


def dump(spec: ProblemSpec, path):
    Path(path).write_text(dumps(spec))
