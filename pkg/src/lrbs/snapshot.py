"""Plain-text field snapshots.

Format::

    LRBS-FIELD v1
    dim=<d> extent=<e1,...,ed> kind=<int|real> step=<n> seed=<s>
    <row-major values, whitespace separated>

Integers are written verbatim and reals as the shortest decimal that
round-trips (Python ``repr``), so save/load is bit exact.
"""

from __future__ import annotations

import os

import numpy as np

MAGIC = "LRBS-FIELD v1"
ROW = 16


class SnapshotError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


def format_snapshot(field: np.ndarray, step: int = 0, seed: int = 0) -> str:
    a = np.asarray(field)
    if a.ndim == 0:
        raise SnapshotError("field must have at least one dimension")
    if np.issubdtype(a.dtype, np.integer) or a.dtype == bool:
        kind, vals = "int", [str(int(v)) for v in a.ravel()]
    else:
        kind, vals = "real", [repr(float(v)) for v in a.ravel()]
    extent = ",".join(str(e) for e in a.shape)
    lines = [MAGIC, f"dim={a.ndim} extent={extent} kind={kind} step={int(step)} seed={int(seed)}"]
    lines += [" ".join(vals[i:i + ROW]) for i in range(0, len(vals), ROW)]
    return "\n".join(lines) + "\n"


def save_snapshot(field: np.ndarray, path, step: int = 0, seed: int = 0) -> None:
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_snapshot(field, step, seed))


def _parse_header(line: str) -> dict:
    out = {}
    for tok in line.split():
        key, sep, val = tok.partition("=")
        if not sep:
            raise SnapshotError(f"malformed header token {tok!r}", 2)
        out[key] = val
    missing = {"dim", "extent", "kind", "step", "seed"} - out.keys()
    if missing:
        raise SnapshotError(f"header missing {sorted(missing)}", 2)
    try:
        dim = int(out["dim"])
        extent = tuple(int(e) for e in out["extent"].split(","))
        step, seed = int(out["step"]), int(out["seed"])
    except ValueError as e:
        raise SnapshotError(f"malformed header: {e}", 2) from None
    if out["kind"] not in ("int", "real"):
        raise SnapshotError(f"unknown kind {out['kind']!r}", 2)
    if len(extent) != dim or min(extent) < 1:
        raise SnapshotError("extent does not match dim", 2)
    return {"dim": dim, "extent": extent, "kind": out["kind"], "step": step, "seed": seed}


def parse_snapshot(text: str) -> tuple[np.ndarray, dict]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise SnapshotError(f"expected {MAGIC!r}", 1)
    if len(lines) < 2:
        raise SnapshotError("missing header line", 2)
    meta = _parse_header(lines[1])
    n = int(np.prod(meta["extent"]))
    conv = int if meta["kind"] == "int" else float
    vals = []
    for lineno, line in enumerate(lines[2:], start=3):
        for tok in line.split():
            try:
                vals.append(conv(tok))
            except ValueError:
                raise SnapshotError(f"bad {meta['kind']} value {tok!r}", lineno) from None
            if len(vals) > n:
                raise SnapshotError(f"more than {n} values", lineno)
    if len(vals) != n:
        raise SnapshotError(f"expected {n} values, found {len(vals)}", len(lines) + 1)
    dtype = np.int64 if meta["kind"] == "int" else np.float64
    return np.array(vals, dtype=dtype).reshape(meta["extent"]), meta


def load_snapshot(path) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        return parse_snapshot(fh.read())[0]
