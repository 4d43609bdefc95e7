"""Reading problem inputs and writing/reading path artifacts.

Input CSVs carry a header line and use 1-based indices; everything is
converted to 0-based on the way in and back to 1-based on the way out.
Lines starting with '#' are comments.  Reals are written with 17
significant digits so a write/read cycle is exact.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .path_core import DualSegment, PathKnot, SolutionPath

FORMAT_VERSION = 1
MAGIC = f"# genlasso-path format_version={FORMAT_VERSION}"
KNOT_COLUMNS = ["lambda", "event", "coordinate", "sign", "df"]
SEGMENT_COLUMNS = ["segment", "lambda_hi", "lambda_lo", "row", "role", "a", "b", "s"]


class ParseError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = str(path), line


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _rows(path):
    """Yield (line number, fields) for non-comment, non-blank lines."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ParseError(path, 0, f"cannot open: {exc.strerror}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            yield lineno, next(csv.reader([s]))


def _read_table(path, header=None):
    it = _rows(path)
    try:
        lineno, head = next(it)
    except StopIteration:
        raise ParseError(path, 1, "file is empty (a header line is required)") from None
    head = [h.strip() for h in head]
    if header is not None and head != header:
        raise ParseError(path, lineno, f"expected header {','.join(header)}, got {','.join(head)}")
    return head, list(it)


def _number(path, lineno, text, kind=float):
    try:
        v = kind(text.strip())
    except ValueError:
        raise ParseError(path, lineno, f"not a valid {kind.__name__}: {text!r}") from None
    if kind is float and not math.isfinite(v):
        raise ParseError(path, lineno, f"non-finite value {text!r}")
    return v


def read_vector(path) -> np.ndarray:
    """One-column CSV with a header line."""
    _, rows = _read_table(path)
    out = []
    for lineno, fields in rows:
        if len(fields) != 1:
            raise ParseError(path, lineno, f"expected 1 field, got {len(fields)}")
        out.append(_number(path, lineno, fields[0]))
    if not out:
        raise ParseError(path, 2, "no values")
    return np.array(out)


def read_matrix(path) -> np.ndarray:
    """Dense matrix CSV: a header line of column names, then one row per line."""
    head, rows = _read_table(path)
    width = len(head)
    out = []
    for lineno, fields in rows:
        if len(fields) != width:
            raise ParseError(path, lineno, f"expected {width} fields, got {len(fields)}")
        out.append([_number(path, lineno, f) for f in fields])
    if not out:
        raise ParseError(path, 2, "no rows")
    return np.array(out)


def read_edges(path, p: int) -> np.ndarray:
    """Edge list CSV with header i,j and 1-based node indices."""
    _, rows = _read_table(path, ["i", "j"])
    out = []
    for lineno, fields in rows:
        if len(fields) != 2:
            raise ParseError(path, lineno, f"expected 2 fields, got {len(fields)}")
        i, j = (_number(path, lineno, f, int) for f in fields)
        for v in (i, j):
            if not 1 <= v <= p:
                raise ParseError(path, lineno, f"node {v} outside 1..{p}")
        if i == j:
            raise ParseError(path, lineno, f"self-loop on node {i}")
        out.append((i - 1, j - 1))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def read_triplets(path, p: int):
    """Sparse matrix CSV with header row,col,value (1-based).  Returns (m, rows, cols, vals)."""
    _, rows = _read_table(path, ["row", "col", "value"])
    r, c, v = [], [], []
    for lineno, fields in rows:
        if len(fields) != 3:
            raise ParseError(path, lineno, f"expected 3 fields, got {len(fields)}")
        i = _number(path, lineno, fields[0], int)
        j = _number(path, lineno, fields[1], int)
        if i < 1:
            raise ParseError(path, lineno, f"row {i} must be at least 1")
        if not 1 <= j <= p:
            raise ParseError(path, lineno, f"column {j} outside 1..{p}")
        r.append(i - 1)
        c.append(j - 1)
        v.append(_number(path, lineno, fields[2]))
    m = max(r) + 1 if r else 0
    return m, np.array(r, np.int64), np.array(c, np.int64), np.array(v)


# -- artifacts ----------------------------------------------------------------

def _sign_text(k: PathKnot) -> str:
    return f"{k.sign:+d}" if k.event == "hit" else "0"


def knot_records(path: SolutionPath):
    for k in path.knots:
        yield {
            "lambda": k.lam,
            "event": k.event,
            "coordinate": k.coordinate + 1 if k.coordinate >= 0 else 0,
            "sign": k.sign,
            "df": k.df,
        }


def segment_records(path: SolutionPath):
    for t, seg in enumerate(path.segments, start=1):
        for row, a, b in zip(seg.interior, seg.a, seg.b):
            yield {"segment": t, "lambda_hi": seg.lam_hi, "lambda_lo": seg.lam_lo,
                   "row": int(row) + 1, "role": "interior", "a": a, "b": b, "s": None}
        for row, s in zip(seg.boundary, seg.signs):
            yield {"segment": t, "lambda_hi": seg.lam_hi, "lambda_lo": seg.lam_lo,
                   "row": int(row) + 1, "role": "boundary", "a": None, "b": None, "s": int(s)}
        if seg.interior.size == 0 and seg.boundary.size == 0:
            # keep empty segments (D with no rows) visible
            yield {"segment": t, "lambda_hi": seg.lam_hi, "lambda_lo": seg.lam_lo,
                   "row": 0, "role": "none", "a": None, "b": None, "s": None}


def _json_num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def write_path(path: SolutionPath, out_dir, fmt_kind: str, problem: dict):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt_kind == "csv":
        with open(out / "knots.csv", "w", newline="") as fh:
            fh.write(MAGIC + "\n")
            fh.write(",".join(KNOT_COLUMNS) + "\n")
            for k in path.knots:
                coord = k.coordinate + 1 if k.coordinate >= 0 else 0
                fh.write(f"{fmt(k.lam)},{k.event},{coord},{_sign_text(k)},{k.df}\n")
        with open(out / "segments.csv", "w", newline="") as fh:
            fh.write(MAGIC + "\n")
            fh.write(",".join(SEGMENT_COLUMNS) + "\n")
            for r in segment_records(path):
                cells = [str(r["segment"]), fmt(r["lambda_hi"]), fmt(r["lambda_lo"]), str(r["row"]), r["role"],
                         "" if r["a"] is None else fmt(r["a"]),
                         "" if r["b"] is None else fmt(r["b"]),
                         "" if r["s"] is None else f"{r['s']:+d}"]
                fh.write(",".join(cells) + "\n")
    elif fmt_kind == "json":
        knots = [dict(r, **{"lambda": _json_num(r["lambda"])}) for r in knot_records(path)]
        segs = [dict(r, lambda_hi=_json_num(r["lambda_hi"]), lambda_lo=_json_num(r["lambda_lo"]),
                     a=_json_num(r["a"]), b=_json_num(r["b"])) for r in segment_records(path)]
        _dump(out / "knots.json", {"format_version": FORMAT_VERSION, "columns": KNOT_COLUMNS, "rows": knots})
        _dump(out / "segments.json", {"format_version": FORMAT_VERSION, "columns": SEGMENT_COLUMNS, "rows": segs})
    else:
        raise ValueError(f"unknown format {fmt_kind!r}")
    meta = dict(problem)
    meta.update(format_version=FORMAT_VERSION, termination=path.termination, df0=path.df0,
                lambda_min=_json_num(path.lambda_min) if path.segments else None, output_format=fmt_kind)
    _dump(out / "problem.json", meta)


def _dump(file, obj):
    # repr of a float is the shortest exact round-trip form
    with open(file, "w") as fh:
        json.dump(obj, fh, indent=1, allow_nan=False)
        fh.write("\n")


def _check_version(file, version):
    if version != FORMAT_VERSION:
        raise ParseError(file, 1, f"unsupported format_version {version}")


def _read_artifact_csv(file, columns):
    file = Path(file)
    with open(file) as fh:
        first = fh.readline().strip()
    if not first.startswith("# genlasso-path format_version="):
        raise ParseError(file, 1, "missing format-version line")
    _check_version(file, int(first.rsplit("=", 1)[1]))
    _, rows = _read_table(file, columns)
    return rows


def read_knots(out_dir, fmt_kind):
    out = Path(out_dir)
    knots = []
    if fmt_kind == "csv":
        for lineno, f in _read_artifact_csv(out / "knots.csv", KNOT_COLUMNS):
            knots.append(PathKnot(float(f[0]), f[1], int(f[2]) - 1, int(f[3]), int(f[4])))
    else:
        obj = json.loads((out / "knots.json").read_text())
        _check_version(out / "knots.json", obj.get("format_version"))
        for r in obj["rows"]:
            knots.append(PathKnot(float(r["lambda"]), r["event"], r["coordinate"] - 1, r["sign"], r["df"]))
    return knots


def read_segments(out_dir, fmt_kind):
    out = Path(out_dir)
    recs = []
    if fmt_kind == "csv":
        for lineno, f in _read_artifact_csv(out / "segments.csv", SEGMENT_COLUMNS):
            recs.append((int(f[0]), float(f[1]), float(f[2]), int(f[3]) - 1, f[4],
                         float(f[5]) if f[5] else 0.0, float(f[6]) if f[6] else 0.0,
                         float(f[7]) if f[7] else 0.0))
    else:
        obj = json.loads((out / "segments.json").read_text())
        _check_version(out / "segments.json", obj.get("format_version"))
        for r in obj["rows"]:
            hi = np.inf if r["lambda_hi"] is None else r["lambda_hi"]
            recs.append((r["segment"], hi, r["lambda_lo"], r["row"] - 1, r["role"],
                         r["a"] or 0.0, r["b"] or 0.0, r["s"] or 0.0))
    segs = []
    by_id = {}
    for t, hi, lo, row, role, a, b, s in recs:
        by_id.setdefault(t, {"hi": hi, "lo": lo, "I": [], "a": [], "b": [], "B": [], "s": []})
        g = by_id[t]
        if role == "interior":
            g["I"].append(row)
            g["a"].append(a)
            g["b"].append(b)
        elif role == "boundary":
            g["B"].append(row)
            g["s"].append(s)
    for t in sorted(by_id):
        g = by_id[t]
        segs.append(DualSegment(g["hi"], g["lo"], np.array(g["I"], np.int64), np.array(g["B"], np.int64),
                                np.array(g["s"]), np.array(g["a"]), np.array(g["b"])))
    return segs


def read_problem(out_dir) -> dict:
    file = Path(out_dir) / "problem.json"
    try:
        obj = json.loads(file.read_text())
    except OSError as exc:
        raise ParseError(file, 0, f"cannot open: {exc.strerror}") from exc
    _check_version(file, obj.get("format_version"))
    return obj
