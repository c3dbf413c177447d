"""File formats.

* features: CSV (one sample per row) or binary: 16-byte little-endian header
  ``b"GZSL"``, version (u32), N (u32), D (u32), then N*D float64 row-major;
* labels: one integer per line;
* partition: JSON ``{"seen": [...], "unseen": [...]}``;
* semantics: CSV, class id then the embedding values;
* scores, predictions, novelty and curve tables: CSV with a header row;
* models, summaries and reports: JSON with floats written to 17 significant digits.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np

from .data import ClassPartition, ScoreMatrix, SemanticTable
from .errors import DataError, ParseError

MAGIC = b"GZSL"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sIII")


def _float_repr(x: float) -> str:
    return repr(float(x))


# features -------------------------------------------------------------------

def write_features_bin(path, features) -> None:
    X = np.ascontiguousarray(features, dtype="<f8")
    if X.ndim != 2:
        raise DataError("features must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, BINARY_VERSION, X.shape[0], X.shape[1]))
        fh.write(X.tobytes(order="C"))


def read_features_bin(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError("file shorter than the 16-byte header", path, None)
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", path, None)
    if version != BINARY_VERSION:
        raise ParseError(f"unsupported binary version {version}", path, None)
    expected = _HEADER.size + 8 * n * d
    if len(raw) != expected:
        complete = (len(raw) - _HEADER.size) // (8 * d) if d else 0
        raise ParseError(
            f"expected {expected} bytes for {n}x{d} values, found {len(raw)} "
            f"(row {complete} is truncated or extra data follows)",
            path,
            None,
        )
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, d).astype(np.float64)


def write_features_csv(path, features) -> None:
    X = np.asarray(features, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in X:
            writer.writerow([_float_repr(v) for v in row])


def read_features_csv(path) -> np.ndarray:
    rows, width = [], None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise ParseError(f"row {len(rows)} has a non-numeric value", path, lineno) from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(
                    f"row {len(rows)} has {len(values)} values, expected {width}", path, lineno
                )
            rows.append(values)
    if not rows:
        raise ParseError("no feature rows", path, None)
    return np.array(rows, dtype=np.float64)


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_features_bin(path)
    return read_features_csv(path)


def write_features(path, features) -> None:
    if str(path).endswith(".csv"):
        write_features_csv(path, features)
    else:
        write_features_bin(path, features)


# labels, partition, semantics ----------------------------------------------

def write_labels(path, labels) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def read_labels(path) -> np.ndarray:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                out.append(int(text))
            except ValueError:
                raise ParseError(f"label {text!r} is not an integer", path, lineno) from None
    return np.array(out, dtype=np.int64)


def write_partition(path, partition: ClassPartition) -> None:
    Path(path).write_text(
        json.dumps({"seen": list(partition.seen), "unseen": list(partition.unseen)}) + "\n"
    )


def read_partition(path) -> ClassPartition:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    if not isinstance(doc, dict) or "seen" not in doc or "unseen" not in doc:
        raise ParseError('partition must be an object with "seen" and "unseen" lists', path)
    for side in ("seen", "unseen"):
        if not isinstance(doc[side], list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in doc[side]
        ):
            raise ParseError(f'"{side}" must be a list of integer class ids', path)
    return ClassPartition(tuple(doc["seen"]), tuple(doc["unseen"]))


def write_semantics(path, table: SemanticTable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for cid, row in zip(table.class_ids, table.embeddings):
            writer.writerow([str(cid)] + [_float_repr(v) for v in row])


def read_semantics(path, kind: str = "continuous-attribute") -> SemanticTable:
    ids, rows, width = [], [], None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                cid = int(row[0])
                values = [float(v) for v in row[1:]]
            except ValueError:
                raise ParseError("malformed semantic row", path, lineno) from None
            if width is None:
                width = len(values)
            if len(values) != width or width == 0:
                raise ParseError(
                    f"class {cid} has {len(values)} embedding values, expected {width}", path, lineno
                )
            ids.append(cid)
            rows.append(values)
    if not rows:
        raise ParseError("no semantic rows", path)
    return SemanticTable(tuple(ids), np.array(rows), kind)


# score-like tables -----------------------------------------------------------

def write_scores_csv(path, scores: ScoreMatrix) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index"] + [str(c) for c in scores.class_order])
        for i, row in enumerate(scores.scores):
            writer.writerow([i] + [_float_repr(v) for v in row])


def read_scores_csv(path, partition: ClassPartition) -> ScoreMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "sample_index":
            raise ParseError("missing sample_index header", path, 1)
        try:
            columns = [int(c) for c in header[1:]]
        except ValueError:
            raise ParseError("score header must list integer class ids", path, 1) from None
        if columns != list(partition.joint):
            raise ParseError("score columns do not follow the partition's joint order", path, 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns) + 1:
                raise ParseError(f"expected {len(columns) + 1} fields", path, lineno)
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise ParseError("non-numeric score", path, lineno) from None
    return ScoreMatrix(np.array(rows).reshape(-1, len(columns)), partition)


def write_predictions_csv(path, predictions) -> None:
    """One row per sample, or per (sample, rank) when given an N x k array."""
    P = np.asarray(predictions)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if P.ndim == 1:
            writer.writerow(["sample_index", "predicted_class_id"])
            for i, c in enumerate(P):
                writer.writerow([i, int(c)])
        else:
            writer.writerow(["sample_index", "predicted_class_id", "rank"])
            for i, row in enumerate(P):
                for rank, c in enumerate(row, start=1):
                    writer.writerow([i, int(c), rank])


def read_predictions_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header not in (["sample_index", "predicted_class_id"],
                          ["sample_index", "predicted_class_id", "rank"]):
            raise ParseError("unexpected predictions header", path, 1)
        rows = [[int(v) for v in row] for row in reader if row]
    if len(header) == 2:
        return np.array([r[1] for r in rows], dtype=np.int64)
    n = max(r[0] for r in rows) + 1
    k = max(r[2] for r in rows)
    out = np.empty((n, k), dtype=np.int64)
    for i, c, rank in rows:
        out[i, rank - 1] = c
    return out


def write_novelty_csv(path, novelty) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index", "score"])
        for i, v in enumerate(np.asarray(novelty, dtype=np.float64)):
            writer.writerow([i, _float_repr(v)])


def read_novelty_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["sample_index", "score"]:
            raise ParseError("expected header sample_index,score", path, 1)
        values = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                index, score = int(row[0]), float(row[1])
            except (ValueError, IndexError):
                raise ParseError("malformed novelty row", path, lineno) from None
            if index != len(values):
                raise ParseError(f"sample_index {index} out of sequence", path, lineno)
            values.append(score)
    return np.array(values)


def write_curve_csv(path, curve) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gamma", "acc_seen_T", "acc_unseen_T"])
        for g, s, u in zip(curve.gammas, curve.acc_seen, curve.acc_unseen):
            writer.writerow([_float_repr(g), _float_repr(s), _float_repr(u)])


def read_curve_csv(path):
    """(gammas, acc_seen_T, acc_unseen_T) arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["gamma", "acc_seen_T", "acc_unseen_T"]:
            raise ParseError("expected header gamma,acc_seen_T,acc_unseen_T", path, 1)
        try:
            rows = [[float(v) for v in row] for row in reader if row]
        except ValueError:
            raise ParseError("non-numeric curve value", path) from None
    arr = np.array(rows).reshape(-1, 3)
    return arr[:, 0], arr[:, 1], arr[:, 2]


# JSON --------------------------------------------------------------------------

def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return format(x, ".17g")
    if isinstance(obj, (str, Path)):
        return json.dumps(str(obj))
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_stable(obj) -> str:
    """Deterministic JSON text; floats use a fixed 17-significant-digit format."""
    return _encode(obj, 2, 0) + "\n"


def save_json(path, obj) -> None:
    Path(path).write_text(dumps_stable(obj))


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None


def save_model(path, model) -> None:
    save_json(path, model.to_dict())


def load_model(path):
    """Rebuild whichever model type the document's ``format`` field names."""
    from .novelty import GaussianNoveltyModel, LoopNoveltyModel, SemanticMap
    from .scorers import LinearScorer

    doc = load_json(path)
    kinds = {
        "gzslkit.linear-scorer": LinearScorer,
        "gzslkit.semantic-map": SemanticMap,
        "gzslkit.gaussian-novelty": GaussianNoveltyModel,
        "gzslkit.loop-novelty": LoopNoveltyModel,
    }
    fmt = doc.get("format") if isinstance(doc, dict) else None
    if fmt not in kinds:
        raise ParseError(f"unknown model format {fmt!r}", path)
    return kinds[fmt].from_dict(doc)


def content_hash(path) -> str:
    """Git blob hash of a file's bytes."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
