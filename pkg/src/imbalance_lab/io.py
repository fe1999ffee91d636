"""On-disk formats: datasets (CSV or binary), model checkpoints and schema-headed CSVs.

Binary dataset layout (little endian)::

    b"IMBD" | n u64 | d u64 | C u64 | features f8[n*d] | labels i4[n] | m u64 | edges i8[m*2]

Checkpoint layout::

    b"IMBC" | header_len u64 | header (UTF-8 JSON) | params f8[size]
"""

from __future__ import annotations

import csv
import json
import struct
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .taskgen import Dataset
from .trainer import Model

SCHEMA_VERSION = 1
DATASET_MAGIC = b"IMBD"
CHECKPOINT_MAGIC = b"IMBC"
_DS_HEADER = struct.Struct("<4sQQQ")
_U64 = struct.Struct("<Q")


class FormatError(ValueError):
    pass


def _fmt(x) -> str:
    # repr of a Python float round-trips exactly
    return repr(float(x))


def schema_header(name: str, deterministic: bool = True) -> list[str]:
    lines = [f"# schema={name} version={SCHEMA_VERSION}"]
    if not deterministic:
        lines.append(f"# generated={datetime.now(timezone.utc).isoformat(timespec='seconds')}")
    return lines


def write_csv(path, schema: str, header, rows, deterministic: bool = True) -> None:
    """CSV with a schema comment line and an optional timestamp line."""
    with open(path, "w", newline="") as fh:
        for line in schema_header(schema, deterministic):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Returns ``(meta, header, rows)``; meta holds the key=value pairs of comment lines."""
    meta: dict = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
        else:
            body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise FormatError(f"{path}: no header row")
    return meta, rows[0], rows[1:]


# --- datasets ----------------------------------------------------------------


def _edges_path(path: Path) -> Path:
    return path.with_name(path.stem + ".edges.csv")


def write_dataset(data: Dataset, path, fmt: str | None = None) -> list[Path]:
    """Write ``data``; the format follows the suffix (``.csv`` or anything else = binary).

    CSV datasets keep their edges in a ``<stem>.edges.csv`` sidecar. Returns
    the paths written.
    """
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "bin")
    if fmt == "csv":
        header = [f"x{j}" for j in range(data.d)] + ["label"]
        rows = ([_fmt(v) for v in x] + [int(c)] for x, c in zip(data.features, data.labels))
        with open(path, "w", newline="") as fh:
            fh.write(f"# schema=dataset version={SCHEMA_VERSION} n_classes={data.n_classes}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        written = [path]
        if data.edges is not None:
            write_csv(_edges_path(path), "edges", ["src", "dst"], data.edges.tolist())
            written.append(_edges_path(path))
        return written
    if fmt != "bin":
        raise ValueError(f"unknown dataset format {fmt!r}")
    edges = np.zeros((0, 2), dtype="<i8") if data.edges is None else data.edges
    with open(path, "wb") as fh:
        fh.write(_DS_HEADER.pack(DATASET_MAGIC, data.n, data.d, data.n_classes))
        fh.write(np.ascontiguousarray(data.features, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(data.labels, dtype="<i4").tobytes())
        fh.write(_U64.pack(0 if data.edges is None else len(edges)))
        fh.write(np.ascontiguousarray(edges, dtype="<i8").tobytes())
    return [path]


def read_dataset(path) -> Dataset:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == DATASET_MAGIC:
        return _read_binary(path)
    meta, header, rows = read_csv(path)
    if meta.get("schema") != "dataset":
        raise FormatError(f"{path}: not a dataset file")
    if not header or header[-1] != "label":
        raise FormatError(f"{path}: last column must be 'label'")
    d = len(header) - 1
    if rows:
        X = np.array([[float(v) for v in r[:d]] for r in rows], dtype=np.float64)
        y = np.array([int(r[d]) for r in rows], dtype=np.int64)
    else:
        X, y = np.zeros((0, d)), np.zeros(0, dtype=np.int64)
    C = int(meta["n_classes"]) if "n_classes" in meta else int(y.max()) + 1
    edges = None
    if _edges_path(path).exists():
        _, _, erows = read_csv(_edges_path(path))
        edges = np.array([[int(a), int(b)] for a, b in erows], dtype=np.int64).reshape(-1, 2)
    return Dataset(X, y, C, edges)


def _read_binary(path: Path) -> Dataset:
    blob = path.read_bytes()
    if len(blob) < _DS_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, n, d, C = _DS_HEADER.unpack_from(blob, 0)
    off = _DS_HEADER.size
    need = off + 8 * n * d + 4 * n + 8
    if len(blob) < need:
        raise FormatError(f"{path}: truncated body")
    X = np.frombuffer(blob, dtype="<f8", count=n * d, offset=off).reshape(n, d).copy()
    off += 8 * n * d
    y = np.frombuffer(blob, dtype="<i4", count=n, offset=off).astype(np.int64)
    off += 4 * n
    (m,) = _U64.unpack_from(blob, off)
    off += 8
    if len(blob) != off + 16 * m:
        raise FormatError(f"{path}: edge block length mismatch")
    edges = np.frombuffer(blob, dtype="<i8", count=2 * m, offset=off).reshape(m, 2).copy() \
        if m else None
    return Dataset(X, y, int(C), edges)


# --- checkpoints -------------------------------------------------------------


def save_checkpoint(model: Model, path, extra: dict | None = None) -> None:
    header = {"version": SCHEMA_VERSION, "variant": model.variant, "d": model.d, "C": model.C,
              "hidden": model.hidden, "activation": model.activation, "size": model.size,
              "extra": extra or {}}
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(_U64.pack(len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(model.params, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[Model, dict]:
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint")
    (hl,) = _U64.unpack_from(blob, 4)
    header = json.loads(blob[12:12 + hl])
    params = np.frombuffer(blob, dtype="<f8", offset=12 + hl)
    if params.size != header["size"]:
        raise FormatError(f"{path}: expected {header['size']} parameters, found {params.size}")
    model = Model(header["d"], header["C"], header["hidden"], header["activation"], params.copy())
    return model, header.get("extra", {})
