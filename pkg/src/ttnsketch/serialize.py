"""On-disk formats: sample files (text and binary) and model manifests.

Sample text format, version 1::

    ttns-samples v1 d=<d> n=<n_1,...,n_d>
    <d space-separated 1-based integers per row>

The binary variant stores the same rows as a little-endian u16 matrix
(row-major, 1-based values) next to a JSON sidecar carrying the header.
Models are stored as a JSON manifest plus a float64 little-endian blob of
the cores concatenated in node order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import DiscreteSamples
from .tree import RootedTree
from .ttns import TTNS

SAMPLES_MAGIC = "ttns-samples"
SAMPLES_VERSION = 1
MODEL_FORMAT = "ttns-model"
MODEL_VERSION = 1


class FormatError(ValueError):
    pass


class HeaderError(FormatError):
    pass


class VersionError(FormatError):
    pass


class ShapeMismatchError(FormatError):
    pass


def _header_line(samples: DiscreteSamples) -> str:
    counts = ",".join(str(int(n)) for n in samples.state_counts)
    return f"{SAMPLES_MAGIC} v{SAMPLES_VERSION} d={samples.d} n={counts}"


def _parse_header(line: str) -> tuple[int, np.ndarray]:
    parts = line.strip().split()
    if len(parts) != 4 or parts[0] != SAMPLES_MAGIC:
        raise HeaderError(f"malformed sample header: {line!r}")
    if parts[1] != f"v{SAMPLES_VERSION}":
        raise VersionError(f"unsupported sample format version: {parts[1]}")
    try:
        d = int(parts[2].removeprefix("d="))
        counts = np.array(
            [int(x) for x in parts[3].removeprefix("n=").split(",")], dtype=np.int64
        )
    except ValueError as exc:
        raise HeaderError(f"malformed sample header: {line!r}") from exc
    if not parts[2].startswith("d=") or not parts[3].startswith("n="):
        raise HeaderError(f"malformed sample header: {line!r}")
    if counts.size != d:
        raise ShapeMismatchError(f"header lists {counts.size} state counts for d={d}")
    return d, counts


def save_samples_text(samples: DiscreteSamples, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(_header_line(samples) + "\n")
        np.savetxt(fh, samples.data + 1, fmt="%d", delimiter=" ")


def load_samples_text(path) -> DiscreteSamples:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline()
        d, counts = _parse_header(header)
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            vals = line.split()
            if len(vals) != d:
                raise ShapeMismatchError(
                    f"line {lineno}: expected {d} entries, found {len(vals)}"
                )
            rows.append([int(v) for v in vals])
    data = np.asarray(rows, dtype=np.int64).reshape(len(rows), d) - 1
    if data.size and ((data < 0).any() or (data >= counts[None, :]).any()):
        bad = int(
            np.nonzero(((data < 0) | (data >= counts[None, :])).any(axis=1))[0][0]
        )
        raise ShapeMismatchError(f"row {bad + 2}: state outside declared range")
    return DiscreteSamples(data, counts)


def save_samples_binary(samples: DiscreteSamples, path) -> None:
    path = Path(path)
    if (samples.data + 1 >= 2**16).any():
        raise ShapeMismatchError("states do not fit in u16")
    sidecar = {
        "format": SAMPLES_MAGIC,
        "version": SAMPLES_VERSION,
        "d": samples.d,
        "n": [int(x) for x in samples.state_counts],
        "count": samples.n_rows,
    }
    path.write_bytes(
        (samples.data + 1).astype("<u2").tobytes(order="C")
    )
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True))


def load_samples_binary(path) -> DiscreteSamples:
    path = Path(path)
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.exists():
        raise HeaderError(f"missing sidecar header {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    if meta.get("format") != SAMPLES_MAGIC:
        raise HeaderError(f"sidecar is not a sample header: {sidecar_path}")
    if meta.get("version") != SAMPLES_VERSION:
        raise VersionError(f"unsupported sample format version: {meta.get('version')}")
    d, count = int(meta["d"]), int(meta["count"])
    raw = np.frombuffer(path.read_bytes(), dtype="<u2")
    if raw.size != d * count:
        raise ShapeMismatchError(
            f"blob holds {raw.size} values, header promises {count} x {d}"
        )
    data = raw.reshape(count, d).astype(np.int64) - 1
    return DiscreteSamples(data, np.array(meta["n"], dtype=np.int64))


def _edge_key(e: tuple[int, int]) -> str:
    return f"{e[0]}-{e[1]}"


def save_ttns(model: TTNS, base_path) -> tuple[Path, Path]:
    """Write ``<base>.json`` (manifest) and ``<base>.bin`` (core blob)."""
    base = Path(base_path)
    manifest_path = base.with_suffix(".json")
    blob_path = base.with_suffix(".bin")
    manifest = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "tree": model.tree.to_dict(),
        "ranks": {_edge_key(e): int(r) for e, r in sorted(model.ranks.items())},
        "cores": [
            {"node": k, "shape": list(model.cores[k].shape)}
            for k in model.tree.nodes
        ],
    }
    manifest_path.write_text(json.dumps(manifest, sort_keys=True))
    blob = b"".join(
        model.cores[k].astype("<f8").tobytes(order="C") for k in model.tree.nodes
    )
    blob_path.write_bytes(blob)
    return manifest_path, blob_path


def load_ttns(base_path) -> TTNS:
    base = Path(base_path)
    manifest_path = base.with_suffix(".json")
    blob_path = base.with_suffix(".bin")
    meta = json.loads(manifest_path.read_text())
    if meta.get("format") != MODEL_FORMAT:
        raise HeaderError(f"{manifest_path} is not a model manifest")
    if meta.get("version") != MODEL_VERSION:
        raise VersionError(f"unsupported model format version: {meta.get('version')}")
    tree = RootedTree.from_dict(meta["tree"])
    ranks = {}
    for key, r in meta["ranks"].items():
        c, p = key.split("-")
        ranks[(int(c), int(p))] = int(r)
    raw = np.frombuffer(blob_path.read_bytes(), dtype="<f8")
    cores: dict[int, np.ndarray] = {}
    offset = 0
    for entry in meta["cores"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape))
        if offset + size > raw.size:
            raise ShapeMismatchError("core blob shorter than the manifest promises")
        cores[int(entry["node"])] = raw[offset : offset + size].reshape(shape).copy()
        offset += size
    if offset != raw.size:
        raise ShapeMismatchError("core blob longer than the manifest promises")
    return TTNS(tree, ranks, cores)
