"""Model interchange: JSON manifest + raw little-endian FP32 weight blob.

Manifest schema (format_version 1)::

    {
      "format_version": 1,
      "input_shape": [3, 32, 32],
      "blob": "<name>.bin",
      "class_names": [...],                  # optional
      "preprocess": {"mean": [...], "std": [...]},   # optional, per channel
      "layers": [
        {"name": ..., "kind": ..., "inputs": [...],
         "<tensor>": {"shape": [...], "offset": <byte offset>}, ...,
         "<scalar attr>": <value>, ...},
        ...
      ]
    }

Byte offsets into the blob are explicit.  The blob must be exactly tiled by
the declared tensors: no gaps, no overlap, no trailing bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ManifestError
from .graph import ARRAY_PARAMS, SCALAR_PARAMS, Layer, ModelGraph

FORMAT_VERSION = 1


def load_model(manifest_path: str | Path) -> ModelGraph:
    """Load and validate a model from its manifest; materializes all weights."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ManifestError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"malformed manifest {manifest_path}: {exc}") from exc
    for key in ("format_version", "input_shape", "blob", "layers"):
        if key not in manifest:
            raise ManifestError(f"manifest missing field {key!r}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise ManifestError(f"unsupported format_version {manifest['format_version']!r}")

    blob_path = manifest_path.parent / manifest["blob"]
    if not blob_path.is_file():
        raise ManifestError(f"weight blob not found: {blob_path}")
    blob = blob_path.read_bytes()

    layers = []
    spans = []
    for rec in manifest["layers"]:
        try:
            name, kind = rec["name"], rec["kind"]
            inputs = tuple(rec["inputs"])
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"layer record missing name/kind/inputs: {rec!r}") from exc
        arrays = {}
        for key in ARRAY_PARAMS.get(kind, ()):
            if key not in rec:
                raise ManifestError(f"layer {name!r} missing tensor {key!r}")
            arrays[key] = _read_tensor(blob, rec[key], f"{name}.{key}", spans)
        attrs = {}
        for key in SCALAR_PARAMS.get(kind, ()):
            if key not in rec:
                raise ManifestError(f"layer {name!r} missing attribute {key!r}")
            attrs[key] = rec[key]
        layers.append(Layer(name, kind, inputs, arrays, attrs))

    declared = sum(n for _, n in spans)
    if declared != len(blob):
        raise ManifestError(
            f"blob size mismatch: {len(blob)} bytes on disk, {declared} declared"
        )
    spans.sort()
    pos = 0
    for off, n in spans:
        if off != pos:
            raise ManifestError(f"blob tensors must tile the blob; gap/overlap at offset {off}")
        pos += n

    mean = std = None
    if "preprocess" in manifest:
        pre = manifest["preprocess"]
        mean = np.asarray(pre["mean"], dtype=np.float32)
        std = np.asarray(pre["std"], dtype=np.float32)
    class_names = tuple(manifest["class_names"]) if "class_names" in manifest else None
    try:
        return ModelGraph(tuple(layers), tuple(manifest["input_shape"]),
                          class_names=class_names, input_mean=mean, input_std=std)
    except Exception as exc:
        raise ManifestError(f"invalid model in {manifest_path}: {exc}") from exc


def _read_tensor(blob: bytes, rec, label: str, spans: list) -> np.ndarray:
    try:
        shape = tuple(int(d) for d in rec["shape"])
        offset = int(rec["offset"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"tensor {label}: bad shape/offset record {rec!r}") from exc
    if any(d <= 0 for d in shape):
        raise ManifestError(f"tensor {label}: non-positive dimension in {shape}")
    nbytes = int(np.prod(shape)) * 4
    if offset < 0 or offset + nbytes > len(blob):
        raise ManifestError(
            f"tensor {label}: declared span [{offset}, {offset + nbytes}) exceeds "
            f"blob of {len(blob)} bytes"
        )
    spans.append((offset, nbytes))
    arr = np.frombuffer(blob, dtype="<f4", count=int(np.prod(shape)), offset=offset)
    return arr.reshape(shape).copy()


def save_model(graph: ModelGraph, manifest_path: str | Path) -> Path:
    """Write manifest + blob; returns the manifest path. Deterministic bytes."""
    manifest_path = Path(manifest_path)
    blob_name = manifest_path.stem + ".bin"
    chunks: list[bytes] = []
    offset = 0
    records = []
    for lyr in graph.layers:
        rec: dict = {"name": lyr.name, "kind": lyr.kind, "inputs": list(lyr.inputs)}
        for key in ARRAY_PARAMS.get(lyr.kind, ()):
            data = np.ascontiguousarray(lyr.arrays[key], dtype="<f4").tobytes()
            rec[key] = {"shape": list(lyr.arrays[key].shape), "offset": offset}
            chunks.append(data)
            offset += len(data)
        for key in SCALAR_PARAMS.get(lyr.kind, ()):
            rec[key] = lyr.attrs[key]
        records.append(rec)
    manifest = {
        "format_version": FORMAT_VERSION,
        "input_shape": list(graph.input_shape),
        "blob": blob_name,
        "layers": records,
    }
    if graph.class_names is not None:
        manifest["class_names"] = list(graph.class_names)
    if graph.input_mean is not None:
        manifest["preprocess"] = {
            "mean": [float(v) for v in graph.input_mean],
            "std": [float(v) for v in graph.input_std],
        }
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (manifest_path.parent / blob_name).write_bytes(b"".join(chunks))
    return manifest_path
