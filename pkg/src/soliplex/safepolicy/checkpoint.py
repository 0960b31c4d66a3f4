"""Checkpoint files: a JSON manifest plus one binary tensor blob.

``<name>.json`` lists every tensor's name, shape, byte offset and byte
length inside ``<name>.bin``, plus free-form run metadata. The blob holds
little-endian float32 values in row-major order, tensors back to back in
manifest order. Keys are sorted so identical runs write identical bytes.
"""

import json
import logging
from pathlib import Path

import numpy as np

from soliplex.safepolicy import SafePolicyError

logger = logging.getLogger(__name__)

FORMAT = "safepolicy-checkpoint"
VERSION = 1
_DTYPE = np.dtype("<f4")


class CheckpointError(SafePolicyError):
    pass


def manifest_path(path: str | Path) -> Path:
    """Normalize ``run/ckpt``, ``run/ckpt.json`` or ``run/ckpt.bin`` to the manifest path."""
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".json")


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray], metadata: dict) -> Path:
    """Write *tensors* and *metadata*; returns the manifest path."""
    manifest_file = manifest_path(path)
    blob_file = manifest_file.with_suffix(".bin")
    manifest_file.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    with open(blob_file, "wb") as blob:
        for name, arr in tensors.items():
            data = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes(order="C")
            entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(data)})
            blob.write(data)
            offset += len(data)
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "blob": blob_file.name,
        "dtype": "float32-le",
        "tensors": entries,
        "metadata": metadata,
    }
    manifest_file.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote checkpoint %s (%d tensors, %d bytes)", manifest_file, len(entries), offset)
    return manifest_file


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        CheckpointError: If the manifest or blob is missing or inconsistent.
    """
    manifest_file = manifest_path(path)
    if not manifest_file.is_file():
        raise CheckpointError(f"Checkpoint not found: {manifest_file}")
    try:
        manifest = json.loads(manifest_file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CheckpointError(f"Corrupt checkpoint manifest {manifest_file}: {e}") from e
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{manifest_file} is not an {FORMAT} manifest")
    blob_file = manifest_file.with_name(manifest["blob"])
    if not blob_file.is_file():
        raise CheckpointError(f"Checkpoint blob not found: {blob_file}")
    raw = blob_file.read_bytes()
    tensors = {}
    for entry in manifest["tensors"]:
        start = entry["offset"]
        end = start + entry["nbytes"]
        if end > len(raw):
            raise CheckpointError(f"Tensor {entry['name']} runs past the end of {blob_file}")
        arr = np.frombuffer(raw[start:end], dtype=_DTYPE).reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(float)
    return tensors, manifest["metadata"]
