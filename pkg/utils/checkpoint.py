"""
Checkpoint Container ("DIF1")
Layout: magic | version | metadata JSON | shape directory JSON | float32 LE payload
"""

import hashlib
import json
import struct
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from utils.errors import CheckpointError

MAGIC = b"DIF1"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")


def write_checkpoint(path: str, type_tag: str, metadata: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> str:
    """
    Serialize metadata plus named arrays

    Args:
        path: Output file
        type_tag: "denoiser" | "fingerprint" | "model"
        metadata: JSON-serializable document
        arrays: Named arrays, stored as little-endian float32

    Returns:
        SHA-256 of the written file
    """
    meta = dict(metadata)
    meta["type"] = type_tag
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")

    directory = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        data = np.ascontiguousarray(arrays[name], dtype="<f4")
        raw = data.tobytes()
        directory.append({"name": name, "shape": list(data.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    dir_bytes = json.dumps(directory).encode("utf-8")

    blob = b"".join([
        MAGIC,
        _U32.pack(FORMAT_VERSION),
        _U32.pack(len(meta_bytes)), meta_bytes,
        _U32.pack(len(dir_bytes)), dir_bytes,
        *chunks,
    ])
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def read_checkpoint(path: str) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Load a DIF1 file

    Returns:
        (metadata, arrays); metadata gains "content_hash" (SHA-256 of the file)
    """
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"Cannot read checkpoint {path}: {exc}") from exc
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a DIF1 checkpoint")

    try:
        pos = 4
        (version,) = _U32.unpack_from(blob, pos)
        pos += 4
        if version > FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        (meta_len,) = _U32.unpack_from(blob, pos)
        pos += 4
        metadata = json.loads(blob[pos:pos + meta_len].decode("utf-8"))
        pos += meta_len
        (dir_len,) = _U32.unpack_from(blob, pos)
        pos += 4
        directory = json.loads(blob[pos:pos + dir_len].decode("utf-8"))
        pos += dir_len
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc

    payload = blob[pos:]
    expected = sum(entry["nbytes"] for entry in directory)
    if len(payload) != expected:
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, directory declares {expected}")

    arrays = {}
    for entry in directory:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        if entry["nbytes"] != 4 * count:
            raise CheckpointError(f"{path}: entry {entry['name']} size does not match its shape")
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(entry["shape"])

    metadata["content_hash"] = hashlib.sha256(blob).hexdigest()
    return metadata, arrays


def file_sha256(path: str) -> str:
    """SHA-256 of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
