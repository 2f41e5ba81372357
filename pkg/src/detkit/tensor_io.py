"""Named-tensor files: a JSON manifest next to little-endian float32 blobs.

Manifest layout::

    {"format": "detkit-tensors/1",
     "tensors": [{"name": "rpn_conv.weight", "shape": [512, 512, 3, 3],
                  "file": "rpn_conv.weight.bin", "offset": 0}, ...]}

Blobs are row-major (C order); conv weights are ordered
(out-channel, in-channel, ky, kx). ``file`` is relative to the manifest.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

FORMAT = "detkit-tensors/1"
DTYPE = np.dtype("<f4")


class TensorFileError(ValueError):
    pass


def save_tensors(tensors: dict[str, np.ndarray], manifest_path) -> None:
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, value in tensors.items():
        arr = np.ascontiguousarray(value, dtype=DTYPE)
        fname = f"{manifest_path.stem}.{name}.bin"
        _atomic_write_bytes(root / fname, arr.tobytes(order="C"))
        entries.append({"name": name, "shape": list(arr.shape), "file": fname, "offset": 0})
    text = json.dumps({"format": FORMAT, "tensors": entries}, indent=1) + "\n"
    _atomic_write_bytes(manifest_path, text.encode("utf-8"))


def load_tensors(manifest_path) -> dict[str, np.ndarray]:
    """Load every tensor in a manifest as float64 arrays."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TensorFileError(f"{manifest_path}: malformed manifest: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT:
        raise TensorFileError(f"{manifest_path}: not a {FORMAT} manifest")
    out = {}
    for entry in manifest.get("tensors", []):
        try:
            name = entry["name"]
            shape = tuple(int(d) for d in entry["shape"])
            fname = entry["file"]
            offset = int(entry.get("offset", 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise TensorFileError(f"{manifest_path}: bad tensor entry {entry!r}") from exc
        count = int(np.prod(shape, dtype=np.int64))
        raw = (manifest_path.parent / fname).read_bytes()
        need = offset + count * DTYPE.itemsize
        if len(raw) < need:
            raise TensorFileError(
                f"{fname}: tensor {name!r} needs {need} bytes, file has {len(raw)}"
            )
        arr = np.frombuffer(raw, dtype=DTYPE, count=count, offset=offset)
        out[name] = arr.reshape(shape).astype(np.float64)
    return out


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
