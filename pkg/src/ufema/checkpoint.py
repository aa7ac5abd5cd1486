"""Self-describing checkpoint container.

Layout::

    UFEMA-CKPT <format_version>\\n
    <header byte length>\\n
    <JSON header, keys sorted>\\n
    <payload: arrays back to back, little-endian>
    \\nSHA256 <hex digest of everything above>\\n

The header lists every array with its dtype, shape and byte offset into
the payload, so other languages can read the file without this package.
Floating-point parameters are stored as ``<f4``.
"""
from __future__ import annotations

import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"UFEMA-CKPT"
FORMAT_VERSION = 1
_DTYPES = {"<f4", "<f8", "<i8", "|u1"}


def _canonical(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype.kind == "f":
        return a.astype("<f4") if a.dtype.itemsize <= 4 else a.astype("<f8")
    if a.dtype == np.uint8 or a.dtype.kind == "b":
        return a.astype("|u1")
    if a.dtype.kind in "iu":
        return a.astype("<i8")
    raise CheckpointError(f"unsupported array dtype {a.dtype}")


def dumps(kind: str, meta: dict, arrays: dict) -> bytes:
    entries, chunks, offset = [], [], 0
    for name in arrays:
        a = _canonical(arrays[name]).copy(order="C")
        raw = a.tobytes()
        entries.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"kind": kind, "meta": meta, "arrays": entries},
                        sort_keys=True, separators=(",", ":")).encode()
    body = b"".join([MAGIC, b" %d\n" % FORMAT_VERSION, b"%d\n" % len(header), header, b"\n", *chunks])
    return body + b"\nSHA256 " + hashlib.sha256(body).hexdigest().encode() + b"\n"


def loads(data: bytes) -> tuple[str, dict, dict]:
    if not data.startswith(MAGIC):
        raise CheckpointError("not a ufema checkpoint (bad magic)")
    cut = data.rfind(b"\nSHA256 ")
    if cut < 0 or not data.endswith(b"\n"):
        raise CheckpointError("checkpoint truncated: trailing checksum missing")
    body, digest = data[:cut], data[cut + 8:-1].decode("ascii", "replace")
    if hashlib.sha256(body).hexdigest() != digest:
        raise CheckpointError("checkpoint checksum mismatch (file truncated or corrupted)")

    buf = io.BytesIO(body)
    first = buf.readline().split()
    if len(first) != 2 or int(first[1]) != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {first[1:]!r}")
    n = int(buf.readline())
    header = json.loads(buf.read(n))
    buf.read(1)
    payload = buf.read()
    arrays = {}
    for e in header["arrays"]:
        if e["dtype"] not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {e['dtype']} for {e['name']}")
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(raw, dtype=e["dtype"]).reshape(e["shape"]).copy()
    return header["kind"], header["meta"], arrays


def save(path, kind: str, meta: dict, arrays: dict) -> None:
    """Write atomically (temp file + rename) so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(kind, meta, arrays))
    os.replace(tmp, path)


def load(path, expect_kind: str | None = None) -> tuple[str, dict, dict]:
    kind, meta, arrays = loads(Path(path).read_bytes())
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(f"{path}: expected a {expect_kind!r} checkpoint, found {kind!r}")
    return kind, meta, arrays


def module_arrays(module, prefix: str = "") -> dict:
    """Flatten a torch module's state dict into numpy arrays."""
    return {prefix + k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def load_module_arrays(module, arrays: dict, prefix: str = "") -> None:
    import torch

    state = module.state_dict()
    new = {}
    for k, v in state.items():
        if prefix + k not in arrays:
            raise CheckpointError(f"checkpoint lacks tensor {prefix + k}")
        a = arrays[prefix + k]
        if tuple(a.shape) != tuple(v.shape):
            raise CheckpointError(f"shape mismatch for {prefix + k}: {a.shape} vs {tuple(v.shape)}")
        new[k] = torch.from_numpy(np.array(a)).to(v.dtype)
    module.load_state_dict(new)


def array_hash(arrays: dict) -> str:
    """SHA-256 over names, dtypes, shapes and bytes, in key order."""
    h = hashlib.sha256()
    for name in sorted(arrays):
        a = _canonical(arrays[name]).copy(order="C")
        h.update(name.encode())
        h.update(a.dtype.str.encode())
        h.update(repr(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()
