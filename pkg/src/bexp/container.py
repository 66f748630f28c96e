"""Versioned binary container used by every checkpoint in the repo.

Layout (documented, stable):

    bytes 0..7    magic + version, ASCII ``BEXC0001``
    bytes 8..15   header length L, little-endian uint64
    bytes 16..16+L  UTF-8 JSON header::

        {"meta": {...arbitrary JSON...},
         "arrays": [{"name": str, "dtype": str, "shape": [int, ...]}, ...]}

    remainder     the raw array payloads, C-order, concatenated in the
                  order they appear in ``arrays``

Only a small dtype whitelist is accepted so that a corrupted header can
never trigger huge or exotic allocations.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"BEXC0001"

_ALLOWED_DTYPES = {"float64", "int64", "bool"}


def write_container(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write ``meta`` and named arrays to ``path`` in declaration order."""
    entries = []
    payload = bytearray()
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.name not in _ALLOWED_DTYPES:
            raise ValueError(f"dtype {arr.dtype.name!r} not supported by container")
        entries.append({"name": name, "dtype": arr.dtype.name, "shape": list(arr.shape)})
        payload += arr.tobytes()
    header = json.dumps({"meta": meta, "arrays": entries}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container written by :func:`write_container`.

    Returns ``(meta, arrays)``. Raises ``ValueError`` on a bad magic header,
    truncated file, or disallowed dtype.
    """
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a bexp container (bad magic {blob[:8]!r})")
    if len(blob) < 16:
        raise ValueError(f"{path}: truncated container header")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    arrays: dict[str, np.ndarray] = {}
    offset = 16 + hlen
    for entry in header["arrays"]:
        dtype = entry["dtype"]
        if dtype not in _ALLOWED_DTYPES:
            raise ValueError(f"{path}: disallowed dtype {dtype!r}")
        shape = tuple(entry["shape"])
        nbytes = int(np.dtype(dtype).itemsize * np.prod(shape, dtype=np.int64)) if shape else np.dtype(dtype).itemsize
        raw = blob[offset : offset + nbytes]
        if len(raw) != nbytes:
            raise ValueError(f"{path}: truncated payload for array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        offset += nbytes
    return header["meta"], arrays
