"""Binary tensor container shared by model checkpoints and dataset exports.

Layout::

    8 bytes   little-endian uint64: length H of the JSON header
    H bytes   UTF-8 JSON: {"format": ..., "meta": {...},
                           "tensors": [{"name", "shape", "offset", "count"}, ...]}
    payload   little-endian float64 values, tensors back to back in header order

``offset`` and ``count`` are measured in float64 elements from the start of
the payload. Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from fedlf.errors import FormatError

_LEN = struct.Struct("<Q")


def write_container(path, tensors, fmt: str, meta: dict | None = None) -> None:
    entries = []
    offset = 0
    arrays = []
    for name, value in tensors.items():
        a = np.ascontiguousarray(value, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "count": int(a.size)})
        offset += a.size
        arrays.append(a)
    header = json.dumps({"format": fmt, "meta": meta or {}, "tensors": entries},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_LEN.pack(len(header)))
        fh.write(header)
        for a in arrays:
            fh.write(a.tobytes(order="C"))


def read_container(path, fmt: str | None = None):
    """Return ``(tensors, meta)``; tensors is an insertion-ordered dict."""
    raw = Path(path).read_bytes()
    if len(raw) < _LEN.size:
        raise FormatError("file too short for header length", offset=0, path=str(path))
    (hlen,) = _LEN.unpack_from(raw, 0)
    start = _LEN.size + hlen
    if start > len(raw):
        raise FormatError(f"header length {hlen} runs past end of file", offset=0, path=str(path))
    try:
        header = json.loads(raw[_LEN.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable JSON header: {exc}", offset=_LEN.size, path=str(path)) from exc
    if fmt is not None and header.get("format") != fmt:
        raise FormatError(f"expected format {fmt!r}, found {header.get('format')!r}",
                          offset=_LEN.size, path=str(path))
    payload = raw[start:]
    if len(payload) % 8:
        raise FormatError("payload is not a whole number of float64 values",
                          offset=start + len(payload) - len(payload) % 8, path=str(path))
    values = np.frombuffer(payload, dtype="<f8")
    tensors = {}
    for entry in header["tensors"]:
        lo, n = entry["offset"], entry["count"]
        if lo + n > values.size:
            raise FormatError(f"tensor {entry['name']!r} runs past end of payload",
                              offset=start + 8 * lo, path=str(path))
        tensors[entry["name"]] = values[lo:lo + n].astype(np.float64).reshape(entry["shape"])
    return tensors, header.get("meta", {})
