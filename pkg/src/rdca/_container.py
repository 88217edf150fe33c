"""Shared binary container: magic, version, header, payload, checksum.

Layout (all little-endian)::

    magic    4 bytes
    version  u16
    hlen     u32     length of the JSON header
    header   hlen bytes, UTF-8 JSON
    arrays   float64 / int64 blobs, sizes implied by the header
    checksum u64     blake2b-64 of every preceding byte
"""
import hashlib
import json
import struct

import numpy as np

from .exceptions import ChecksumError, FormatError, TruncatedFileError, VersionMismatchError

_PREFIX = struct.Struct("<4sHI")
_CHECKSUM = struct.Struct("<Q")


def checksum(data):
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def encode(magic, version, header, arrays):
    """Serialize ``header`` (JSON-able dict) and ``arrays`` (list of ndarrays).

    Array dtypes and shapes are recorded in the header.
    """
    header = dict(header)
    header["arrays"] = []
    blobs = []
    for a in arrays:
        a = np.asarray(a)
        if a.dtype.kind == "f":
            a = a.astype("<f8", copy=False)
        elif a.dtype.kind in "iu":
            a = a.astype("<i8", copy=False)
        else:
            raise TypeError(f"unsupported dtype {a.dtype}")
        header["arrays"].append({"dtype": a.dtype.str, "shape": list(a.shape)})
        blobs.append(np.ascontiguousarray(a).tobytes())
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = _PREFIX.pack(magic, version, len(hbytes)) + hbytes + b"".join(blobs)
    return body + _CHECKSUM.pack(checksum(body))


def decode(raw, magic, version):
    """Inverse of :func:`encode`; returns ``(header, arrays)``."""
    if len(raw) < _PREFIX.size:
        if raw[:4] != magic[: len(raw[:4])]:
            raise FormatError("bad magic bytes")
        raise TruncatedFileError("file shorter than its fixed header")
    got_magic, got_version, hlen = _PREFIX.unpack_from(raw)
    if got_magic != magic:
        raise FormatError(f"bad magic bytes {got_magic!r}, expected {magic!r}")
    if got_version != version:
        raise VersionMismatchError(f"format version {got_version}, expected {version}")
    start = _PREFIX.size
    if len(raw) < start + hlen + _CHECKSUM.size:
        raise TruncatedFileError("file truncated inside header")
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
        specs = header.pop("arrays")
        sizes = [int(np.prod(s["shape"], dtype=np.int64)) * 8 for s in specs]
    except (ValueError, KeyError, TypeError) as exc:
        # a corrupted header is more likely a checksum problem than bad JSON
        body_ok = len(raw) >= _CHECKSUM.size and checksum(raw[:-_CHECKSUM.size]) == \
            _CHECKSUM.unpack_from(raw, len(raw) - _CHECKSUM.size)[0]
        if not body_ok:
            raise ChecksumError("header corrupted (checksum mismatch)") from exc
        raise FormatError(f"malformed header: {exc}") from exc
    expected = start + hlen + sum(sizes) + _CHECKSUM.size
    if len(raw) < expected:
        raise TruncatedFileError(f"file has {len(raw)} bytes, expected {expected}")
    if len(raw) > expected:
        raise FormatError(f"{len(raw) - expected} trailing bytes after checksum")
    body = raw[:-_CHECKSUM.size]
    (stored,) = _CHECKSUM.unpack_from(raw, len(body))
    if checksum(body) != stored:
        raise ChecksumError("checksum mismatch")
    arrays = []
    offset = start + hlen
    for spec, size in zip(specs, sizes):
        a = np.frombuffer(raw, dtype=spec["dtype"], count=size // 8, offset=offset)
        arrays.append(a.reshape(spec["shape"]).astype(a.dtype.newbyteorder("="), copy=True))
        offset += size
    return header, arrays


def write(path, magic, version, header, arrays):
    data = encode(magic, version, header, arrays)
    with open(path, "wb") as fh:
        fh.write(data)


def read(path, magic, version):
    with open(path, "rb") as fh:
        raw = fh.read()
    return decode(raw, magic, version)
