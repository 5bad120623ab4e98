"""
Tensor container file format.

A container is a sequence of records. Each record is::

    b"MEWT" | version u16 | dtype u8 | ndim u8 | ndim x u64 dims | payload

All integers and payloads are little-endian. ``dtype`` is 0 for float32,
1 for float64 and 255 for the JSON manifest, which must be the last record
and carries ``{"records": [name, ...], ...metadata}`` naming the tensor
records in order. Datasets and checkpoints are both stored this way.
"""

import json
import os
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from .errors import ContainerError

MAGIC = b"MEWT"
VERSION = 1
DTYPE_F32 = 0
DTYPE_F64 = 1
DTYPE_MANIFEST = 255

_HEADER = struct.Struct("<4sHBB")
_DIM = struct.Struct("<Q")
_NUMPY_DTYPES = {DTYPE_F32: np.dtype("<f4"), DTYPE_F64: np.dtype("<f8")}


def _dtype_code(array: np.ndarray) -> int:
    if array.dtype == np.float32:
        return DTYPE_F32
    if array.dtype == np.float64:
        return DTYPE_F64
    raise ContainerError(f"Unsupported dtype for container record: {array.dtype}")


def _encode_record(code: int, dims: Tuple[int, ...], payload: bytes) -> bytes:
    head = _HEADER.pack(MAGIC, VERSION, code, len(dims))
    return head + b"".join(_DIM.pack(d) for d in dims) + payload


def encode_container(records: Mapping[str, np.ndarray],
                     metadata: Optional[Dict[str, Any]] = None) -> bytes:
    """
    Serialize named tensors plus a trailing manifest to bytes.

    Parameters
    ----------
    records : mapping of str to np.ndarray
        Tensors to store, in iteration order. Only float32 and float64 are
        accepted.
    metadata : dict, optional
        Extra JSON-serializable fields merged into the manifest.

    Returns
    -------
    bytes
        The encoded container.
    """
    chunks = []
    names = []
    for name, array in records.items():
        array = np.asarray(array)
        code = _dtype_code(array)
        if array.ndim > 255:
            raise ContainerError(f"Record {name!r} has too many dimensions")
        payload = np.ascontiguousarray(array, dtype=_NUMPY_DTYPES[code]).tobytes()
        chunks.append(_encode_record(code, array.shape, payload))
        names.append(name)

    manifest = dict(metadata or {})
    if "records" in manifest:
        raise ContainerError("Metadata may not define the reserved key 'records'")
    manifest["records"] = names
    text = json.dumps(manifest, sort_keys=True).encode("utf-8")
    chunks.append(_encode_record(DTYPE_MANIFEST, (len(text),), text))
    return b"".join(chunks)


def decode_container(blob: bytes) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    Parse a container produced by ``encode_container``.

    Returns
    -------
    records : dict of str to np.ndarray
        Tensors keyed by the names in the manifest, in file order.
    manifest : dict
        The decoded manifest, including the ``records`` list.

    Raises
    ------
    ContainerError
        On bad magic, unknown version or dtype, truncation, a missing
        manifest, or a manifest that does not match the records.
    """
    view = memoryview(blob)
    offset = 0
    arrays = []
    manifest = None

    while offset < len(view):
        if manifest is not None:
            raise ContainerError("Data found after the manifest record")
        if offset + _HEADER.size > len(view):
            raise ContainerError("Truncated record header")
        magic, version, code, ndim = _HEADER.unpack_from(view, offset)
        if magic != MAGIC:
            raise ContainerError(f"Bad magic bytes {bytes(magic)!r} at offset {offset}")
        if version != VERSION:
            raise ContainerError(f"Unsupported container version {version}")
        offset += _HEADER.size

        if offset + ndim * _DIM.size > len(view):
            raise ContainerError("Truncated record dimensions")
        dims = tuple(_DIM.unpack_from(view, offset + i * _DIM.size)[0] for i in range(ndim))
        offset += ndim * _DIM.size

        if code == DTYPE_MANIFEST:
            if ndim != 1:
                raise ContainerError("Manifest record must be one-dimensional")
            size = dims[0]
            if offset + size > len(view):
                raise ContainerError("Truncated manifest record")
            try:
                manifest = json.loads(bytes(view[offset:offset + size]).decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as e:
                raise ContainerError(f"Manifest is not valid JSON: {e}") from e
            offset += size
            continue

        if code not in _NUMPY_DTYPES:
            raise ContainerError(f"Unknown dtype code {code}")
        dtype = _NUMPY_DTYPES[code]
        size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        if offset + size > len(view):
            raise ContainerError("Truncated tensor payload")
        array = np.frombuffer(view[offset:offset + size], dtype=dtype).reshape(dims)
        arrays.append(array.astype(dtype.newbyteorder("="), copy=True))
        offset += size

    if manifest is None:
        raise ContainerError("Container has no manifest record")
    names = manifest.get("records")
    if not isinstance(names, list) or len(names) != len(arrays):
        raise ContainerError(
            f"Manifest names {0 if not isinstance(names, list) else len(names)} "
            f"records but the file holds {len(arrays)}"
        )
    if len(set(names)) != len(names):
        raise ContainerError("Manifest contains duplicate record names")
    return dict(zip(names, arrays)), manifest


def write_container(path: Union[str, Path], records: Mapping[str, np.ndarray],
                    metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Write a container file atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(encode_container(records, metadata))
    os.replace(tmp, path)
    return path


def read_container(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Read and validate a container file; see ``decode_container``."""
    path = Path(path)
    if not path.exists():
        raise ContainerError(f"Container file not found: {path}")
    with open(path, "rb") as f:
        return decode_container(f.read())
