"""On-disk feature-tensor format and the in-memory FeatureSet.

The interchange format is a deliberately narrow subset of NPY v1.0:
little-endian float32, C order, exactly 4-D shape (N, H, W, C). The
header is the magic bytes 0x93 'NUMPY', version (1, 0), a 2-byte
little-endian header length, and the header dict padded with spaces so
the payload starts on a 64-byte boundary, terminated by a newline.
Metadata travels in a JSON sidecar (<file>.meta.json) so the array file
stays canonical.
"""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .validation import check_feature_array

MAGIC = b"\x93NUMPY"
VERSION = (1, 0)
ALIGN = 64
SIDECAR_SUFFIX = ".meta.json"

_META_DEFAULTS = {"model_id": "unknown", "dataset_id": "unknown",
                  "layer_tag": "unknown"}


@dataclass
class FeatureSet:
    """N feature tensors of identical shape (H, W, C), float32, finite."""

    tensors: np.ndarray
    model_id: str = "unknown"
    dataset_id: str = "unknown"
    layer_tag: str = "unknown"

    def __post_init__(self):
        self.tensors = check_feature_array(self.tensors)

    @property
    def n(self) -> int:
        return self.tensors.shape[0]

    @property
    def tensor_shape(self) -> tuple[int, int, int]:
        return self.tensors.shape[1:]

    def with_rows(self, index, dataset_id: str | None = None) -> "FeatureSet":
        """Row-subset view as a new FeatureSet (copies the selection)."""
        subset = np.ascontiguousarray(self.tensors[index])
        return replace(self, tensors=subset,
                       dataset_id=dataset_id or self.dataset_id)


def flatten(features: FeatureSet) -> np.ndarray:
    """Flatten to an N x (H*W*C) float32 matrix.

    Row n is vec(tensor n) with channel fastest, then width, then height:
    element (h, w, c) lands at column h*W*C + w*C + c.
    """
    n = features.tensors.shape[0]
    return np.ascontiguousarray(features.tensors).reshape(n, -1)


def _header_bytes(shape: tuple[int, ...]) -> bytes:
    dict_str = ("{'descr': '<f4', 'fortran_order': False, "
                f"'shape': {shape!r}, }}")
    base = len(MAGIC) + 2 + 2        # magic + version + header-length field
    total = base + len(dict_str) + 1  # content + newline
    padded = ((total + ALIGN - 1) // ALIGN) * ALIGN
    header = dict_str + " " * (padded - total) + "\n"
    if len(header) > 0xFFFF:
        raise FormatError("header too long for NPY v1.0")
    return (MAGIC + bytes(VERSION)
            + len(header).to_bytes(2, "little")
            + header.encode("latin1"))


def write_feature_file(features: FeatureSet, path) -> None:
    """Write the tensors as minimal-subset NPY v1.0 plus a JSON sidecar.

    Output is byte-stable: reading it back reproduces the FeatureSet
    exactly.
    """
    path = Path(path)
    arr = features.tensors
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(_header_bytes(arr.shape))
        fh.write(payload)
    sidecar = {"model_id": features.model_id,
               "dataset_id": features.dataset_id,
               "layer_tag": features.layer_tag}
    Path(str(path) + SIDECAR_SUFFIX).write_text(
        json.dumps(sidecar, indent=2) + "\n")


def _parse_header(raw: bytes, path: Path) -> tuple[int, ...]:
    try:
        header = ast.literal_eval(raw.decode("latin1").strip())
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"{path}: unparseable NPY header") from exc
    if not isinstance(header, dict) or set(header) != {
            "descr", "fortran_order", "shape"}:
        raise FormatError(f"{path}: malformed NPY header dict")
    if header["descr"] != "<f4":
        raise FormatError(
            f"{path}: dtype {header['descr']!r} rejected; only little-endian "
            "float32 ('<f4') is accepted")
    if header["fortran_order"] is not False:
        raise FormatError(f"{path}: Fortran-ordered payloads are rejected")
    shape = header["shape"]
    if (not isinstance(shape, tuple) or len(shape) != 4
            or not all(isinstance(v, int) and v >= 0 for v in shape)):
        raise FormatError(
            f"{path}: shape {shape!r} rejected; expected 4-D (N, H, W, C)")
    return shape


def read_feature_file(path) -> FeatureSet:
    """Read a feature file, validating format and finiteness.

    Metadata is taken from the sidecar JSON when present, defaults
    otherwise.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic bytes")
        version = tuple(fh.read(2))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported NPY version {version}")
        hlen_bytes = fh.read(2)
        if len(hlen_bytes) != 2:
            raise FormatError(f"{path}: truncated header length")
        hlen = int.from_bytes(hlen_bytes, "little")
        raw_header = fh.read(hlen)
        if len(raw_header) != hlen:
            raise FormatError(f"{path}: truncated header")
        shape = _parse_header(raw_header, path)
        expected = int(np.prod(shape)) * 4
        payload = fh.read()
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}")
    if shape[0] < 1:
        raise ValidationError(f"{path}: feature file must contain N >= 1 tensors")
    arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
    arr = np.ascontiguousarray(arr).astype(np.float32, copy=False)

    meta = dict(_META_DEFAULTS)
    sidecar = Path(str(path) + SIDECAR_SUFFIX)
    if sidecar.exists():
        loaded = json.loads(sidecar.read_text())
        meta.update({k: loaded[k] for k in _META_DEFAULTS if k in loaded})
    return FeatureSet(tensors=arr, **meta)
