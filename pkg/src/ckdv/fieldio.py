"""Binary field dumps.

Layout (little-endian): a 32-byte header made of a 24-byte ASCII magic
(zero padded) and a u64 format version, then ``N`` (u64), ``L`` (f64) and
``t`` (f64), then ``2N`` doubles of interleaved re/im spectral coefficients
for ``u`` followed by the same for ``v``.  A JSON sidecar with the header
values sits next to each dump.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FieldFormatError
from .spectral import Field, SpectralGrid

MAGIC = b"CKDV-FIELD-DUMP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<24sQ")
_META = struct.Struct("<Qdd")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_fields(path, u: Field, v: Field | None = None, t: float = 0.0) -> Path:
    """Write ``u`` (and ``v``, zero if omitted) with a JSON sidecar."""
    if v is None:
        v = Field.zeros(u.grid)
    if v.grid != u.grid:
        raise ValueError("u and v must share a grid")
    grid = u.grid
    path = Path(path)
    body = np.concatenate([u.coeffs, v.coeffs]).astype("<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION))
        fh.write(_META.pack(grid.N, grid.L, float(t)))
        fh.write(body)
    meta = {"magic": MAGIC.decode(), "version": FORMAT_VERSION, "N": grid.N,
            "L": grid.L, "t": float(t), "fields": ["u", "v"]}
    sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")
    return path


def read_fields(path) -> tuple[Field, Field, float]:
    """Read a dump; returns ``(u, v, t)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size + _META.size:
        raise FieldFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version = _HEADER.unpack_from(data, 0)
    magic = magic.rstrip(b"\0")
    if magic != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FieldFormatError(
            f"{path}: format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    n, length, t = _META.unpack_from(data, _HEADER.size)
    try:
        grid = SpectralGrid(int(n), length)
    except ValueError as exc:
        raise FieldFormatError(f"{path}: invalid grid in header: {exc}") from None
    offset = _HEADER.size + _META.size
    expected = offset + 2 * n * 16
    if len(data) != expected:
        raise FieldFormatError(
            f"{path}: expected {expected} bytes for N={n}, found {len(data)}"
        )
    body = np.frombuffer(data, dtype="<c16", offset=offset).astype(complex)
    return Field(body[:n].copy(), grid), Field(body[n:].copy(), grid), float(t)


class CheckpointWriter:
    """Observer that dumps every state it sees into ``directory``."""

    def __init__(self, directory, prefix: str = "state"):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.prefix = prefix
        self.paths = []

    def __call__(self, state):
        path = self.directory / f"{self.prefix}_{len(self.paths):05d}.bin"
        write_fields(path, state.u, state.v, state.t)
        self.paths.append(path)
