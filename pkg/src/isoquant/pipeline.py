"""Stage-1 quantize/dequantize: norm split, zero padding, blockwise rotation,
scalar quantization, inverse rotation.

Two execution paths produce identical results. ``staged`` rotates the whole
padded vector, quantizes it, and so on, materializing every intermediate.
``fused`` walks the blocks and carries each one through rotate, quantize and
(on decode) unrotate before touching the next.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rotor
from .errors import FormatError, NonFinite, SchemeMismatch, ShapeMismatch
from .quantizer import Codebook, PackedCodes, dequantize, pack, packed_size, quantize, train_lloyd_max, unpack
from .rotor import Kind, RotationScheme

EPS = 1e-12
PATHS = ("fused", "staged")

BATCH_MAGIC = b"ISQB"
BATCH_VERSION = 1
_HEADER = struct.Struct("<4sHBBIQQ")
_RHO = struct.Struct("<d")
_KIND_CODES = {k: i for i, k in enumerate(rotor.ALL_KINDS)}


def scheme_id(s: RotationScheme, c: Codebook) -> str:
    tag = str(s.seed) if s.seed is not None else "h" + s.fingerprint()
    return f"{s.kind.value}/{s.dim}/{tag}/{c.bits}"


@dataclass(frozen=True)
class EncodedVector:
    rho: float
    dim: int
    codes: PackedCodes
    scheme_id: str


@dataclass(frozen=True, eq=False)
class EncodedBatch:
    """``N`` encoded rows: norms ``rho`` and unpacked ``(N, padded_len)`` codes."""

    rho: np.ndarray
    codes: np.ndarray
    dim: int
    bits: int
    scheme_id: str

    def __len__(self) -> int:
        return self.rho.shape[0]

    def __getitem__(self, i: int) -> EncodedVector:
        return EncodedVector(float(self.rho[i]), self.dim, pack(self.codes[i], self.bits), self.scheme_id)

    @classmethod
    def from_vectors(cls, vectors: list[EncodedVector]) -> "EncodedBatch":
        if not vectors:
            raise ValueError("need at least one encoded vector")
        first = vectors[0]
        if any(v.scheme_id != first.scheme_id for v in vectors):
            raise SchemeMismatch("vectors were encoded with different schemes")
        return cls(
            np.array([v.rho for v in vectors]),
            np.stack([unpack(v.codes) for v in vectors]),
            first.dim,
            first.codes.bits,
            first.scheme_id,
        )


def _prepare(xs, s: RotationScheme):
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != s.dim:
        raise ShapeMismatch(f"expected rows of length {s.dim}, got shape {xs.shape}")
    if not np.all(np.isfinite(xs)):
        raise NonFinite("input contains NaN or infinity")
    rho = np.linalg.norm(xs, axis=1)
    padded = np.zeros((xs.shape[0], s.padded_len))
    padded[:, : s.dim] = xs / np.maximum(rho, EPS)[:, None]
    return rho, padded


def _check_path(path):
    if path not in PATHS:
        raise ValueError(f"path must be one of {PATHS}, got {path!r}")


FUSED_CHUNK = 8192


def _fused_map(s: RotationScheme, rows: np.ndarray, step, out_dtype) -> np.ndarray:
    """Run ``step(i, parts) -> parts`` block by block in component-major layout,
    a cache-sized chunk of rows at a time."""
    out = np.empty(rows.shape, dtype=out_dtype)
    slices = s.block_slices()
    for r in range(0, rows.shape[0], FUSED_CHUNK):
        cols = np.ascontiguousarray(rows[r : r + FUSED_CHUNK].T)
        chunk = np.empty(cols.shape, dtype=out_dtype)
        for i, sl in enumerate(slices):
            idx = range(sl.start, sl.stop)
            for j, part in zip(idx, step(i, tuple(cols[j] for j in idx))):
                chunk[j] = part
        out[r : r + FUSED_CHUNK] = chunk.T
    return out


def encode_batch(xs, s: RotationScheme, c: Codebook, path: str = "fused") -> EncodedBatch:
    """Encode the rows of an ``N x d`` matrix."""
    _check_path(path)
    rho, padded = _prepare(xs, s)
    if path == "staged":
        codes = quantize(c, rotor.forward(s, padded))
    elif s.kind is Kind.DENSE:
        codes = quantize(c, s.forward_block(0, padded))
    else:
        codes = _fused_map(s, padded, lambda i, v: [quantize(c, p) for p in s.forward_block_parts(i, v)], np.uint8)
    return EncodedBatch(rho, codes, s.dim, c.bits, scheme_id(s, c))


def decode_batch(e: EncodedBatch, s: RotationScheme, c: Codebook, path: str = "fused") -> np.ndarray:
    _check_path(path)
    if e.scheme_id != scheme_id(s, c):
        raise SchemeMismatch(f"batch was encoded with {e.scheme_id}, not {scheme_id(s, c)}")
    if e.codes.shape[1:] != (s.padded_len,):
        raise ShapeMismatch(f"expected {s.padded_len} codes per row, got {e.codes.shape[1:]}")
    if path == "staged":
        unit = rotor.inverse(s, dequantize(c, e.codes))
    elif s.kind is Kind.DENSE:
        unit = s.inverse_block(0, dequantize(c, e.codes))
    else:
        unit = _fused_map(s, e.codes, lambda i, v: s.inverse_block_parts(i, [dequantize(c, p) for p in v]), np.float64)
    return e.rho[:, None] * unit[:, : s.dim]


def encode(x, s: RotationScheme, c: Codebook, path: str = "fused") -> EncodedVector:
    """Encode one length-``d`` vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch(f"expected a 1-D vector, got shape {x.shape}")
    return encode_batch(x[None, :], s, c, path)[0]


def decode(e: EncodedVector, s: RotationScheme, c: Codebook, path: str = "fused") -> np.ndarray:
    if e.codes.count != s.padded_len:
        raise ShapeMismatch(f"expected {s.padded_len} codes, got {e.codes.count}")
    if e.codes.bits != c.bits:
        raise SchemeMismatch(f"codes use {e.codes.bits} bits, codebook has {c.bits}")
    return decode_batch(EncodedBatch.from_vectors([e]), s, c, path)[0]


def reconstruct(xs, s: RotationScheme, c: Codebook, path: str = "fused") -> np.ndarray:
    """Quantize and dequantize rows without keeping the code stream."""
    _check_path(path)
    if path == "staged":
        return decode_batch(encode_batch(xs, s, c, "staged"), s, c, "staged")
    rho, padded = _prepare(xs, s)

    def step(i, v):
        levels = [dequantize(c, quantize(c, p)) for p in s.forward_block_parts(i, v)]
        return s.inverse_block_parts(i, levels)

    if s.kind is Kind.DENSE:
        unit = s.inverse_block(0, dequantize(c, quantize(c, s.forward_block(0, padded))))
    else:
        unit = _fused_map(s, padded, step, np.float64)
    return rho[:, None] * unit[:, : s.dim]


def batch_mse(xs, s: RotationScheme, c: Codebook, path: str = "fused") -> float:
    """Mean of ``(x - x_hat)**2`` over all ``N * d`` coordinates."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] < 1:
        raise ShapeMismatch(f"expected a non-empty N x d matrix, got shape {xs.shape}")
    return float(np.mean((xs - reconstruct(xs, s, c, path)) ** 2))


def rotated_coordinates(xs, s: RotationScheme) -> np.ndarray:
    """All padded, rotated, normalized coordinates of ``xs`` as one flat array."""
    _, padded = _prepare(xs, s)
    return rotor.forward(s, padded).reshape(-1)


def train_codebook(s: RotationScheme, bits: int, held_out, **kwargs) -> Codebook:
    """Lloyd-Max codebook fit to the pooled rotated coordinates of ``held_out`` rows."""
    return train_lloyd_max(rotated_coordinates(held_out, s), bits, **kwargs)


# ---------------------------------------------------------------------------
# batch file format
# ---------------------------------------------------------------------------

def batch_to_bytes(e: EncodedBatch, s: RotationScheme) -> bytes:
    """Serialize: little-endian header then one ``(rho, packed codes)`` record per row.

    Header fields: magic ``ISQB``, u16 version, u8 bits, u8 kind, u32 d,
    u64 seed, u64 N. The scheme must have been drawn from a seed.
    """
    if s.seed is None:
        raise FormatError("batch files identify schemes by seed; this scheme has none")
    if not e.scheme_id.startswith(f"{s.kind.value}/{s.dim}/{s.seed}/"):
        raise SchemeMismatch(f"batch {e.scheme_id} does not belong to the given scheme")
    parts = [_HEADER.pack(BATCH_MAGIC, BATCH_VERSION, e.bits, _KIND_CODES[s.kind], e.dim, s.seed, len(e))]
    for i in range(len(e)):
        parts.append(_RHO.pack(float(e.rho[i])))
        parts.append(pack(e.codes[i], e.bits).data)
    return b"".join(parts)


def batch_from_bytes(buf: bytes) -> tuple[EncodedBatch, dict]:
    """Inverse of :func:`batch_to_bytes`; also returns the header as a dict."""
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, bits, kind_code, d, seed, n = _HEADER.unpack_from(buf, 0)
    if magic != BATCH_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != BATCH_VERSION:
        raise FormatError(f"unsupported batch version {version}")
    try:
        kind = rotor.ALL_KINDS[kind_code]
    except IndexError as exc:
        raise FormatError(f"unknown scheme kind code {kind_code}") from exc
    padded_len = rotor.block_counts(kind, d)["padded_len"]
    rec = _RHO.size + packed_size(padded_len, bits)
    if len(buf) != _HEADER.size + n * rec:
        raise FormatError(f"expected {_HEADER.size + n * rec} bytes for {n} records, got {len(buf)}")
    rho = np.empty(n)
    codes = np.empty((n, padded_len), dtype=np.uint8)
    off = _HEADER.size
    for i in range(n):
        (rho[i],) = _RHO.unpack_from(buf, off)
        codes[i] = unpack(PackedCodes(bits, padded_len, buf[off + _RHO.size : off + rec]))
        off += rec
    header = {"version": version, "dim": d, "bits": bits, "kind": kind, "seed": seed, "n": n}
    return EncodedBatch(rho, codes, d, bits, f"{kind.value}/{d}/{seed}/{bits}"), header


def write_batch(path, e: EncodedBatch, s: RotationScheme) -> None:
    Path(path).write_bytes(batch_to_bytes(e, s))


def read_batch(path) -> tuple[EncodedBatch, dict]:
    return batch_from_bytes(Path(path).read_bytes())
