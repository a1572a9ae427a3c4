"""Scalar Lloyd-Max quantization and bit packing of code streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CodeOutOfRange, DegenerateCell, FormatError, InsufficientData

MAX_BITS = 8
DEFAULT_MAX_ITER = 200
DEFAULT_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class Codebook:
    """Sorted reconstruction levels of a ``bits``-bit scalar quantizer.

    Decision thresholds are always the midpoints between adjacent levels.
    """

    bits: int
    levels: np.ndarray
    thresholds: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.bits <= MAX_BITS:
            raise ValueError(f"bits must be in [1, {MAX_BITS}], got {self.bits}")
        lv = np.array(self.levels, dtype=np.float64).reshape(-1)
        if lv.shape != (1 << self.bits,):
            raise ValueError(f"{self.bits}-bit codebook needs {1 << self.bits} levels, got {lv.size}")
        if not np.all(np.isfinite(lv)) or np.any(np.diff(lv) <= 0):
            raise ValueError("levels must be finite and strictly increasing")
        th = (lv[:-1] + lv[1:]) / 2
        lv.setflags(write=False)
        th.setflags(write=False)
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "thresholds", th)

    @classmethod
    def from_levels(cls, levels) -> "Codebook":
        levels = np.asarray(levels, dtype=np.float64)
        bits = int(round(math.log2(levels.size))) if levels.size > 1 else 0
        if levels.size < 2 or (1 << bits) != levels.size:
            raise ValueError(f"level count must be a power of two >= 2, got {levels.size}")
        return cls(bits, levels)

    @property
    def size(self) -> int:
        return 1 << self.bits

    def mse(self, samples) -> float:
        x = np.asarray(samples, dtype=np.float64)
        return float(np.mean((x - dequantize(self, quantize(self, x))) ** 2))


def quantize(c: Codebook, v):
    """Nearest-level code(s) for ``v``. Ties at a threshold go to the higher
    code; values past the outer thresholds clamp to the end codes."""
    if np.ndim(v) and c.bits <= 4:
        # counting thresholds <= v is the same rule, and cheaper for few levels
        v = np.asarray(v)
        idx = np.zeros(v.shape, dtype=np.uint8)
        for t in c.thresholds:
            idx += v >= t
        return idx
    idx = np.searchsorted(c.thresholds, v, side="right")
    if np.ndim(idx) == 0:
        return int(idx)
    return idx.astype(np.uint8 if c.bits <= 8 else np.uint16)


def dequantize(c: Codebook, code):
    code_arr = np.asarray(code)
    if code_arr.size and (code_arr.min() < 0 or code_arr.max() >= c.size):
        raise CodeOutOfRange(f"codes must lie in [0, {c.size})")
    out = c.levels[code_arr]
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _cell_bounds(x_sorted, levels):
    th = (levels[:-1] + levels[1:]) / 2
    # side="left": a sample equal to a threshold lands in the upper cell
    inner = np.searchsorted(x_sorted, th, side="left")
    return np.concatenate([[0], inner, [x_sorted.size]])


def _split_largest(x_sorted, bounds, levels):
    """Drop empty cells and split the most populous ones at their medians."""
    counts = np.diff(bounds)
    keep = list(levels[counts > 0])
    missing = len(levels) - len(keep)
    cells = [x_sorted[bounds[k]:bounds[k + 1]] for k in range(len(levels)) if counts[k] > 0]
    for _ in range(missing):
        order = sorted(range(len(cells)), key=lambda k: -cells[k].size)
        for k in order:
            cell = cells[k]
            med = cell[cell.size // 2]
            lo, hi = cell[cell < med], cell[cell >= med]
            if not lo.size:
                lo, hi = cell[cell <= med], cell[cell > med]
            if lo.size and hi.size:
                break
        else:
            raise DegenerateCell("an empty cell could not be repaired: no cell holds two distinct values")
        cells[k:k + 1] = [lo, hi]
        keep[k:k + 1] = [lo.mean(), hi.mean()]
    return np.array(keep)


def _compander_init(x_sorted, n_levels):
    """Starting levels at equal-mass points of the histogram raised to 1/3,
    the high-resolution optimal level density."""
    n_bins = int(np.clip(x_sorted.size // 50, 64, 4096))
    lo, hi = x_sorted[0], x_sorted[-1]
    counts, edges = np.histogram(x_sorted, bins=n_bins, range=(lo, hi))
    mass = np.concatenate([[0.0], np.cumsum(np.cbrt(counts))])
    probs = (np.arange(n_levels) + 0.5) / n_levels
    return np.interp(probs * mass[-1], mass, edges)


def train_lloyd_max(
    samples,
    bits: int,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    return_history: bool = False,
):
    """Fit a Lloyd-Max codebook to an empirical sample.

    Alternates nearest-neighbor partitioning and centroid updates, starting
    from a compander-style initialization, until no level moves by ``tol`` or
    ``max_iter`` iterations have run. With ``return_history`` the per-iteration
    sample MSE is returned too; it never increases.
    """
    if not 1 <= bits <= MAX_BITS:
        raise ValueError(f"bits must be in [1, {MAX_BITS}], got {bits}")
    x = np.sort(np.asarray(samples, dtype=np.float64).reshape(-1))
    if not np.all(np.isfinite(x)):
        raise ValueError("training samples must be finite")
    n_levels = 1 << bits
    if x.size == 0 or np.count_nonzero(np.diff(x)) + 1 < n_levels:
        raise InsufficientData(f"need at least {n_levels} distinct samples for a {bits}-bit codebook")

    levels = _compander_init(x, n_levels)
    history = []
    for _ in range(max_iter):
        bounds = _cell_bounds(x, levels)
        if np.any(np.diff(bounds) == 0):
            levels = _split_largest(x, bounds, levels)
            bounds = _cell_bounds(x, levels)
            if np.any(np.diff(bounds) == 0):
                raise DegenerateCell("cell repair left an empty cell")
        counts = np.diff(bounds)
        new = np.add.reduceat(x, bounds[:-1]) / counts
        if return_history:  # the dominant per-iteration cost; skip unless asked
            history.append(float(np.mean((x - np.repeat(new, counts)) ** 2)))
        moved = np.max(np.abs(new - levels))
        levels = new
        if moved < tol:
            break
    book = Codebook(bits, levels)
    return (book, history) if return_history else book


# ---------------------------------------------------------------------------
# bit packing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PackedCodes:
    """Codes packed LSB-first: code 0 sits in the low bits of byte 0."""

    bits: int
    count: int
    data: bytes

    def __post_init__(self):
        if len(self.data) != packed_size(self.count, self.bits):
            raise FormatError(f"{self.count} codes of {self.bits} bits need {packed_size(self.count, self.bits)} bytes")


def packed_size(count: int, bits: int) -> int:
    return -(-count * bits // 8)


def pack(codes, bits: int) -> PackedCodes:
    if not 1 <= bits <= MAX_BITS:
        raise ValueError(f"bits must be in [1, {MAX_BITS}], got {bits}")
    c = np.asarray(codes).reshape(-1)
    if c.size and (c.min() < 0 or c.max() >= (1 << bits)):
        raise CodeOutOfRange(f"codes must lie in [0, {1 << bits})")
    c = c.astype(np.uint8)
    planes = (c[:, None] >> np.arange(bits, dtype=np.uint8)) & 1
    return PackedCodes(bits, int(c.size), np.packbits(planes.reshape(-1), bitorder="little").tobytes())


def unpack(p: PackedCodes) -> np.ndarray:
    raw = np.frombuffer(p.data, dtype=np.uint8)
    flat = np.unpackbits(raw, count=p.count * p.bits, bitorder="little")
    planes = flat.reshape(p.count, p.bits).astype(np.uint8)
    return (planes << np.arange(p.bits, dtype=np.uint8)).sum(axis=1, dtype=np.uint8)


# ---------------------------------------------------------------------------
# text serialization
# ---------------------------------------------------------------------------

def dumps_codebook(c: Codebook) -> str:
    return "\n".join([str(c.bits)] + [repr(float(v)) for v in c.levels]) + "\n"


def loads_codebook(text: str) -> Codebook:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    try:
        bits = int(lines[0])
        levels = [float(v) for v in lines[1:]]
        return Codebook(bits, levels)
    except (IndexError, ValueError) as exc:
        raise FormatError(f"bad codebook text: {exc}") from exc


def save_codebook(c: Codebook, path) -> None:
    Path(path).write_text(dumps_codebook(c), encoding="utf-8")


def load_codebook(path) -> Codebook:
    return loads_codebook(Path(path).read_text(encoding="utf-8"))
