"""Sweep harness: MSE, complexity and CPU timing per (scheme, dim, bits).

Timings are single-process CPU medians in microseconds per full batch and are
informational only. Speedups are relative to this package's Rotor3D baseline.
"""

from __future__ import annotations

import argparse
import csv
import ctypes
import ctypes.util
import dataclasses
import gc
import io
import math
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import pipeline, rotor
from .data import DataModel, generate_data
from .errors import ConfigError
from .rotor import Kind

CSV_HEADER = ["scheme", "dim", "bits", "batch", "seed", "mse", "params", "fmas",
              "encode_us", "decode_us", "speedup_vs_rotor3d"]
DEFAULT_SCHEMES = (Kind.FULL, Kind.FAST, Kind.PLANAR2D, Kind.ROTOR3D)

__all__ = ["BenchConfig", "BenchRow", "generate_data", "run_sweep", "time_kernel", "write_csv", "main"]


@dataclass(frozen=True)
class BenchConfig:
    dims: tuple[int, ...] = (128, 256, 512)
    bits: tuple[int, ...] = (2, 3, 4)
    schemes: tuple[Kind, ...] = DEFAULT_SCHEMES
    batch: int = 8192
    seed: int = 0
    data_model: DataModel = field(default_factory=DataModel)
    output_path: str | None = "bench.csv"
    repeats: int = 51
    warmup: int = 10
    parallel: bool = False
    codebook_coords: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        object.__setattr__(self, "schemes", tuple(Kind.parse(k) for k in self.schemes))
        if isinstance(self.data_model, str):
            object.__setattr__(self, "data_model", DataModel.parse(self.data_model))
        if not (self.dims and self.bits and self.schemes):
            raise ConfigError("dims, bits and schemes must all be non-empty")
        if min(self.dims) < 1:
            raise ConfigError("dims must be positive")
        if min(self.bits) < 1 or max(self.bits) > 8:
            raise ConfigError("bits must lie in 1..8")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if self.repeats < 5:
            raise ConfigError("repeats must be >= 5")
        if self.warmup < 0:
            raise ConfigError("warmup must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


@dataclass
class BenchRow:
    scheme: str
    dim: int
    bits: int
    batch: int
    seed: int
    mse: float
    params: int
    fmas: int
    encode_us: float
    decode_us: float
    speedup_vs_rotor3d: float | None = None

    def csv_fields(self) -> list[str]:
        speed = "" if self.speedup_vs_rotor3d is None else f"{self.speedup_vs_rotor3d:.4f}"
        return [self.scheme, str(self.dim), str(self.bits), str(self.batch), str(self.seed),
                repr(self.mse), str(self.params), str(self.fmas),
                f"{self.encode_us:.3f}", f"{self.decode_us:.3f}", speed]


_ALLOCATOR_PINNED = False


def pin_allocator() -> bool:
    """Keep large temporaries on glibc's heap between timed calls.

    By default glibc maps and unmaps multi-megabyte buffers on every call, and
    the resulting page faults dominate run-to-run timing noise. Returns whether
    the setting was applied (False off glibc).
    """
    global _ALLOCATOR_PINNED
    if not _ALLOCATOR_PINNED:
        try:
            libc = ctypes.CDLL(ctypes.util.find_library("c"))
            m_trim_threshold, m_mmap_threshold = -1, -3
            _ALLOCATOR_PINNED = bool(libc.mallopt(m_trim_threshold, 1 << 30)
                                     and libc.mallopt(m_mmap_threshold, 32 << 20))
        except (OSError, AttributeError, TypeError):
            return False
    return _ALLOCATOR_PINNED


def time_kernel(f: Callable[[], object], repeats: int = 51, warmup: int = 10) -> float:
    """Median wall-clock time of ``f()`` in microseconds after ``warmup`` discarded calls.

    The garbage collector is paused while timing, as ``timeit`` does, and the
    allocator is pinned (see :func:`pin_allocator`).
    """
    if repeats < 5:
        raise ValueError("repeats must be >= 5")
    pin_allocator()
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(warmup):
            f()
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter_ns()
            f()
            samples.append(time.perf_counter_ns() - t0)
    finally:
        if was_enabled:
            gc.enable()
    return statistics.median(samples) / 1000.0


def eval_rng(cfg: BenchConfig, d: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, 1, d])


def held_out_rng(cfg: BenchConfig, d: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, 2, d])


def build_cell(cfg: BenchConfig, kind: Kind, d: int):
    """Scheme plus one trained codebook per bit width for ``(kind, d)``."""
    s = rotor.new_scheme(kind, d, cfg.seed)
    held = generate_data(cfg.data_model, math.ceil(cfg.codebook_coords / d), d, held_out_rng(cfg, d))
    coords = pipeline.rotated_coordinates(held, s)
    books = {b: pipeline.train_lloyd_max(coords, b) for b in cfg.bits}
    return s, books


def _run_cell(cfg: BenchConfig, kind: Kind, d: int, xs: np.ndarray) -> list[BenchRow]:
    s, books = build_cell(cfg, kind, d)
    cx = rotor.complexity(s)
    rows = []
    for b in cfg.bits:
        c = books[b]
        enc = pipeline.encode_batch(xs, s, c)
        rows.append(BenchRow(
            scheme=kind.value, dim=d, bits=b, batch=cfg.batch, seed=cfg.seed,
            mse=float(np.mean((xs - pipeline.decode_batch(enc, s, c)) ** 2)),
            params=cx.params, fmas=cx.fmas,
            encode_us=time_kernel(lambda: pipeline.encode_batch(xs, s, c), cfg.repeats, cfg.warmup),
            decode_us=time_kernel(lambda: pipeline.decode_batch(enc, s, c), cfg.repeats, cfg.warmup),
        ))
    return rows


def run_sweep(cfg: BenchConfig, write: bool = True) -> list[BenchRow]:
    """Run every (scheme, dim, bits) cell; write the CSV if ``cfg.output_path`` is set."""
    data = {d: generate_data(cfg.data_model, cfg.batch, d, eval_rng(cfg, d)) for d in cfg.dims}
    cells = [(kind, d) for d in cfg.dims for kind in cfg.schemes]
    if cfg.parallel:
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(lambda kd: _run_cell(cfg, kd[0], kd[1], data[kd[1]]), cells))
    else:
        results = [_run_cell(cfg, kind, d, data[d]) for kind, d in cells]
    rows = [r for cell in results for r in cell]

    base = {(r.dim, r.bits): r.encode_us + r.decode_us for r in rows if r.scheme == Kind.ROTOR3D.value}
    for r in rows:
        t = base.get((r.dim, r.bits))
        if t is not None:
            r.speedup_vs_rotor3d = t / (r.encode_us + r.decode_us)
    if write and cfg.output_path:
        write_csv(rows, cfg.output_path, parallel=cfg.parallel)
    return rows


def format_csv(rows: list[BenchRow], parallel: bool = False) -> str:
    buf = io.StringIO()
    if parallel:
        buf.write("# parallel=1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def write_csv(rows: list[BenchRow], path, parallel: bool = False) -> None:
    text = format_csv(rows, parallel)
    if str(path) == "-":
        sys.stdout.write(text)
    else:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write benchmark CSV to {path}: {exc}") from exc


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _kind_list(text: str) -> tuple[Kind, ...]:
    try:
        return tuple(Kind.parse(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _data_model(text: str) -> DataModel:
    try:
        return DataModel.parse(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isoquant-bench", description=__doc__.splitlines()[0])
    p.add_argument("--dims", type=_int_list, default=(128, 256, 512), help="comma-separated, default 128,256,512")
    p.add_argument("--bits", type=_int_list, default=(2, 3, 4), help="comma-separated, default 2,3,4")
    p.add_argument("--schemes", type=_kind_list, default=DEFAULT_SCHEMES,
                   help="comma-separated subset of Full,Fast,Planar2D,Rotor3D,Dense")
    p.add_argument("--batch", type=int, default=8192)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data", type=_data_model, default=DataModel(), help="gauss or ar1:<rho>")
    p.add_argument("--out", default="bench.csv", help="CSV path, '-' for stdout")
    p.add_argument("--repeats", type=int, default=51)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--codebook-coords", type=int, default=1_000_000,
                   help="pooled coordinates used to train each codebook")
    p.add_argument("--parallel", action="store_true", help="run cells concurrently (timings unreliable)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = BenchConfig(dims=args.dims, bits=args.bits, schemes=args.schemes, batch=args.batch,
                          seed=args.seed, data_model=args.data, output_path=args.out,
                          repeats=args.repeats, warmup=args.warmup, parallel=args.parallel,
                          codebook_coords=args.codebook_coords)
    except ConfigError as exc:
        print(f"isoquant-bench: config error: {exc}", file=sys.stderr)
        return 2
    echo = dataclasses.asdict(cfg)
    echo["schemes"] = [k.value for k in cfg.schemes]
    echo["data_model"] = str(cfg.data_model)
    for key, value in echo.items():
        print(f"# {key} = {value}", file=sys.stderr)
    try:
        rows = run_sweep(cfg)
    except OSError as exc:
        print(f"isoquant-bench: {exc}", file=sys.stderr)
        return 1
    if cfg.output_path != "-":
        print(f"# wrote {len(rows)} rows to {cfg.output_path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
