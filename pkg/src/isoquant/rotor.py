"""Blockwise orthogonal transforms over R^d.

Five kinds are supported:

``Full``
    independent 4D blocks, ``v -> qL v conj(qR)`` (all of SO(4)).
``Fast``
    4D blocks, left isoclinic factor only, ``v -> qL v``.
``Planar2D``
    2D blocks rotated by a fixed angle.
``Rotor3D``
    3D blocks rotated by ``p -> q p conj(q)`` plus a planar tail block, the
    cost stand-in for 3D Clifford-rotor baselines.
``Dense``
    one Haar-random d x d orthogonal matrix.

Schemes act on vectors of length ``padded_len``; zero padding is the caller's
job (see :mod:`isoquant.pipeline`).
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import quat
from .errors import FormatError, ShapeMismatch, UnsupportedDim

SCHEME_FORMAT = "isoquant.scheme"
SCHEME_VERSION = 1

# 2408 / 43 at d=128: per-block FMA charge for the 3D rotor baseline
ROTOR3D_FMAS_PER_BLOCK = 56
ROTOR3D_PARAMS_PER_BLOCK = 4


class Kind(str, enum.Enum):
    FULL = "Full"
    FAST = "Fast"
    PLANAR2D = "Planar2D"
    ROTOR3D = "Rotor3D"
    DENSE = "Dense"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, Kind):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"2d": cls.PLANAR2D, "planar": cls.PLANAR2D, "3d": cls.ROTOR3D, "rotor": cls.ROTOR3D}
        for k in cls:
            if k.value.lower() == key:
                return k
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown scheme kind {value!r}")

    def __str__(self) -> str:
        return self.value


ALL_KINDS = tuple(Kind)


# ---------------------------------------------------------------------------
# block kernels
#
# Kernels take and return tuples of per-coordinate arrays ("parts"), so the
# whole-vector and per-block paths run the same elementwise arithmetic and
# agree bit for bit.
# ---------------------------------------------------------------------------

def full_forward(v, qL, qR):
    return quat.mul_parts(quat.mul_parts(qL, v), quat.conj_parts(qR))


def full_inverse(v, qL, qR):
    return quat.mul_parts(quat.mul_parts(quat.conj_parts(qL), v), qR)


def fast_forward(v, qL):
    return quat.mul_parts(qL, v)


def fast_inverse(v, qL):
    return quat.mul_parts(quat.conj_parts(qL), v)


def planar_forward(u, c, s):
    u0, u1 = u
    return (c * u0 - s * u1, s * u0 + c * u1)


def planar_inverse(u, c, s):
    u0, u1 = u
    return (c * u0 + s * u1, c * u1 - s * u0)


def rotor3_forward(p, q):
    return quat.mul_parts(quat.mul_parts(q, (0.0, *p)), quat.conj_parts(q))[1:]


def rotor3_inverse(p, q):
    return quat.mul_parts(quat.mul_parts(quat.conj_parts(q), (0.0, *p)), q)[1:]


def to_parts(x, k: int) -> tuple:
    """Split ``(..., n*k)`` into ``k`` contiguous ``(..., n)`` component arrays."""
    xr = x.reshape(x.shape[:-1] + (-1, k))
    return tuple(np.ascontiguousarray(xr[..., j]) for j in range(k))


def from_parts(parts) -> np.ndarray:
    out = np.stack(parts, axis=-1)
    return out.reshape(out.shape[:-2] + (-1,))


# ---------------------------------------------------------------------------
# scheme
# ---------------------------------------------------------------------------

def block_counts(kind, d: int) -> dict:
    kind = Kind.parse(kind)
    if d < 1:
        raise UnsupportedDim(f"dimension must be >= 1, got {d}")
    if kind in (Kind.FULL, Kind.FAST):
        g = -(-d // 4)
        return {"blocks": g, "padded_len": 4 * g}
    if kind is Kind.PLANAR2D:
        g = -(-d // 2)
        return {"blocks": g, "padded_len": 2 * g}
    if kind is Kind.ROTOR3D:
        n3, rem = divmod(d, 3)
        # a lone leftover coordinate is paired with one padded zero
        return {"blocks": n3, "tail": rem != 0, "padded_len": d + (1 if rem == 1 else 0)}
    return {"blocks": 1, "padded_len": d}


@dataclass(frozen=True, eq=False)
class RotationScheme:
    """Immutable description of one blockwise rotation.

    Only the fields relevant to ``kind`` are set: ``qL``/``qR`` are ``(g, 4)``
    unit quaternions, ``angles`` are planar angles (the Planar2D blocks, or the
    single Rotor3D tail), ``quats`` are the Rotor3D block rotors and ``matrix``
    is the Dense orthogonal matrix. ``seed`` is recorded when the parameters
    were drawn from an integer seed.
    """

    kind: Kind
    dim: int
    qL: np.ndarray | None = None
    qR: np.ndarray | None = None
    angles: np.ndarray | None = None
    quats: np.ndarray | None = None
    matrix: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        kind = Kind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        counts = block_counts(kind, self.dim)
        g = counts["blocks"]

        def unit(arr, n, name):
            if arr is None:
                raise ValueError(f"{kind} scheme needs {name}")
            arr = np.array(arr, dtype=np.float64).reshape(n, 4)
            arr = quat.check_unit(arr, name) if n else arr
            arr.setflags(write=False)
            return arr

        if kind in (Kind.FULL, Kind.FAST):
            object.__setattr__(self, "qL", unit(self.qL, g, "qL"))
            if kind is Kind.FULL:
                object.__setattr__(self, "qR", unit(self.qR, g, "qR"))
        elif kind is Kind.PLANAR2D or kind is Kind.ROTOR3D:
            n_ang = g if kind is Kind.PLANAR2D else int(counts["tail"])
            ang = np.array([] if self.angles is None else self.angles, dtype=np.float64).reshape(-1)
            if ang.shape != (n_ang,):
                raise ShapeMismatch(f"{kind} at d={self.dim} needs {n_ang} angles, got {ang.shape[0]}")
            ang.setflags(write=False)
            object.__setattr__(self, "angles", ang)
            if kind is Kind.ROTOR3D:
                object.__setattr__(self, "quats", unit(self.quats if g else np.zeros((0, 4)), g, "quats"))
        else:
            m = np.array(self.matrix, dtype=np.float64)
            if m.shape != (self.dim, self.dim):
                raise ShapeMismatch(f"dense matrix must be {self.dim}x{self.dim}, got {m.shape}")
            if np.max(np.abs(m.T @ m - np.eye(self.dim))) > 1e-8:
                raise ValueError("dense matrix is not orthogonal within 1e-8")
            m.setflags(write=False)
            object.__setattr__(self, "matrix", m)
        if self.angles is not None:
            cos, sin = np.cos(self.angles), np.sin(self.angles)
            cos.setflags(write=False)
            sin.setflags(write=False)
            object.__setattr__(self, "_cos", cos)
            object.__setattr__(self, "_sin", sin)

    @property
    def padded_len(self) -> int:
        return block_counts(self.kind, self.dim)["padded_len"]

    @property
    def n_blocks(self) -> int:
        """Number of independently rotated blocks (Rotor3D counts its tail)."""
        c = block_counts(self.kind, self.dim)
        return c["blocks"] + int(c.get("tail", False))

    def block_slices(self) -> list[slice]:
        """Coordinate ranges of the blocks, in order, over ``padded_len``."""
        if self.kind in (Kind.FULL, Kind.FAST):
            return [slice(4 * i, 4 * i + 4) for i in range(self.n_blocks)]
        if self.kind is Kind.PLANAR2D:
            return [slice(2 * i, 2 * i + 2) for i in range(self.n_blocks)]
        if self.kind is Kind.ROTOR3D:
            n3 = len(self.quats)
            out = [slice(3 * i, 3 * i + 3) for i in range(n3)]
            if len(self.angles):
                out.append(slice(3 * n3, 3 * n3 + 2))
            return out
        return [slice(0, self.dim)]

    def forward_block(self, i: int, v: np.ndarray) -> np.ndarray:
        """Rotate block ``i`` given as a ``(..., block_len)`` array."""
        if self.kind is Kind.DENSE:
            return v @ self.matrix.T
        parts = tuple(v[..., j] for j in range(v.shape[-1]))
        return np.stack(self.forward_block_parts(i, parts), axis=-1)

    def inverse_block(self, i: int, v: np.ndarray) -> np.ndarray:
        if self.kind is Kind.DENSE:
            return v @ self.matrix
        parts = tuple(v[..., j] for j in range(v.shape[-1]))
        return np.stack(self.inverse_block_parts(i, parts), axis=-1)

    def forward_block_parts(self, i: int, parts: tuple) -> tuple:
        """Rotate block ``i`` given as one array per coordinate (not for Dense)."""
        return self._block(i, parts, inverse=False)

    def inverse_block_parts(self, i: int, parts: tuple) -> tuple:
        return self._block(i, parts, inverse=True)

    def _params(self, name):
        cache = self.__dict__.setdefault("_parts_cache", {})
        if name not in cache:
            arr = getattr(self, name)
            cache[name] = tuple(np.ascontiguousarray(arr[:, j]) for j in range(arr.shape[1]))
        return cache[name]

    def _block(self, i, v, inverse):
        k = self.kind
        if k is Kind.FULL:
            qL = tuple(p[i] for p in self._params("qL"))
            qR = tuple(p[i] for p in self._params("qR"))
            return (full_inverse if inverse else full_forward)(v, qL, qR)
        if k is Kind.FAST:
            qL = tuple(p[i] for p in self._params("qL"))
            return (fast_inverse if inverse else fast_forward)(v, qL)
        if k is Kind.PLANAR2D:
            return (planar_inverse if inverse else planar_forward)(v, self._cos[i], self._sin[i])
        if k is Kind.ROTOR3D:
            n3 = len(self.quats)
            if i < n3:
                q = tuple(p[i] for p in self._params("quats"))
                return (rotor3_inverse if inverse else rotor3_forward)(v, q)
            return (planar_inverse if inverse else planar_forward)(v, self._cos[0], self._sin[0])
        raise TypeError("Dense schemes have a single matrix block; use forward_block")

    def to_dense(self) -> np.ndarray:
        """Assemble the ``padded_len`` square matrix of :func:`forward` block by
        block, via :func:`quat.to_matrix` for the quaternion kinds."""
        n = self.padded_len
        out = np.zeros((n, n))
        for i, sl in enumerate(self.block_slices()):
            k = self.kind
            if k is Kind.FULL:
                blk = quat.to_matrix(self.qL[i], self.qR[i])
            elif k is Kind.FAST:
                blk = quat.to_matrix(self.qL[i], quat.ONE)
            elif k is Kind.DENSE:
                blk = self.matrix
            elif k is Kind.ROTOR3D and i < len(self.quats):
                blk = quat.rotation3(self.quats[i])
            else:
                j = i if k is Kind.PLANAR2D else 0
                c, s = math.cos(self.angles[j]), math.sin(self.angles[j])
                blk = np.array([[c, -s], [s, c]])
            out[sl, sl] = blk
        return out

    def fingerprint(self) -> str:
        h = hashlib.sha256(f"{self.kind.value}:{self.dim}".encode())
        for arr in (self.qL, self.qR, self.angles, self.quats, self.matrix):
            if arr is not None:
                h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def _generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng, None
    seed = int(rng)
    return np.random.default_rng(seed), seed


def haar_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random n x n orthogonal matrix.

    Classical Gram-Schmidt with one re-orthogonalization pass over a Gaussian
    matrix. The triangular factor has a positive diagonal by construction, which
    is what makes the result Haar distributed.
    """
    a = rng.standard_normal((n, n))
    q = np.zeros((n, n))
    for j in range(n):
        v = a[:, j].copy()
        for _ in range(2):
            v -= q[:, :j] @ (q[:, :j].T @ v)
        q[:, j] = v / np.linalg.norm(v)
    return q


def new_scheme(kind, d: int, rng) -> RotationScheme:
    """Draw a scheme with Haar-random per-block parameters.

    ``rng`` is a :class:`numpy.random.Generator` or an integer seed; with an
    integer the result is a pure function of ``(kind, d, seed)``.
    """
    kind = Kind.parse(kind)
    counts = block_counts(kind, d)
    gen, seed = _generator(rng)
    g = counts["blocks"]
    if kind is Kind.FULL:
        return RotationScheme(kind, d, qL=quat.sample_unit(gen, g), qR=quat.sample_unit(gen, g), seed=seed)
    if kind is Kind.FAST:
        return RotationScheme(kind, d, qL=quat.sample_unit(gen, g), seed=seed)
    if kind is Kind.PLANAR2D:
        return RotationScheme(kind, d, angles=gen.uniform(0.0, 2 * math.pi, g), seed=seed)
    if kind is Kind.ROTOR3D:
        quats = quat.sample_unit(gen, g) if g else np.zeros((0, 4))
        angles = gen.uniform(0.0, 2 * math.pi, int(counts["tail"]))
        return RotationScheme(kind, d, quats=quats, angles=angles, seed=seed)
    return RotationScheme(kind, d, matrix=haar_orthogonal(d, gen), seed=seed)


def identity_scheme(kind, d: int) -> RotationScheme:
    """Scheme of the given kind whose every block is the identity."""
    kind = Kind.parse(kind)
    c = block_counts(kind, d)
    g = c["blocks"]
    ones = np.tile(quat.ONE, (g, 1))
    if kind is Kind.FULL:
        return RotationScheme(kind, d, qL=ones, qR=ones)
    if kind is Kind.FAST:
        return RotationScheme(kind, d, qL=ones)
    if kind is Kind.PLANAR2D:
        return RotationScheme(kind, d, angles=np.zeros(g))
    if kind is Kind.ROTOR3D:
        return RotationScheme(kind, d, quats=ones, angles=np.zeros(int(c["tail"])))
    return RotationScheme(kind, d, matrix=np.eye(d))


def _check_len(s: RotationScheme, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (s.padded_len,):
        raise ShapeMismatch(f"{s.kind} scheme at d={s.dim} expects length {s.padded_len}, got {x.shape[-1:]}")
    return x


def forward(s: RotationScheme, x) -> np.ndarray:
    """Rotate ``x`` of shape ``(..., padded_len)``."""
    return _apply(s, _check_len(s, x), inverse=False)


def inverse(s: RotationScheme, y) -> np.ndarray:
    """Undo :func:`forward`."""
    return _apply(s, _check_len(s, y), inverse=True)


def _apply(s, x, inverse):
    k = s.kind
    if k is Kind.FULL:
        return from_parts((full_inverse if inverse else full_forward)(to_parts(x, 4), s._params("qL"), s._params("qR")))
    if k is Kind.FAST:
        return from_parts((fast_inverse if inverse else fast_forward)(to_parts(x, 4), s._params("qL")))
    if k is Kind.PLANAR2D:
        return from_parts((planar_inverse if inverse else planar_forward)(to_parts(x, 2), s._cos, s._sin))
    if k is Kind.ROTOR3D:
        n3 = len(s.quats)
        out = []
        if n3:
            head = to_parts(x[..., : 3 * n3], 3)
            out.append(from_parts((rotor3_inverse if inverse else rotor3_forward)(head, s._params("quats"))))
        if len(s.angles):
            tail = (x[..., 3 * n3].copy(), x[..., 3 * n3 + 1].copy())
            out.append(np.stack((planar_inverse if inverse else planar_forward)(tail, s._cos[0], s._sin[0]), -1))
        return np.concatenate(out, axis=-1)
    return x @ (s.matrix if inverse else s.matrix.T)


# ---------------------------------------------------------------------------
# complexity model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComplexityReport:
    params: int
    fmas: int


def complexity_of(kind, d: int) -> ComplexityReport:
    """Parameter count and forward-rotation FMA count for ``(kind, d)``."""
    kind = Kind.parse(kind)
    if d < 1:
        raise UnsupportedDim(f"dimension must be >= 1, got {d}")
    g4 = -(-d // 4)
    g2 = -(-d // 2)
    if kind is Kind.FULL:
        return ComplexityReport(8 * g4, 32 * g4)
    if kind is Kind.FAST:
        return ComplexityReport(4 * g4, 16 * g4)
    if kind is Kind.PLANAR2D:
        return ComplexityReport(2 * g2, 4 * g2)
    if kind is Kind.ROTOR3D:
        n = -(-d // 3)
        return ComplexityReport(ROTOR3D_PARAMS_PER_BLOCK * n, ROTOR3D_FMAS_PER_BLOCK * n)
    return ComplexityReport(d * d, d * d)


def complexity(s: RotationScheme) -> ComplexityReport:
    return complexity_of(s.kind, s.dim)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def scheme_to_dict(s: RotationScheme, explicit: bool = False) -> dict:
    """Versioned JSON-able form. Seeded schemes are stored by seed unless
    ``explicit`` is set; unseeded ones always carry their parameters."""
    out = {"format": SCHEME_FORMAT, "version": SCHEME_VERSION, "kind": s.kind.value, "dim": s.dim}
    if s.seed is not None:
        out["seed"] = s.seed
    if explicit or s.seed is None:
        params = {}
        for name in ("qL", "qR", "angles", "quats", "matrix"):
            arr = getattr(s, name)
            if arr is not None:
                params[name] = arr.tolist()
        out["params"] = params
    return out


def scheme_from_dict(obj: dict) -> RotationScheme:
    if obj.get("format") != SCHEME_FORMAT:
        raise FormatError(f"not a scheme document: format={obj.get('format')!r}")
    if obj.get("version") != SCHEME_VERSION:
        raise FormatError(f"unsupported scheme version {obj.get('version')!r}")
    kind, dim = Kind.parse(obj["kind"]), int(obj["dim"])
    if "params" in obj:
        return RotationScheme(kind, dim, seed=obj.get("seed"), **obj["params"])
    if "seed" not in obj:
        raise FormatError("scheme document has neither params nor seed")
    return new_scheme(kind, dim, int(obj["seed"]))


def dumps_scheme(s: RotationScheme, explicit: bool = False) -> str:
    return json.dumps(scheme_to_dict(s, explicit=explicit))


def loads_scheme(text: str) -> RotationScheme:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(str(exc)) from exc
    return scheme_from_dict(obj)


def save_scheme(s: RotationScheme, path, explicit: bool = False) -> None:
    Path(path).write_text(dumps_scheme(s, explicit=explicit) + "\n", encoding="utf-8")


def load_scheme(path) -> RotationScheme:
    return loads_scheme(Path(path).read_text(encoding="utf-8"))
