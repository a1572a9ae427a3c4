"""Quaternion algebra on numpy arrays.

A quaternion is stored as the last axis of a float64 array of length 4 in
``(w, x, y, z)`` order, i.e. ``w + x i + y j + z k``. Every function
broadcasts over leading axes, so a ``(N, g, 4)`` array is a batch of ``N``
vectors with ``g`` quaternion blocks each.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInput, NonUnitRotor

EPS = 1e-12
UNIT_TOL = 1e-6

ONE = np.array([1.0, 0.0, 0.0, 0.0])


def as_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1:] != (4,):
        raise ValueError(f"quaternion arrays need a trailing axis of 4, got {q.shape}")
    return q


def mul_parts(a, b):
    """Hamilton product on component sequences ``(w, x, y, z)``.

    Components may be scalars or broadcastable arrays; this is the
    layout-free core used by the blockwise kernels.
    """
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def conj_parts(q):
    w, x, y, z = q
    return (w, -x, -y, -z)


def split(q) -> tuple:
    """Components of a ``(..., 4)`` array as four arrays."""
    q = as_quat(q)
    return q[..., 0], q[..., 1], q[..., 2], q[..., 3]


def mul(a, b) -> np.ndarray:
    """Hamilton product ``a * b``."""
    return np.stack(mul_parts(split(a), split(b)), axis=-1)


def conjugate(q) -> np.ndarray:
    q = as_quat(q)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def norm(q) -> np.ndarray:
    return np.linalg.norm(as_quat(q), axis=-1)


def normalize(u) -> np.ndarray:
    """Scale ``u`` to unit norm; raises :class:`DegenerateInput` if ``|u| <= 1e-12``."""
    u = as_quat(u)
    n = norm(u)
    if np.any(n <= EPS):
        raise DegenerateInput("cannot normalize a quaternion with norm <= 1e-12")
    return u / n[..., None]


def sample_unit(rng: np.random.Generator, size=None) -> np.ndarray:
    """Haar-uniform unit quaternion(s) by normalizing four standard Gaussians.

    ``size`` is the batch shape; ``None`` returns a single quaternion of shape ``(4,)``.
    """
    shape = (4,) if size is None else tuple(np.atleast_1d(size)) + (4,)
    u = rng.standard_normal(shape)
    n = np.linalg.norm(u, axis=-1)
    # an all-zero Gaussian draw has probability zero; redraw just in case
    while np.any(n <= EPS):
        bad = n <= EPS
        u[bad] = rng.standard_normal((int(bad.sum()), 4))
        n = np.linalg.norm(u, axis=-1)
    return u / n[..., None]


def check_unit(q, name: str = "rotor") -> np.ndarray:
    """Validate unit norm within 1e-6 and return a renormalized copy."""
    q = as_quat(q)
    dev = np.abs(norm(q) - 1.0)
    if np.any(dev > UNIT_TOL):
        raise NonUnitRotor(f"{name} deviates from unit norm by {float(np.max(dev)):.3g}")
    return q / norm(q)[..., None]


def sandwich(qL, qR, v) -> np.ndarray:
    """Apply the SO(4) map ``v -> qL * v * conj(qR)``."""
    qL = check_unit(qL, "qL")
    qR = check_unit(qR, "qR")
    return mul(mul(qL, v), conjugate(qR))


def sandwich_inverse(qL, qR, v) -> np.ndarray:
    """Inverse of :func:`sandwich`: ``v -> conj(qL) * v * qR``."""
    qL = check_unit(qL, "qL")
    qR = check_unit(qR, "qR")
    return mul(mul(conjugate(qL), v), qR)


def left_matrix(q) -> np.ndarray:
    """4x4 matrix of ``v -> q * v``."""
    w, x, y, z = as_quat(q)
    return np.array(
        [
            [w, -x, -y, -z],
            [x, w, -z, y],
            [y, z, w, -x],
            [z, -y, x, w],
        ]
    )


def right_matrix(q) -> np.ndarray:
    """4x4 matrix of ``v -> v * q``."""
    w, x, y, z = as_quat(q)
    return np.array(
        [
            [w, -x, -y, -z],
            [x, w, z, -y],
            [y, -z, w, x],
            [z, y, -x, w],
        ]
    )


def to_matrix(qL, qR) -> np.ndarray:
    """Dense 4x4 orthogonal matrix of the sandwich map, built from the
    left/right multiplication matrices rather than from :func:`sandwich`."""
    qL = check_unit(qL, "qL")
    qR = check_unit(qR, "qR")
    return left_matrix(qL) @ right_matrix(conjugate(qR))


def rotation3(q) -> np.ndarray:
    """3x3 rotation matrix of ``p -> q p conj(q)`` on pure quaternions."""
    q = check_unit(q)
    return to_matrix(q, q)[1:, 1:]
