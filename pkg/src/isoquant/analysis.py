"""Monte-Carlo checks of what random block rotations do to coordinates.

Covers the per-coordinate moments of a Haar-rotated block, the marginal law
of one coordinate of a uniform point on S^(k-1), and the expected
isotropization of a covariance matrix under independent block rotations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from . import quat
from .errors import BadCovariance, OutOfSupport, ShapeMismatch
from .rotor import haar_orthogonal

SIGNIFICANCE = 0.001


def _norm_const(k: int) -> float:
    if k == 2:
        return 1.0 / math.pi
    if k == 4:
        return 2.0 / math.pi
    return math.exp(math.lgamma(k / 2) - math.lgamma((k - 1) / 2)) / math.sqrt(math.pi)


def density(k: int, z):
    """Marginal density of one coordinate of a uniform point on S^(k-1).

    ``f_k(z) = c_k (1 - z^2)^((k-3)/2)`` on ``|z| <= 1``; ``k = 2`` is the
    arcsine law and returns ``inf`` at the endpoints.
    """
    if k < 2:
        raise ValueError(f"block dimension must be >= 2, got {k}")
    z = np.asarray(z, dtype=np.float64)
    if np.any(np.abs(z) > 1):
        raise OutOfSupport("density is supported on |z| <= 1")
    one_minus = 1.0 - z * z
    with np.errstate(divide="ignore"):
        if k == 2:
            out = 1.0 / (math.pi * np.sqrt(one_minus))
        elif k == 4:
            out = (2.0 / math.pi) * np.sqrt(one_minus)
        else:
            out = _norm_const(k) * one_minus ** ((k - 3) / 2)
    return float(out) if out.ndim == 0 else out


def cdf(k: int, z):
    """CDF of :func:`density`; ``(1 + z) / 2`` is Beta((k-1)/2, (k-1)/2)."""
    z = np.clip(np.asarray(z, dtype=np.float64), -1.0, 1.0)
    a = (k - 1) / 2
    return special.betainc(a, a, (1.0 + z) / 2)


# ---------------------------------------------------------------------------
# Haar rotations of small blocks
# ---------------------------------------------------------------------------

def _sandwich_matrices(qL, qR):
    """Batched 4x4 matrices of v -> qL v conj(qR), assembled column by column."""
    eye = np.eye(4)
    cols = [quat.mul(quat.mul(qL, eye[j]), quat.conjugate(qR)) for j in range(4)]
    return np.stack(cols, axis=-1)


def haar_rotation(k: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Haar-distributed element(s) of SO(k), shape ``size + (k, k)``.

    k=2 uses a uniform angle, k=3 conjugation by a uniform unit quaternion,
    k=4 an independent uniform pair ``(qL, qR)``; larger k falls back to
    Gram-Schmidt on a Gaussian matrix with a determinant fix.
    """
    shape = () if size is None else tuple(np.atleast_1d(size))
    if k == 1:
        return np.ones(shape + (1, 1))
    if k == 2:
        t = rng.uniform(0.0, 2 * math.pi, shape)
        c, s = np.cos(t), np.sin(t)
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    if k == 3:
        q = quat.sample_unit(rng, shape or None)
        return _sandwich_matrices(q, q)[..., 1:, 1:]
    if k == 4:
        qL = quat.sample_unit(rng, shape or None)
        qR = quat.sample_unit(rng, shape or None)
        return _sandwich_matrices(qL, qR)
    n = int(np.prod(shape)) if shape else 1
    out = np.empty((n, k, k))
    for i in range(n):
        m = haar_orthogonal(k, rng)
        if np.linalg.det(m) < 0:
            m[:, 0] = -m[:, 0]
        out[i] = m
    return out.reshape(shape + (k, k))


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentReport:
    k: int
    radius: float
    mean: np.ndarray
    second_moment: np.ndarray
    expected_second_moment: float
    mean_stderr: np.ndarray
    second_stderr: np.ndarray
    max_energy_error: float

    @property
    def passed(self) -> bool:
        """Every coordinate's mean and second moment within 3 standard errors."""
        ok_mean = np.all(np.abs(self.mean) <= 3 * self.mean_stderr)
        ok_second = np.all(np.abs(self.second_moment - self.expected_second_moment) <= 3 * self.second_stderr)
        return bool(ok_mean and ok_second)


def rotate_block(x, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """``n_samples`` independent Haar rotations of the fixed block ``x``."""
    x = np.asarray(x, dtype=np.float64)
    r = haar_rotation(x.size, rng, n_samples)
    return r @ x


def moment_check(k: int, n_samples: int, rng: np.random.Generator, x=None) -> MomentReport:
    if n_samples < 10_000:
        raise ValueError("moment_check needs at least 10^4 samples")
    x = np.eye(k)[0] if x is None else np.asarray(x, dtype=np.float64)
    if x.shape != (k,):
        raise ShapeMismatch(f"block must have length {k}, got {x.shape}")
    r2 = float(x @ x)
    y = rotate_block(x, n_samples, rng)
    sq = y * y
    root_n = math.sqrt(n_samples)
    return MomentReport(
        k=k,
        radius=math.sqrt(r2),
        mean=y.mean(axis=0),
        second_moment=sq.mean(axis=0),
        expected_second_moment=r2 / k,
        mean_stderr=y.std(axis=0, ddof=1) / root_n,
        second_stderr=sq.std(axis=0, ddof=1) / root_n,
        max_energy_error=float(np.max(np.abs(sq.sum(axis=1) - r2))),
    )


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------

def expected_isotropic(sigma, k: int) -> np.ndarray:
    """Closed-form limit: ``diag(tr(S_11)/k I, ..., tr(S_mm)/k I)``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    d = sigma.shape[0]
    out = np.zeros_like(sigma)
    for b in range(0, d, k):
        out[b:b + k, b:b + k] = np.trace(sigma[b:b + k, b:b + k]) / k * np.eye(k)
    return out


def covariance_isotropization(sigma, k: int, n_rotations: int, rng: np.random.Generator,
                              chunk: int = 2048) -> np.ndarray:
    """Average of ``R sigma R^T`` over independent block-diagonal Haar rotations."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ShapeMismatch(f"covariance must be square, got {sigma.shape}")
    d = sigma.shape[0]
    if d % k:
        raise ShapeMismatch(f"dimension {d} is not divisible by block size {k}")
    if np.max(np.abs(sigma - sigma.T)) > 1e-10:
        raise BadCovariance("covariance is not symmetric within 1e-10")
    m = d // k
    blocks = sigma.reshape(m, k, m, k).transpose(0, 2, 1, 3)  # blocks[a, b] = S_ab
    total = np.zeros((m, m, k, k))
    done = 0
    while done < n_rotations:
        n = min(chunk, n_rotations - done)
        r = haar_rotation(k, rng, (n, m))
        # R_a S_ab R_b^T for every block pair
        total += np.einsum("naij,abjl,nbml->abim", r, blocks, r, optimize=True)
        done += n
    return (total / n_rotations).transpose(0, 2, 1, 3).reshape(d, d)


# ---------------------------------------------------------------------------
# marginal law
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float
    alpha: float = SIGNIFICANCE

    @property
    def passed(self) -> bool:
        return self.p_value > self.alpha


def coordinate_samples(k: int, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """First coordinate of ``R e_1`` for Haar ``R`` in SO(k)."""
    return haar_rotation(k, rng, n_samples)[:, 0, 0]


def chi_square_fit(samples, k: int, n_bins: int = 50, alpha: float = SIGNIFICANCE) -> ChiSquareResult:
    """Pearson chi-square of ``samples`` against ``density(k, .)`` on equal-width bins."""
    samples = np.asarray(samples, dtype=np.float64)
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    observed, _ = np.histogram(samples, bins=edges)
    expected = np.diff(cdf(k, edges)) * samples.size
    stat = float(np.sum((observed - expected) ** 2 / expected))
    dof = n_bins - 1
    return ChiSquareResult(stat, dof, float(stats.chi2.sf(stat, dof)), alpha)


def marginal_histogram_test(k: int, n_samples: int, n_bins: int, rng: np.random.Generator,
                            reference_k: int | None = None) -> ChiSquareResult:
    """Draw one rotated coordinate for block size ``k`` and test it against
    ``density(reference_k, .)`` (``k`` itself by default)."""
    if n_samples < 100_000:
        raise ValueError("marginal_histogram_test needs at least 10^5 samples")
    z = coordinate_samples(k, n_samples, rng)
    return chi_square_fit(z, k if reference_k is None else reference_k, n_bins)


def tail_mass(samples, threshold: float) -> float:
    return float(np.mean(np.abs(np.asarray(samples)) > threshold))
