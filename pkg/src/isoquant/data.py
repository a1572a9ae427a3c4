"""Synthetic input generators used for codebook training and benchmarks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class DataModel:
    """``gauss`` (isotropic Gaussian) or ``ar1`` (stationary AR(1) with
    correlation ``rho`` inside consecutive blocks of ``block`` coordinates,
    independent across blocks)."""

    kind: str = "gauss"
    rho: float = 0.0
    block: int = 4

    def __post_init__(self):
        if self.kind not in ("gauss", "ar1"):
            raise ConfigError(f"unknown data model {self.kind!r}")
        if self.kind == "ar1" and not -1.0 < self.rho < 1.0:
            raise ConfigError(f"AR(1) correlation must lie in (-1, 1), got {self.rho}")
        if self.block < 1:
            raise ConfigError("AR(1) block length must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "DataModel":
        """Parse ``gauss`` or ``ar1:<rho>``."""
        text = text.strip().lower()
        if text in ("gauss", "gaussian", "isotropic-gaussian"):
            return cls("gauss")
        if text.startswith(("ar1:", "blockwise-ar1:")):
            try:
                return cls("ar1", float(text.split(":", 1)[1]))
            except ValueError as exc:
                raise ConfigError(f"bad AR(1) data model {text!r}") from exc
        raise ConfigError(f"unknown data model {text!r}; use gauss or ar1:<rho>")

    def __str__(self) -> str:
        return "gauss" if self.kind == "gauss" else f"ar1:{self.rho:g}"


def generate_raw(model: DataModel | str, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Unnormalized ``n x d`` sample with unit marginal variance."""
    if isinstance(model, str):
        model = DataModel.parse(model)
    if n < 1 or d < 1:
        raise ConfigError("n and d must be >= 1")
    z = rng.standard_normal((n, d))
    if model.kind == "gauss":
        return z
    innov = math.sqrt(1.0 - model.rho * model.rho)
    x = np.empty_like(z)
    for j in range(d):
        if j % model.block == 0:
            x[:, j] = z[:, j]
        else:
            x[:, j] = model.rho * x[:, j - 1] + innov * z[:, j]
    return x


def generate_data(model: DataModel | str, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm rows drawn from ``model``; reproducible for a given generator state."""
    x = generate_raw(model, n, d, rng)
    return x / np.linalg.norm(x, axis=1, keepdims=True)
