"""Measurement-noise laws with polynomially decaying characteristic functions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError

KINDS = ("laplace", "identity")


@dataclass(frozen=True)
class NoiseComponent:
    kind: str
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown noise kind {self.kind!r}")
        if self.kind == "laplace" and not self.sigma > 0:
            raise ParameterError("laplace noise needs sigma > 0")

    @property
    def beta(self) -> float:
        return 2.0 if self.kind == "laplace" else 0.0

    def cf(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "identity":
            return np.ones_like(t, dtype=complex)
        return (1.0 / (1.0 + (self.sigma * t) ** 2)).astype(complex)


@dataclass(frozen=True)
class NoiseModel:
    """Product noise law, one independent component per axis."""

    components: tuple[NoiseComponent, ...]

    @classmethod
    def laplace(cls, sigma: float | Sequence[float], dim: int = 1) -> "NoiseModel":
        sigmas = np.broadcast_to(np.asarray(sigma, dtype=float), (dim,))
        return cls(tuple(NoiseComponent("laplace", float(s)) for s in sigmas))

    @classmethod
    def identity(cls, dim: int = 1) -> "NoiseModel":
        return cls(tuple(NoiseComponent("identity") for _ in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def beta(self) -> tuple[float, ...]:
        return tuple(c.beta for c in self.components)

    @property
    def beta_bar(self) -> float:
        return float(sum(self.beta))

    @property
    def symmetric(self) -> bool:
        # both implemented laws are symmetric about 0
        return True

    def cf(self, axis: int, t):
        return self.components[axis].cf(t)


def noise_cf(model: NoiseModel, axis: int, t):
    if not 0 <= axis < model.dim:
        raise ParameterError(f"axis {axis} out of range for d={model.dim}")
    return model.cf(axis, t)


def sample_noise(model: NoiseModel, count: int, seed) -> np.ndarray:
    """Draw `count` i.i.d. noise vectors, shape (count, d).

    Laplace draws use the inverse CDF of a centred Laplace law applied to
    uniforms on (-1/2, 1/2).
    """
    if count < 0:
        raise ParameterError("count must be >= 0")
    rng = np.random.default_rng(seed)
    out = np.zeros((count, model.dim))
    for j, comp in enumerate(model.components):
        u = rng.random(count) - 0.5
        if comp.kind == "laplace":
            out[:, j] = -comp.sigma * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    return out


def beta_decay_check(model: NoiseModel, axis: int) -> float:
    """Fitted log-log slope of |cf| over t in [1e2, 1e4]."""
    comp = model.components[axis]
    if comp.beta <= 0:
        raise ParameterError(f"decay check not applicable to {comp.kind!r} noise")
    t = np.logspace(2, 4, 32)
    slope, _ = np.polyfit(np.log(t), np.log(np.abs(comp.cf(t))), 1)
    return float(slope)
