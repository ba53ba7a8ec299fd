"""Continuum coefficients and constitutive relations.

Units follow the parameter tables: pressure kPa, viscosity Pa s,
compressibility 1/kPa, permeability um^2, lengths m.  Nothing is converted.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

CONTINUA = ("m", "f", "v")


class SingularStateError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FluidProperties:
    c: float = 1.4504e-8
    mu: float = 8e-3
    B0: float = 1.1
    u0: float = 2.0684e7

    def __post_init__(self):
        if not self.c >= 0:
            raise ValueError(f"compressibility must be non-negative, got {self.c}")
        if not self.mu > 0:
            raise ValueError(f"viscosity must be positive, got {self.mu}")
        if not self.B0 > 0:
            raise ValueError(f"reference FVF must be positive, got {self.B0}")


def fvf(u, fluid: FluidProperties):
    """Formation volume factor B(u) = B0 / (1 + c (u - u0))."""
    denom = 1.0 + fluid.c * (np.asarray(u, dtype=float) - fluid.u0)
    if np.any(denom <= 0):
        raise SingularStateError("1 + c(u - u0) <= 0: formation volume factor is singular")
    out = fluid.B0 / denom
    return float(out) if np.ndim(out) == 0 else out


def alpha(u, fluid: FluidProperties):
    """Pressure-dependent mobility multiplier (1 + c (u - u0)) / mu."""
    out = (1.0 + fluid.c * (np.asarray(u, dtype=float) - fluid.u0)) / fluid.mu
    return float(out) if np.ndim(out) == 0 else out


def harmonic_mean(ka, kb):
    ka = np.asarray(ka, dtype=float)
    kb = np.asarray(kb, dtype=float)
    if np.any(ka <= 0) or np.any(kb <= 0):
        raise ValueError("harmonic mean needs positive permeabilities")
    out = 2.0 * ka * kb / (ka + kb)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class ContinuumParams:
    name: str
    porosity: float
    permeability: np.ndarray  # per fine triangle

    def __post_init__(self):
        if self.name not in CONTINUA:
            raise ValueError(f"unknown continuum {self.name!r}")
        if not 0 < self.porosity <= 1:
            raise ValueError(f"porosity of continuum {self.name!r} must lie in (0, 1], got {self.porosity}")
        k = np.asarray(self.permeability, dtype=float)
        if np.any(~np.isfinite(k)) or np.any(k <= 0):
            raise ValueError(f"permeability of continuum {self.name!r} must be positive")
        object.__setattr__(self, "permeability", k)

    def storage(self, fluid: FluidProperties) -> float:
        return self.porosity * fluid.c / fluid.B0


@dataclass(frozen=True, eq=False)
class ExchangeTable:
    """Per-triangle transfer coefficients q[i, j]; q[i, i] is zero."""
    q: np.ndarray  # (3, 3, n_triangles)
    sigma: float

    def pair(self, i: int, j: int) -> np.ndarray:
        return self.q[i, j]


def shape_factor(h_min: float) -> float:
    return 1.0 / h_min ** 2


def exchange_coefficients(params, sigma: float, mu: float) -> ExchangeTable:
    params = list(params)
    n = len(params[0].permeability)
    q = np.zeros((len(params), len(params), n))
    for i in range(len(params)):
        for j in range(i + 1, len(params)):
            qij = sigma * harmonic_mean(params[i].permeability, params[j].permeability) / mu
            q[i, j] = qij
            q[j, i] = qij
    return ExchangeTable(q, float(sigma))


def synth_permeability(seed: int, shape: tuple[int, int], contrast: float, base: float = 1.0,
                       n_channels: int = 4, correlation: float = 0.1) -> np.ndarray:
    """Log-scaled random field with high-permeability channels on an ``(ny, nx)`` cell grid.

    The result spans exactly ``[base, base * contrast]``.
    """
    if contrast < 1:
        raise ValueError(f"contrast must be >= 1, got {contrast}")
    ny, nx = shape
    if contrast == 1:
        return np.full((ny, nx), float(base))
    rng = np.random.default_rng(seed)
    x = (np.arange(nx) + 0.5) / nx
    y = (np.arange(ny) + 0.5) / ny
    X, Y = np.meshgrid(x, y)

    # smooth background: a few random Fourier modes
    g = np.zeros((ny, nx))
    for _ in range(12):
        kx, ky = rng.normal(scale=1.0 / correlation, size=2)
        g += np.cos(kx * X + ky * Y + rng.uniform(0, 2 * np.pi))
    g = (g - g.min()) / max(np.ptp(g), 1e-300)

    # sinuous channels
    width = 1.5 / min(nx, ny) + 0.02
    ch = np.zeros((ny, nx))
    for k in range(n_channels):
        amp, freq, phase = rng.uniform(0.03, 0.12), rng.uniform(1.0, 3.0), rng.uniform(0, 2 * np.pi)
        if k % 2 == 0:
            centre = rng.uniform(0.1, 0.9) + amp * np.sin(2 * np.pi * freq * X + phase)
            dist = np.abs(Y - centre)
        else:
            centre = rng.uniform(0.1, 0.9) + amp * np.sin(2 * np.pi * freq * Y + phase)
            dist = np.abs(X - centre)
        ch = np.maximum(ch, np.exp(-(dist / width) ** 2))
    field = 0.55 * g + 0.45 * ch / max(ch.max(), 1e-300) + 0.45 * (ch > 0.5)
    field = (field - field.min()) / np.ptp(field)
    return base * contrast ** field


def cell_to_triangle(field: np.ndarray, cell_of_triangle: np.ndarray) -> np.ndarray:
    """Lift a per-cell ``(ny, nx)`` field onto triangles."""
    return np.asarray(field)[cell_of_triangle[:, 1], cell_of_triangle[:, 0]]


@dataclass(frozen=True, eq=False)
class Model:
    """Everything the operators need: continua, fluid, exchange table, fractures."""
    continua: tuple[ContinuumParams, ContinuumParams, ContinuumParams]
    fluid: FluidProperties
    exchange: ExchangeTable

    @cached_property
    def storage(self) -> np.ndarray:
        return np.array([p.storage(self.fluid) for p in self.continua])

    @property
    def permeabilities(self) -> list[np.ndarray]:
        return [p.permeability for p in self.continua]


def make_model(mesh, permeability, porosity=(0.2, 0.01, 0.1), fluid: FluidProperties | None = None,
               sigma: float | None = None) -> Model:
    """Convenience constructor; scalar permeabilities are broadcast over triangles."""
    fluid = fluid or FluidProperties()
    ks = []
    for k in permeability:
        k = np.asarray(k, dtype=float)
        ks.append(np.full(mesh.n_triangles, float(k)) if k.ndim == 0 else k)
    continua = tuple(ContinuumParams(n, float(phi), k) for n, phi, k in zip(CONTINUA, porosity, ks))
    sigma = shape_factor(mesh.h_min) if sigma is None else sigma
    return Model(continua, fluid, exchange_coefficients(continua, sigma, fluid.mu))
