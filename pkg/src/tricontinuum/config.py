"""JSON scenario files.

Omitted fields take the reference parameter values (porosities 0.2/0.01/0.1,
fracture permeability 8.2606e-8, c = 1.4504e-8, mu = 8e-3, u0 = 2.0684e7,
B0 = 1.1, shape factor 1/h_min^2).  All quantities are in the table units
(kPa, Pa s, um^2, m, days); the default 15000 ft square is stored as 4572 m.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import assembly as asm
from .geometry import Fracture, FractureNetwork, build_coarse_grid, build_fine_mesh, partition_of_unity
from .physics import (CONTINUA, ContinuumParams, FluidProperties, Model, cell_to_triangle,
                      exchange_coefficients, shape_factor, synth_permeability)
from .timestepper import TimeControls


class ConfigError(ValueError):
    pass


FT_TO_M = 0.3048


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ConstantPerm(_Strict):
    type: Literal["constant"] = "constant"
    value: float = Field(gt=0)


class SyntheticPerm(_Strict):
    type: Literal["synthetic"] = "synthetic"
    seed: int = 0
    contrast: float = Field(default=1e4, ge=1)
    base: float = Field(default=1e-12, gt=0)
    channels: int = Field(default=4, ge=0)


class CsvPerm(_Strict):
    type: Literal["csv"] = "csv"
    path: str


PermSpec = Annotated[Union[ConstantPerm, SyntheticPerm, CsvPerm], Field(discriminator="type")]


class ContinuumSpec(_Strict):
    porosity: float = Field(gt=0, le=1)
    permeability: PermSpec


def _continuum(phi, k):
    return Field(default_factory=lambda: ContinuumSpec(porosity=phi, permeability=ConstantPerm(value=k)))


class ContinuaSpec(_Strict):
    # matrix permeability has no tabulated value; 1e-10 is a declared default
    m: ContinuumSpec = _continuum(0.2, 1e-10)
    f: ContinuumSpec = _continuum(0.01, 1e-12)
    v: ContinuumSpec = _continuum(0.1, 1e-13)


class FluidSpec(_Strict):
    c: float = Field(default=1.4504e-8, ge=0)
    mu: float = Field(default=8e-3, gt=0)
    B0: float = Field(default=1.1, gt=0)
    u0: float = 2.0684e7


class FractureSpec(_Strict):
    points: list[tuple[float, float]] = Field(min_length=2)
    aperture: float = Field(default=1.0, gt=0)
    permeability: float = Field(default=8.2606e-8, gt=0)
    porosity: float = Field(default=1.0, gt=0, le=1)


class BoundarySpec(_Strict):
    type: Literal["dirichlet", "neumann"] = "neumann"
    value: float = 0.0


class WellSpec(_Strict):
    location: tuple[float, float]
    rate: float
    continuum: Literal["m", "f", "v"] = "m"


class MeshSpec(_Strict):
    extent: tuple[float, float] = (15000 * FT_TO_M, 15000 * FT_TO_M)
    nx: int = Field(default=64, ge=2)
    ny: int = Field(default=64, ge=2)
    mx: int = Field(default=8, ge=1)
    my: int = Field(default=8, ge=1)

    @field_validator("extent")
    @classmethod
    def _positive(cls, v):
        if v[0] <= 0 or v[1] <= 0:
            raise ValueError("extent must be positive")
        return v

    @model_validator(mode="after")
    def _nested(self):
        if self.nx % self.mx or self.ny % self.my:
            raise ValueError(f"coarse grid {self.mx}x{self.my} does not divide fine grid {self.nx}x{self.ny}")
        return self


class TimeSpec(_Strict):
    dt: float = Field(default=1.0, gt=0)
    T: float = Field(default=20.0, gt=0)
    scheme: Literal["linearized", "fixed_point"] = "linearized"
    tol: float = Field(default=1e-8, gt=0)
    max_iter: int = Field(default=50, ge=1)

    @model_validator(mode="after")
    def _order(self):
        if self.dt > self.T:
            raise ValueError("dt must not exceed T")
        return self


class BasisSpec(_Strict):
    count: int = Field(default=8, ge=1)
    threshold: Optional[float] = Field(default=None, gt=0)
    eigensolver: Literal["jacobi", "lapack"] = "lapack"


class ScenarioConfig(_Strict):
    mesh: MeshSpec = Field(default_factory=MeshSpec)
    fluid: FluidSpec = Field(default_factory=FluidSpec)
    continua: ContinuaSpec = Field(default_factory=ContinuaSpec)
    fractures: list[FractureSpec] = Field(default_factory=list)
    shape_factor: Optional[float] = Field(default=None, ge=0)
    boundary: dict[Literal["left", "right", "bottom", "top"], BoundarySpec] = Field(default_factory=dict)
    wells: list[WellSpec] = Field(default_factory=list)
    initial: dict[Literal["m", "f", "v"], float] = Field(default_factory=dict)
    time: TimeSpec = Field(default_factory=TimeSpec)
    basis: BasisSpec = Field(default_factory=BasisSpec)
    output: str = "output"

    def digest(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def build(self, base_dir: Path | None = None) -> "Scenario":
        return Scenario(self, Path(base_dir) if base_dir else Path("."))


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(data)


def json_schema() -> dict:
    return ScenarioConfig.model_json_schema()


class Scenario:
    """Built objects for one configuration: meshes, coefficients, loads, BCs."""

    def __init__(self, config: ScenarioConfig, base_dir: Path = Path(".")):
        self.config = config
        self.base_dir = base_dir
        ms = config.mesh
        try:
            self.network = FractureNetwork(tuple(
                Fracture(np.asarray(f.points, float), f.aperture, f.permeability, f.porosity)
                for f in config.fractures))
        except ValueError as exc:
            raise ConfigError(f"fractures: {exc}") from None
        self.mesh = build_fine_mesh(ms.extent, ms.nx, ms.ny, self.network)
        self.grid = build_coarse_grid(self.mesh, ms.mx, ms.my)
        fl = config.fluid
        self.fluid = FluidProperties(fl.c, fl.mu, fl.B0, fl.u0)
        continua = []
        for name in CONTINUA:
            spec = getattr(config.continua, name)
            continua.append(ContinuumParams(name, spec.porosity, self._permeability(spec.permeability, name)))
        sigma = shape_factor(self.mesh.h_min) if config.shape_factor is None else config.shape_factor
        self.model = Model(tuple(continua), self.fluid, exchange_coefficients(continua, sigma, self.fluid.mu))
        self.controls = TimeControls(config.time.dt, config.time.T, config.time.scheme,
                                     config.time.tol, config.time.max_iter)

    def _permeability(self, spec, name):
        mesh = self.mesh
        if isinstance(spec, ConstantPerm):
            return np.full(mesh.n_triangles, spec.value)
        if isinstance(spec, SyntheticPerm):
            cells = synth_permeability(spec.seed, (mesh.ny, mesh.nx), spec.contrast, spec.base, spec.channels)
            return cell_to_triangle(cells, mesh.cell_of_triangle)
        path = Path(spec.path)
        if not path.is_absolute():
            path = self.base_dir / path
        vals = np.loadtxt(path, delimiter=",", ndmin=1).ravel()
        if len(vals) != mesh.n_triangles:
            raise ConfigError(f"continua.{name}.permeability: {path} has {len(vals)} values, "
                              f"expected {mesh.n_triangles} (one per triangle)")
        if np.any(vals <= 0):
            raise ConfigError(f"continua.{name}.permeability: values must be positive")
        return vals

    @cached_property
    def chi(self):
        return partition_of_unity(self.grid)

    @cached_property
    def dofmap(self) -> asm.DofMap:
        sides = {s: b.value for s, b in self.config.boundary.items() if b.type == "dirichlet"}
        return asm.dirichlet_dofmap(self.mesh, sides)

    @cached_property
    def load(self) -> np.ndarray:
        wells = [asm.Well(tuple(w.location), w.rate, CONTINUA.index(w.continuum)) for w in self.config.wells]
        neumann = {s: b.value for s, b in self.config.boundary.items() if b.type == "neumann"}
        try:
            return asm.assemble_load(self.mesh, wells, None, neumann)
        except ValueError as exc:
            raise ConfigError(f"wells: {exc}") from None

    @cached_property
    def initial(self) -> np.ndarray:
        n = self.mesh.n_nodes
        vals = [self.config.initial.get(c, self.fluid.u0) for c in CONTINUA]
        return np.concatenate([np.full(n, v) for v in vals])

    def local_modes(self, n_modes: int):
        from .multiscale import compute_local_modes
        return compute_local_modes(self.grid, self.model, n_modes, self.config.basis.eigensolver)

    def space(self, mode: str, n_basis: int | None = None, modes_cache=None):
        from .multiscale import build_space, msfem_space
        if mode == "fine":
            return None
        if mode == "msfem":
            return msfem_space(self.grid, self.model, self.chi)
        if mode != "gmsfem":
            raise ValueError(f"unknown mode {mode!r}")
        L = n_basis or self.config.basis.count
        modes = modes_cache if modes_cache is not None else self.local_modes(L)
        return build_space(self.grid, modes, self.chi, n_basis=L, threshold=self.config.basis.threshold)
