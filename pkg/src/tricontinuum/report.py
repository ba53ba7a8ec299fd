"""Error metrics and fine-vs-coarse comparisons."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import assembly as asm
from .io import write_csv
from .multiscale import build_space
from .physics import CONTINUA
from .timestepper import Discretization, integrate, run, solve_steady


def l2_relative_error(u_approx, u_ref, mesh, mass=None) -> dict:
    """Relative L2 errors in percent per continuum and for all continua together."""
    M = asm.l2_mass(mesh) if mass is None else mass
    n = mesh.n_nodes
    u_approx = np.asarray(u_approx, float)
    u_ref = np.asarray(u_ref, float)
    if u_approx.shape != u_ref.shape or len(u_ref) != asm.N_CONT * n:
        raise ValueError("states must share the fine DOF layout")
    out = {}
    num_tot = den_tot = 0.0
    for i, c in enumerate(CONTINUA):
        e = u_approx[i * n:(i + 1) * n] - u_ref[i * n:(i + 1) * n]
        r = u_ref[i * n:(i + 1) * n]
        num, den = float(e @ (M @ e)), float(r @ (M @ r))
        num_tot += num
        den_tot += den
        out[c] = 100.0 * np.sqrt(num / den) if den > 0 else float("nan")
    if den_tot == 0:
        raise ValueError("reference solution has zero norm")
    out["combined"] = 100.0 * np.sqrt(num_tot / den_tot)
    return out


@dataclass
class ErrorReport:
    rows: list = field(default_factory=list)       # (basis label, day, continuum, error %)
    dofs: dict = field(default_factory=dict)        # mode/basis label -> DOF count
    runtimes: dict = field(default_factory=dict)    # label -> seconds
    basis_counts: list = field(default_factory=list)
    days: list = field(default_factory=list)

    def error(self, basis, day, continuum="combined") -> float:
        for b, d, c, e in self.rows:
            if str(b) == str(basis) and d == day and c == continuum:
                return e
        raise KeyError((basis, day, continuum))

    def table(self, continuum="combined") -> str:
        labels = [str(b) for b in self.basis_counts] + (["msfem"] if "msfem" in self.dofs else [])
        head = "basis".ljust(8) + "".join(f"Day {d:g}".rjust(10) for d in self.days) + "DOF".rjust(8)
        lines = [head]
        for lab in labels:
            errs = "".join(f"{self.error(lab, d, continuum):10.2f}" for d in self.days)
            lines.append(lab.ljust(8) + errs + str(self.dofs[lab]).rjust(8))
        lines.append(f"fine DOF = {self.dofs['fine']}")
        return "\n".join(lines)

    def to_json(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=1, sort_keys=True))

    @classmethod
    def from_json(cls, path) -> "ErrorReport":
        data = json.loads(Path(path).read_text())
        data["rows"] = [tuple(r) for r in data["rows"]]
        return cls(**data)

    def to_csv(self, path):
        return write_csv(path, ["basis", "day", "continuum", "error_pct"],
                         [[b, float(d), c, float(e)] for b, d, c, e in self.rows])


def compare(scenario, modes=("gmsfem", "msfem"), basis_counts=(2, 4, 8, 16), days=(1, 10, 20)) -> ErrorReport:
    """Fine reference once, then every requested coarse configuration."""
    from .config import ScenarioConfig

    if isinstance(scenario, ScenarioConfig):
        scenario = scenario.build()
    T = scenario.controls.T
    for d in days:
        if d > T + 1e-12 or d <= 0:
            raise ValueError(f"report day {d} outside (0, T={T}]")
    unknown = set(modes) - {"gmsfem", "msfem"}
    if unknown:
        raise ValueError(f"unknown modes {sorted(unknown)}")
    M = asm.l2_mass(scenario.mesh)
    report = ErrorReport(basis_counts=list(basis_counts) if "gmsfem" in modes else [], days=list(days))
    ref = run(scenario, "fine")
    report.dofs["fine"] = asm.N_CONT * scenario.mesh.n_nodes
    report.runtimes["fine"] = ref.wall_time

    def record(label, res):
        for d in days:
            errs = l2_relative_error(res.at(d).u, ref.at(d).u, scenario.mesh, M)
            for c, e in errs.items():
                report.rows.append((label, float(d), c, float(e)))
        report.dofs[label] = res.dofs
        report.runtimes[label] = res.wall_time

    if "gmsfem" in modes:
        tic = time.perf_counter()
        cache = scenario.local_modes(max(basis_counts))
        report.runtimes["offline"] = time.perf_counter() - tic
        for L in basis_counts:
            record(str(L), run(scenario, "gmsfem", L, cache))
    if "msfem" in modes:
        record("msfem", run(scenario, "msfem"))
    return report


def energy_error(disc: Discretization, u, u_ref) -> float:
    """a_Q energy norm sqrt(a(e, e; .) + q(e, e)) at alpha frozen at 1/mu."""
    e = np.asarray(u) - np.asarray(u_ref)
    K = asm.assemble_stiffness(disc.mesh, disc.model)
    return float(np.sqrt(max(e @ (K @ e) + e @ (disc.Q @ e), 0.0)))


def enrichment_sweep(scenario, counts=(1, 2, 4, 8), modes=None) -> list[tuple[int, float, float]]:
    """Steady coupled problem: (L, Lambda, energy error vs fine) for nested spaces."""
    disc = Discretization(scenario.mesh, scenario.model, scenario.load, scenario.dofmap)
    ref, _ = solve_steady(disc)
    modes = scenario.local_modes(max(counts)) if modes is None else modes
    out = []
    for L in counts:
        space = build_space(scenario.grid, modes, scenario.chi, n_basis=L)
        dL = Discretization(scenario.mesh, scenario.model, scenario.load, scenario.dofmap, space)
        u, _ = solve_steady(dL)
        out.append((L, space.Lambda, energy_error(disc, u, ref)))
    return out
