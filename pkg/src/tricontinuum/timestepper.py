"""Backward-Euler time integration on the fine space or a multiscale space.

States are always carried as fine 3n vectors; on a multiscale space they are
``g + P c`` with ``g`` the Dirichlet lifting and ``c`` the coarse coefficients.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import assembly as asm
from .linalg import ConvergenceError, solve_spd
from .multiscale import MultiscaleSpace

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeControls:
    dt: float = 1.0
    T: float = 20.0
    scheme: str = "linearized"
    tol: float = 1e-8
    max_iter: int = 50

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("time step must be positive")
        if not 0 < self.dt <= self.T:
            raise ValueError("need 0 < dt <= T")
        if not self.tol > 0:
            raise ValueError("fixed-point tolerance must be positive")
        if self.scheme not in ("linearized", "fixed_point"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True, eq=False)
class SystemState:
    t: float
    u: np.ndarray                    # fine 3n vector
    coeffs: np.ndarray | None = None  # coarse coefficients when on a multiscale space
    iterations: int = 0
    converged: bool = True

    def continuum(self, i: int) -> np.ndarray:
        n = len(self.u) // asm.N_CONT
        return self.u[i * n:(i + 1) * n]


def coarse_solve(A, b, rel_cut=1e-13):
    """Dense SPD solve; if the coarse basis is rank deficient, solve on range(A).

    The minimum-norm solution gives the same fine field ``P c`` because the
    dropped directions are (numerically) in the kernel of ``P``.
    """
    try:
        return solve_spd(A, b, tol=1e-9, method="dense")
    except (np.linalg.LinAlgError, ConvergenceError):
        w, V = scipy.linalg.eigh(0.5 * (A + A.T))
        keep = w > rel_cut * w[-1]
        return V[:, keep] @ ((V[:, keep].T @ b) / w[keep])


class Discretization:
    """Fine operators plus an active trial space (fine if ``space`` is None)."""

    def __init__(self, mesh, model, load=None, dofmap: asm.DofMap | None = None,
                 space: MultiscaleSpace | None = None):
        self.mesh = mesh
        self.model = model
        self.n = mesh.n_nodes
        self.M = asm.assemble_mass(mesh, model)
        self.Q = asm.assemble_exchange(mesh, model)
        self.F = np.zeros(asm.N_CONT * self.n) if load is None else np.asarray(load, float)
        self.dofmap = dofmap if dofmap is not None else asm.DofMap(self.n)
        self.g = self.dofmap.lifting()
        self.space = space
        if space is not None:
            mask = np.ones(asm.N_CONT * self.n)
            mask[self.dofmap.dirichlet] = 0.0
            self.P = sp.csc_matrix(sp.diags(mask) @ space.P)
        else:
            self.P = None

    @property
    def dof_count(self) -> int:
        return self.P.shape[1] if self.P is not None else len(self.dofmap.free)

    def b_norm(self, u) -> float:
        return float(np.sqrt(max(u @ (self.M @ u), 0.0)))

    def mass_total(self, u) -> float:
        return float(np.sum(self.M @ u))

    def solve(self, A, rhs, base: SystemState | None = None):
        """Solve ``A u = rhs`` on the active space with Dirichlet lifting; returns (u, coeffs).

        With ``base`` the increment ``u - base.u`` is solved for, which keeps
        round-off proportional to the change rather than to the state.
        """
        A = sp.csr_matrix(A)
        if self.P is None:
            u_b = np.zeros_like(rhs) if base is None else base.u
            d = self.dofmap.dirichlet
            inc = asm.DofMap(self.n, d, self.dofmap.values - u_b[d])
            A_ff, b_f = asm.apply_dirichlet(A, rhs - A @ u_b, inc)
            x = solve_spd(A_ff, b_f, tol=1e-9, method="direct" if A_ff.shape[0] >= 200 else "dense")
            return u_b + inc.expand(x), None
        if base is None or base.coeffs is None:
            u_b, c_b = self.g, np.zeros(self.P.shape[1])
        else:
            u_b, c_b = base.u, base.coeffs
        Ac = (self.P.T @ (A @ self.P)).toarray()
        bc = self.P.T @ (rhs - A @ u_b)
        dc = coarse_solve(Ac, bc)
        return u_b + self.P @ dc, c_b + dc

    def project_initial(self, u0) -> tuple[np.ndarray, np.ndarray | None]:
        """b-projection: b(u_ms(0), v) = b(u0, v) for v in the active space."""
        u0 = np.asarray(u0, float)
        if self.P is None:
            return u0.copy(), None
        G = (self.P.T @ (self.M @ self.P)).toarray()
        c = coarse_solve(G, self.P.T @ (self.M @ (u0 - self.g)))
        return self.g + self.P @ c, c

    def step(self, prev: SystemState, dt: float, lag, load=None) -> tuple[np.ndarray, np.ndarray | None]:
        """One backward-Euler solve with alpha frozen at the fine field ``lag``."""
        F = self.F if load is None else load
        K = asm.assemble_stiffness(self.mesh, self.model, lag)
        A = self.M / dt + K + self.Q
        rhs = self.M @ prev.u / dt + F
        return self.solve(A, rhs, prev)


def step_linearized(prev: SystemState, disc: Discretization, controls: TimeControls, load=None) -> SystemState:
    u, c = disc.step(prev, controls.dt, prev.u, load)
    return SystemState(prev.t + controls.dt, u, c, 1, True)


def step_fixed_point(prev: SystemState, disc: Discretization, controls: TimeControls, load=None) -> SystemState:
    u_old = prev.u
    converged = False
    m = 0
    u, c = u_old, prev.coeffs
    for m in range(1, controls.max_iter + 1):
        u, c = disc.step(prev, controls.dt, u_old, load)
        upd = disc.b_norm(u - u_old) / max(disc.b_norm(u), np.finfo(float).tiny)
        u_old = u
        if upd <= controls.tol:
            converged = True
            break
    if not converged and controls.max_iter > 1:
        log.warning("fixed-point iteration stopped at max_iter=%d without convergence", controls.max_iter)
    return SystemState(prev.t + controls.dt, u, c, m, converged or controls.max_iter == 1)


@dataclass(eq=False)
class RunResult:
    mode: str
    states: list
    mass: np.ndarray
    iterations: np.ndarray
    wall_time: float
    dofs: int
    space: MultiscaleSpace | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def at(self, t: float) -> SystemState:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"no state at t={t}")
        return self.states[k]


def integrate(disc: Discretization, u0, controls: TimeControls, mode: str = "fine") -> RunResult:
    tic = time.perf_counter()
    u, c = disc.project_initial(u0)
    state = SystemState(0.0, u, c)
    states = [state]
    stepper = step_linearized if controls.scheme == "linearized" else step_fixed_point
    for _ in range(controls.n_steps):
        state = stepper(state, disc, controls)
        states.append(state)
    mass = np.array([disc.mass_total(s.u) for s in states])
    its = np.array([s.iterations for s in states[1:]], dtype=int)
    return RunResult(mode, states, mass, its, time.perf_counter() - tic, disc.dof_count, disc.space)


def solve_steady(disc: Discretization) -> tuple[np.ndarray, np.ndarray | None]:
    """Steady coupled problem (K + Q) u = F with alpha frozen at 1/mu."""
    K = asm.assemble_stiffness(disc.mesh, disc.model)
    return disc.solve(K + disc.Q, disc.F)


def run(scenario, mode: str = "fine", n_basis: int | None = None, modes_cache=None) -> RunResult:
    """Drive a scenario in ``fine``, ``gmsfem`` or ``msfem`` mode.

    ``scenario`` is a :class:`tricontinuum.config.ScenarioConfig` or an
    already built :class:`tricontinuum.config.Scenario`.
    """
    from .config import Scenario, ScenarioConfig

    if isinstance(scenario, ScenarioConfig):
        scenario = scenario.build()
    if not isinstance(scenario, Scenario):
        raise TypeError("run() expects a ScenarioConfig or Scenario")
    space = scenario.space(mode, n_basis, modes_cache)
    disc = Discretization(scenario.mesh, scenario.model, scenario.load, scenario.dofmap, space)
    return integrate(disc, scenario.initial, scenario.controls, mode)
