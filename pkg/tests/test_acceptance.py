"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line; the lines are printed in the pytest
terminal summary (and directly when this file is run as a script).
"""
import time

import numpy as np
import pytest
import scipy.linalg

from tricontinuum import assembly as asm
from tricontinuum.config import load_config, parse_config
from tricontinuum.geometry import FineMesh, FractureNetwork, build_coarse_grid, build_fine_mesh, neighborhood
from tricontinuum.linalg import gen_eig_sym
from tricontinuum.multiscale import local_spectral, solve_snapshots
from tricontinuum.physics import FluidProperties, make_model
from tricontinuum.report import compare, enrichment_sweep
from tricontinuum.timestepper import (Discretization, SystemState, TimeControls, integrate, step_fixed_point,
                                      step_linearized)

from conftest import SCENARIOS, one_fracture
from oracles import cramer3, dense_coupled

RESULTS = {}


def record(key, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {key} {title}: {detail}"
    RESULTS[key] = line
    print(line)
    return ok


@pytest.fixture(scope="module")
def desk():
    return load_config(SCENARIOS / "desk.json").build(SCENARIOS)


@pytest.fixture(scope="module")
def desk_report(desk):
    tic = time.perf_counter()
    rep = compare(desk, ("gmsfem", "msfem"), (2, 4, 8), (1,))
    return rep, time.perf_counter() - tic


def _two_disjoint_in_one_neighborhood(sc):
    mesh = sc.mesh
    for i in range(sc.grid.n_nodes):
        nb = neighborhood(sc.grid, i)
        ids = sorted(set(nb.fracture_ids.tolist()))
        for a in ids:
            for b in ids:
                if a < b and not set(mesh.fracture_nodes[a]) & set(mesh.fracture_nodes[b]):
                    return i, (a, b)
    return None


def test_c1_enrichment_trend(desk, desk_report):
    rep, wall = desk_report
    cfg = desk.config
    setup_ok = (cfg.mesh.nx, cfg.mesh.ny, cfg.mesh.mx, cfg.mesh.my) == (64, 64, 8, 8) \
        and cfg.continua.m.permeability.type == "synthetic" and cfg.continua.m.permeability.contrast == 1e4 \
        and len(cfg.fractures) >= 3 and _two_disjoint_in_one_neighborhood(desk) is not None \
        and cfg.fluid.model_dump() == {"c": 1.4504e-8, "mu": 8e-3, "B0": 1.1, "u0": 2.0684e7}
    e = [rep.error(L, 1.0) for L in (2, 4, 8)]
    ok = setup_ok and e[0] > e[1] > e[2] and e[2] <= 10.0 and wall < 300
    record("C1", "basis enrichment (Day 1, combined L2 %)", ok,
           f"L=2: {e[0]:.2f}, L=4: {e[1]:.2f}, L=8: {e[2]:.2f} (need strictly decreasing, L=8 <= 10); "
           f"scenario ok={setup_ok}; {wall:.1f}s")
    assert ok


def test_c2_msfem_vs_gmsfem(desk_report):
    rep, _ = desk_report
    ms, g8 = rep.error("msfem", 1.0), rep.error(8, 1.0)
    ok = ms >= 2 * g8
    record("C2", "MsFEM vs GMsFEM-8", ok, f"MsFEM {ms:.2f}% vs GMsFEM-8 {g8:.2f}% (ratio {ms / g8:.2f}, need >= 2)")
    assert ok


def test_c3_conservation(desk):
    mesh = desk.mesh
    load = np.zeros(3 * mesh.n_nodes)
    x, y = mesh.nodes.T / mesh.extent[0]
    u0 = np.concatenate([500 + 400 * np.sin(3 * x) * y, 800 * x * y, 300 + 200 * np.cos(4 * y)])
    ctl = TimeControls(dt=1.0, T=20.0)
    worst = {}
    modes_cache = desk.local_modes(8)
    for mode in ("fine", "msfem", "gmsfem"):
        space = desk.space(mode, 8, modes_cache)
        disc = Discretization(mesh, desk.model, load, asm.DofMap(mesh.n_nodes), space)
        res = integrate(disc, u0, ctl, mode)
        assert len(res.states) == 21
        worst[mode] = float(np.max(np.abs(np.diff(res.mass))) / abs(res.mass[0]))
    ok = all(v <= 1e-10 for v in worst.values())
    record("C3", "mass conservation, 20 steps, no-flux", ok,
           ", ".join(f"{m} {v:.1e}" for m, v in worst.items()) + " (need <= 1e-10)")
    assert ok


# degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1)
_A1, _B1, _A2, _B2 = 0.059715871789770, 0.470142064105115, 0.797426985353087, 0.101286507323456
_QP = np.array([[1 / 3, 1 / 3, 1 / 3],
                [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
                [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2]])
_QW = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def _l2_error(mesh, uh, exact):
    p = mesh.nodes[mesh.triangles]                  # (nt, 3, 2)
    pts = np.einsum("qk,tkd->tqd", _QP, p)
    vals_h = np.einsum("qk,tk->tq", _QP, uh[mesh.triangles])
    err = (vals_h - exact(pts[..., 0], pts[..., 1])) ** 2
    return float(np.sqrt(np.sum(mesh.areas[:, None] * _QW * err)))


def test_c4_fine_convergence_rate():
    tic = time.perf_counter()
    fluid = FluidProperties(c=0.0, mu=1.0)

    def exact(t):
        return lambda x, y: t * np.sin(np.pi * x) * np.sin(np.pi * y)

    errs, hs = [], []
    for nx in (8, 16, 32, 64):
        mesh = build_fine_mesh((1.0, 1.0), nx, nx)
        n = mesh.n_nodes
        model = make_model(mesh, (1.0, 1.0, 1.0), fluid=fluid, sigma=0.0)
        # single continuum: f and v pinned to zero everywhere, m has zero Dirichlet data
        dirichlet = np.concatenate([mesh.boundary_nodes, n + np.arange(2 * n)])
        disc = Discretization(mesh, model, dofmap=asm.DofMap(n, dirichlet, np.zeros(len(dirichlet))))
        Ml = asm.l2_mass(mesh)
        ctl = TimeControls(dt=0.5, T=1.0)
        state = SystemState(0.0, np.zeros(3 * n))
        for _ in range(ctl.n_steps):
            t = state.t + ctl.dt
            load = np.zeros(3 * n)
            x, y = mesh.nodes.T
            load[:n] = Ml @ (2 * np.pi ** 2 * t * np.sin(np.pi * x) * np.sin(np.pi * y))
            state = step_linearized(state, disc, ctl, load)
        errs.append(_l2_error(mesh, state.u[:n], exact(state.t)))
        hs.append(1.0 / nx)
    rates = [np.log(errs[k] / errs[k + 1]) / np.log(hs[k] / hs[k + 1]) for k in range(3)]
    wall = time.perf_counter() - tic
    ok = all(1.7 <= r <= 2.3 for r in rates) and wall < 30
    record("C4", "fine solver L2 order", ok,
           "rates " + ", ".join(f"{r:.3f}" for r in rates) + f" (need [1.7, 2.3]); {wall:.1f}s")
    assert ok


def test_c5_spectral_correctness():
    net = one_fracture([[0.1, 0.15], [0.85, 0.7]], aperture=1e-2, permeability=50.0)
    mesh = build_fine_mesh((1.0, 1.0), 12, 12, net)
    grid = build_coarse_grid(mesh, 3, 3)
    rng = np.random.default_rng(11)
    fl = FluidProperties(c=1e-3, mu=1.0, B0=1.0, u0=0.0)
    model = make_model(mesh, (10 ** rng.uniform(-1, 1, mesh.n_triangles), 0.5, 0.1), fluid=fl, sigma=2.0)
    worst_res, worst_l1, worst_x, ascending = 0.0, 0.0, 0.0, True
    for i in range(grid.n_nodes):
        nb = neighborhood(grid, i)
        snap = solve_snapshots(mesh, nb, model)
        n_all = len(local_spectral(snap, model, 1, method="jacobi").eigenvalues)
        m = local_spectral(snap, model, n_all, method="jacobi", pin_constant=False)
        Phi = snap.columns
        S = asm.spectral_mass(snap.patch, model)
        A_s = Phi.T @ (snap.operator @ Phi)
        nA = np.linalg.norm(A_s, 2)
        for lam, psi in zip(m.eigenvalues, m.fields.T):
            r = Phi.T @ (snap.operator @ psi - lam * (S @ psi))
            worst_res = max(worst_res, np.linalg.norm(r) / nA)
        ascending &= bool(np.all(np.diff(m.eigenvalues) >= 0))
        worst_l1 = max(worst_l1, abs(m.eigenvalues[0]))
        # independent assembly, independent snapshots, LAPACK on the filtered pencil
        patch = snap.patch
        A, Sd = dense_coupled(patch.coords, patch.tris, patch.tri_ids, patch.segs, patch.seg_frac,
                              mesh.network.fractures, model, fl.mu)
        b, f = snap.boundary_dofs, snap.interior_dofs
        X = np.zeros((A.shape[0], len(b)))
        X[b] = np.eye(len(b))
        X[f] = -np.linalg.solve(A[np.ix_(f, f)], A[np.ix_(f, b)])
        As, Ss = X.T @ A @ X, X.T @ Sd @ X
        s, U = scipy.linalg.eigh(Ss)
        W = U[:, s > 1e-12 * s[-1]] / np.sqrt(s[s > 1e-12 * s[-1]])
        ref = scipy.linalg.eigvalsh(W.T @ As @ W)
        k = min(8, len(ref))
        worst_x = max(worst_x, float(np.max(np.abs(m.eigenvalues[1:k] - ref[1:k]) / ref[1:k])))
    ok = worst_res <= 1e-10 and ascending and worst_l1 <= 1e-10 and worst_x <= 1e-8
    record("C5", "local spectral problems (3x3 coarse toy, Jacobi)", ok,
           f"max residual/||a|| {worst_res:.1e}, max |lambda_1| {worst_l1:.1e}, ascending={ascending}, "
           f"cross-check rel diff {worst_x:.1e}")
    assert ok


def _single_triangle():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return FineMesh((1.0, 1.0), 1, 1, nodes, np.array([[0, 1, 2]]), np.array([[0, 1], [1, 2], [0, 2]]),
                    [[0], [0], [0]], {}, (), (), FractureNetwork(), np.array([[0, 0]]))


def test_c6_scheme_identities(desk):
    ctl_lin = TimeControls(dt=1.0, T=1.0)
    ctl_fp = TimeControls(dt=1.0, T=1.0, scheme="fixed_point", max_iter=1)
    worst = 0.0
    modes_cache = desk.local_modes(4)
    for mode in ("fine", "gmsfem"):
        space = desk.space(mode, 4, modes_cache)
        disc = Discretization(desk.mesh, desk.model, desk.load, desk.dofmap, space)
        prev = integrate(disc, desk.initial, ctl_lin, mode).states[1]    # a non-trivial state
        a = step_linearized(prev, disc, ctl_lin)
        b = step_fixed_point(prev, disc, ctl_fp)
        worst = max(worst, float(np.max(np.abs(a.u - b.u) / np.maximum(np.abs(a.u), 1e-300))))

    mesh = _single_triangle()
    model = make_model(mesh, (1e-10, 1e-12, 1e-13), sigma=1.0)
    disc = Discretization(mesh, model)
    prev = np.array([2.0684e7, 2.05e7, 2.07e7])
    out = step_linearized(SystemState(0.0, np.repeat(prev, 3)), disc, ctl_lin)
    b_ = model.storage
    q = model.exchange.q[:, :, 0]
    oracle = cramer3(np.diag(b_ / ctl_lin.dt + q.sum(axis=1)) - q, b_ / ctl_lin.dt * prev)
    ode = float(np.max(np.abs(out.u.reshape(3, 3) - oracle[:, None]) / np.abs(oracle)[:, None]))
    ok = worst <= 1e-14 and ode <= 1e-12
    record("C6", "scheme identities", ok,
           f"fixed-point(max=1) vs linearized max rel diff {worst:.1e} (need <= 1e-14); "
           f"single-triangle exchange step vs 3x3 oracle {ode:.1e} (need <= 1e-12)")
    assert ok


def test_c7_steady_enrichment_diagnostic():
    data = load_config(SCENARIOS / "desk.json").model_dump(mode="json")
    data["fluid"]["c"] = 0.0
    sc = parse_config(data).build(SCENARIOS)
    rows = enrichment_sweep(sc, (1, 2, 4, 8))
    errs = [e for _, _, e in rows]
    ok = all(errs[k + 1] <= errs[k] for k in range(len(errs) - 1))
    pairs = "; ".join(f"L={L}: Lambda={lam:.4g}, 1/Lambda={1 / lam:.4g}, err={e:.4g}" for L, lam, e in rows)
    record("C7", "steady energy error vs 1/Lambda (c=0)", ok, pairs + " (need non-increasing)")
    assert ok


def test_c8_snapshot_correctness():
    net = one_fracture([[0.1, 0.2], [0.8, 0.7]], aperture=1e-2, permeability=10.0)
    mesh = build_fine_mesh((1.0, 1.0), 8, 8, net)
    grid = build_coarse_grid(mesh, 2, 2)
    rng = np.random.default_rng(0)
    fl = FluidProperties(c=1e-3, mu=1.0, B0=1.0, u0=0.0)
    model = make_model(mesh, (10 ** rng.uniform(-1, 1, mesh.n_triangles), 0.5, 0.1), fluid=fl, sigma=3.0)
    n_cols = n_delta = 0
    worst = 0.0
    for i in range(grid.n_nodes):
        snap = solve_snapshots(mesh, neighborhood(grid, i), model)
        B = snap.columns[snap.boundary_dofs]
        n_cols += snap.dim
        n_delta += int(np.sum(np.all(B == np.eye(snap.dim), axis=0)))
        p = snap.patch
        A, _ = dense_coupled(p.coords, p.tris, p.tri_ids, p.segs, p.seg_frac, mesh.network.fractures, model, fl.mu)
        R = (A @ snap.columns)[snap.interior_dofs]
        worst = max(worst, float(np.abs(R).max() / (np.abs(A).max() * np.abs(snap.columns).max())))
    ok = n_delta == n_cols and worst <= 1e-9
    record("C8", "snapshot delta property and interior residual", ok,
           f"{n_delta}/{n_cols} columns exact on the boundary, max interior residual {worst:.1e} (need <= 1e-9)")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
