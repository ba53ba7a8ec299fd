"""Command line entry point.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.  The output
directory is ``--out``, else ``$TRICONTINUUM_OUTPUT``, else the config's
``output`` field.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, load_config
from .geometry import MeshError
from .linalg import ConvergenceError
from .multiscale import SnapshotError
from .physics import SingularStateError
from .report import ErrorReport, compare, enrichment_sweep
from .timestepper import RunResult, SystemState, run

log = logging.getLogger("tricontinuum")

ENV_OUTPUT = "TRICONTINUUM_OUTPUT"


def _ints(text):
    return [int(x) for x in text.split(",") if x]


def _floats(text):
    return [float(x) for x in text.split(",") if x]


def _outdir(args, cfg) -> Path:
    out = Path(args.out or os.environ.get(ENV_OUTPUT) or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args):
    cfg = load_config(args.config)
    return cfg, cfg.build(Path(args.config).resolve().parent)


def cmd_mesh(args):
    cfg, sc = _scenario(args)
    out = _outdir(args, cfg)
    path = io.write_vtk(out / "mesh.vtk", sc.mesh, block_of_triangle=sc.grid.block_of_triangle)
    print(f"fine nodes {sc.mesh.n_nodes}, triangles {sc.mesh.n_triangles}, h_min {sc.mesh.h_min:.6g}")
    print(f"coarse nodes {sc.grid.n_nodes}, blocks {sc.grid.n_blocks}, fractures {len(sc.network)}")
    print(f"wrote {path}")


def cmd_basis(args):
    cfg, sc = _scenario(args)
    out = _outdir(args, cfg)
    L = args.basis or cfg.basis.count
    sweep = _ints(args.sweep) if args.sweep else []
    modes = sc.local_modes(max([L + 1] + [s + 1 for s in sweep]))
    io.write_eigenvalues(out / "eigenvalues.csv", modes)
    lam = min(m.eigenvalues[L] for m in modes if len(m.eigenvalues) > L)
    print(f"{len(modes)} neighborhoods, L = {L}, Lambda = {lam:.6g}")
    if sweep:
        rows = enrichment_sweep(sc, sweep, modes)
        io.write_csv(out / "enrichment.csv", ["basis", "Lambda", "energy_error"], rows)
        for L_, lam_, err in rows:
            print(f"L={L_:3d}  Lambda={lam_:.6g}  1/Lambda={1 / lam_:.6g}  energy error={err:.6g}")


def _save_run(path, res: RunResult):
    np.savez(path, t=res.times, u=np.array([s.u for s in res.states]), mass=res.mass,
             iterations=np.array([s.iterations for s in res.states]), dofs=res.dofs,
             wall_time=res.wall_time, mode=res.mode)


def _load_run(path) -> RunResult:
    d = np.load(path)
    states = [SystemState(float(t), u, None, int(k)) for t, u, k in zip(d["t"], d["u"], d["iterations"])]
    return RunResult(str(d["mode"]), states, d["mass"], d["iterations"][1:], float(d["wall_time"]), int(d["dofs"]))


def _export_fields(out, sc, res, days):
    paths = []
    for d in days:
        s = res.at(d)
        paths.append(io.write_state_vtk(out / f"{res.mode}_day{d:g}.vtk", sc.mesh, s.u, sc.grid.block_of_triangle))
    return paths


def cmd_run(args):
    cfg, sc = _scenario(args)
    out = _outdir(args, cfg)
    res = run(sc, args.mode, args.basis)
    _save_run(out / f"{args.mode}.npz", res)
    io.write_csv(out / f"{args.mode}_timeseries.csv", io.TIMESERIES_HEADER,
                 io.timeseries_rows(res, sc.mesh.n_nodes))
    if args.vtk_days:
        _export_fields(out, sc, res, _floats(args.vtk_days))
    drift = np.max(np.abs(res.mass - res.mass[0])) / max(abs(res.mass[0]), 1e-300)
    print(f"{args.mode}: {len(res.states) - 1} steps, DOF {res.dofs}, {res.wall_time:.2f}s, "
          f"relative mass drift {drift:.3e}")


def cmd_compare(args):
    cfg, sc = _scenario(args)
    out = _outdir(args, cfg)
    modes = args.modes.split(",")
    report = compare(sc, modes, _ints(args.basis_list), _floats(args.days))
    report.to_json(out / "report.json")
    report.to_csv(out / "errors.csv")
    print(report.table())


def cmd_export(args):
    cfg, sc = _scenario(args)
    out = _outdir(args, cfg)
    if args.format == "csv":
        src = out / "report.json"
        if not src.exists():
            raise ConfigError(f"{src} not found; run 'compare' first")
        print(ErrorReport.from_json(src).to_csv(out / "errors.csv"))
    else:
        src = out / f"{args.mode}.npz"
        if not src.exists():
            raise ConfigError(f"{src} not found; run 'run --mode {args.mode}' first")
        days = _floats(args.days) if args.days else [sc.controls.T]
        for p in _export_fields(out, sc, _load_run(src), days):
            print(p)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tricontinuum", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="JSON scenario file")
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("mesh", help="build meshes and write mesh.vtk")
    common(sp)
    sp.set_defaults(func=cmd_mesh)

    sp = sub.add_parser("basis", help="local spectral problems; eigenvalues and Lambda")
    common(sp)
    sp.add_argument("--basis", type=int, help="basis functions per neighborhood")
    sp.add_argument("--sweep", help="comma separated basis counts for the steady enrichment diagnostic")
    sp.set_defaults(func=cmd_basis)

    sp = sub.add_parser("run", help="time integration in one mode")
    common(sp)
    sp.add_argument("--mode", choices=["fine", "gmsfem", "msfem"], default="gmsfem")
    sp.add_argument("--basis", type=int)
    sp.add_argument("--vtk-days", help="comma separated days to write as VTK")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="error table of coarse modes against the fine solution")
    common(sp)
    sp.add_argument("--modes", default="gmsfem,msfem")
    sp.add_argument("--basis", dest="basis_list", default="2,4,8,16")
    sp.add_argument("--days", default="1,10,20")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("export", help="re-export saved results as csv or vtk")
    common(sp)
    sp.add_argument("--format", choices=["csv", "vtk"], default="csv")
    sp.add_argument("--mode", choices=["fine", "gmsfem", "msfem"], default="gmsfem")
    sp.add_argument("--days")
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, MeshError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (np.linalg.LinAlgError, ConvergenceError, SnapshotError, SingularStateError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
