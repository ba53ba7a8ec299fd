import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tricontinuum import io
from tricontinuum.config import parse_config
from tricontinuum.geometry import build_fine_mesh
from tricontinuum.report import ErrorReport, compare, l2_relative_error
from tricontinuum.timestepper import run


def _small_config(**extra):
    data = {
        "mesh": {"extent": [10.0, 10.0], "nx": 8, "ny": 8, "mx": 2, "my": 2},
        "continua": {"m": {"porosity": 0.2, "permeability": {"type": "synthetic", "seed": 1, "contrast": 100,
                                                              "base": 1e-10}},
                     "f": {"porosity": 0.01, "permeability": {"type": "constant", "value": 1e-9}},
                     "v": {"porosity": 0.1, "permeability": {"type": "constant", "value": 1e-10}}},
        "fractures": [{"points": [[1, 2], [8, 6]]}],
        "boundary": {"top": {"type": "dirichlet", "value": 10.0}, "bottom": {"type": "dirichlet", "value": 0.0}},
        "initial": {"m": 0, "f": 0, "v": 0},
        "time": {"dt": 1, "T": 3},
    }
    data.update(extra)
    return parse_config(data)


class TestL2Error:
    @pytest.fixture
    def field(self):
        mesh = build_fine_mesh((2.0, 1.0), 6, 4)
        x, y = mesh.nodes.T
        return mesh, np.concatenate([1 + x, y * x, np.cos(x + y)])

    def test_identical(self, field):
        mesh, u = field
        assert all(v == 0 for v in l2_relative_error(u, u, mesh).values())

    def test_zero_approx(self, field):
        mesh, u = field
        e = l2_relative_error(np.zeros_like(u), u, mesh)
        assert all(v == pytest.approx(100.0) for v in e.values())

    def test_scaling_identity(self, field):
        mesh, u = field
        e = l2_relative_error(1.1 * u, u, mesh)
        assert all(v == pytest.approx(10.0, rel=1e-12) for v in e.values())

    @given(st.floats(-1e3, 1e3).filter(lambda k: abs(k) > 1e-3), st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_reference_scaling_invariance(self, k, seed):
        mesh = build_fine_mesh((1.0, 1.0), 3, 3)
        rng = np.random.default_rng(seed)
        a, r = rng.normal(size=(2, 3 * mesh.n_nodes))
        e1, e2 = l2_relative_error(a, r, mesh), l2_relative_error(k * a, k * r, mesh)
        for c in e1:
            assert e2[c] == pytest.approx(e1[c], rel=1e-10)

    def test_combined_is_block_sum(self, field):
        mesh, u = field
        v = u.copy()
        v[: mesh.n_nodes] *= 1.5
        e = l2_relative_error(v, u, mesh)
        assert e["f"] == 0 and e["v"] == 0
        assert 0 < e["combined"] < e["m"]

    def test_zero_reference(self, field):
        mesh, u = field
        with pytest.raises(ValueError):
            l2_relative_error(u, np.zeros_like(u), mesh)

    def test_layout_mismatch(self, field):
        mesh, u = field
        with pytest.raises(ValueError):
            l2_relative_error(u[:-1], u[:-1], mesh)


class TestCompare:
    def test_table_layout_and_dofs(self):
        cfg = _small_config()
        rep = compare(cfg, ("gmsfem", "msfem"), (2, 4, 8, 16), (1, 3))
        lines = rep.table().splitlines()
        assert [ln.split()[0] for ln in lines[1:6]] == ["2", "4", "8", "16", "msfem"]
        assert rep.dofs["fine"] == 3 * 81
        assert rep.dofs["msfem"] == 3 * 9
        assert rep.dofs["2"] == 2 * 9
        assert all(e >= 0 for *_, e in rep.rows)

    def test_gmsfem_only(self):
        rep = compare(_small_config(), ("gmsfem",), (2,), (1,))
        assert "msfem" not in rep.dofs
        assert not any(r[0] == "msfem" for r in rep.rows)

    def test_day_beyond_T(self):
        with pytest.raises(ValueError, match="outside"):
            compare(_small_config(), ("gmsfem",), (2,), (5,))

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            compare(_small_config(), ("fem",), (2,), (1,))

    def test_deterministic(self, tmp_path):
        a = compare(_small_config(), ("gmsfem",), (2, 4), (1, 3))
        b = compare(_small_config(), ("gmsfem",), (2, 4), (1, 3))
        assert a.rows == b.rows

    def test_json_roundtrip_and_csv(self, tmp_path):
        rep = compare(_small_config(), ("gmsfem", "msfem"), (2,), (1,))
        rep.to_json(tmp_path / "r.json")
        back = ErrorReport.from_json(tmp_path / "r.json")
        assert back.rows == rep.rows and back.dofs == rep.dofs
        rep.to_csv(tmp_path / "e.csv")
        first = (tmp_path / "e.csv").read_bytes()
        assert first.startswith(b"basis,day,continuum,error_pct\r\n")
        back.to_csv(tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_bytes() == first


class TestRun:
    def test_one_step(self):
        res = run(_small_config(time={"dt": 2, "T": 2}), "fine")
        assert len(res.states) == 2

    def test_modes_and_dofs(self):
        cfg = _small_config()
        sc = cfg.build()
        assert run(sc, "gmsfem", 3).dofs == 3 * 9
        assert run(sc, "msfem").dofs == 27

    def test_bad_argument(self):
        with pytest.raises(TypeError):
            run({"mesh": {}})


class TestIO:
    def test_vtk_structure(self, tmp_path):
        sc = _small_config().build()
        res = run(sc, "fine")
        p = io.write_state_vtk(tmp_path / "s.vtk", sc.mesh, res.states[-1].u, sc.grid.block_of_triangle)
        text = p.read_text().splitlines()
        assert text[0].startswith("# vtk DataFile")
        nseg = len(sc.mesh.fracture_segments[0])
        assert f"CELLS {sc.mesh.n_triangles + nseg} {4 * sc.mesh.n_triangles + 3 * nseg}" in text
        assert "SCALARS u_v double 1" in text and "SCALARS fracture_id int 1" in text

    def test_csv_rfc4180(self, tmp_path):
        p = io.write_csv(tmp_path / "a.csv", ["a", "b"], [["x,y", 0.1], ['q"', 2]])
        raw = p.read_bytes()
        assert raw == b'a,b\r\n"x,y",0.10000000000000001\r\n"q""",2\r\n'
        assert io.read_csv(p)[1] == ["x,y", "0.10000000000000001"]

    def test_timeseries_columns(self):
        sc = _small_config().build()
        res = run(sc, "fine")
        rows = io.timeseries_rows(res, sc.mesh.n_nodes)
        assert len(rows) == 4 and len(rows[0]) == len(io.TIMESERIES_HEADER)
