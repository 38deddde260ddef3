import math

import numpy as np
import pytest

from stochmech.errors import ConfigurationError, UnsupportedModeError
from stochmech.field import (
    CollocationGrid,
    DriftField,
    field_scan,
    interpolate_global,
    interpolate_local3,
    is_diverged,
    solve_field,
    write_field_csv,
)
from stochmech.physics import EnergySpec, PhysicalParams, bridge_residual

UNIT = PhysicalParams()


def table_at(defect, n=129, half_width=5.0, params=UNIT):
    grid = CollocationGrid(n, half_width)
    return solve_field(params, EnergySpec.for_params(params, defect), grid)


class TestGrid:
    def test_geometry(self):
        grid = CollocationGrid(129, 5.0)
        assert grid.nodes[0] == -5.0
        assert grid.nodes[-1] == 5.0
        assert grid.nodes[grid.center_index] == 0.0
        assert grid.spacing == pytest.approx(10.0 / 128, rel=1e-15)

    @pytest.mark.parametrize("n,L", [(5, 2.5), (33, 10.0), (129, 5.0), (257, 7.0 / 3.0)])
    def test_uniform_spacing(self, n, L):
        grid = CollocationGrid(n, L)
        gaps = np.diff(grid.nodes)
        assert np.max(np.abs(gaps - grid.spacing)) < 1e-12 * L
        assert grid.nodes[grid.center_index] == 0.0

    def test_nodes_mirror_exactly(self):
        grid = CollocationGrid(101, 7.0 / 3.0)
        assert np.array_equal(grid.nodes, -grid.nodes[::-1])

    @pytest.mark.parametrize("n", [4, 128, 3, 1])
    def test_rejects_bad_point_count(self, n):
        with pytest.raises(ConfigurationError):
            CollocationGrid(n, 5.0)


class TestSolveField:
    def test_first_steps_at_exact_energy(self):
        # dx = 0.1 grid; the marching bracket is identically 1 along v = -x
        table = table_at(0.0, n=101)
        grid = table.grid
        i = grid.center_index
        assert table.values[i] == 0.0
        assert table.values[i + 1] == pytest.approx(-0.1, abs=1e-15)
        assert table.values[i + 2] == pytest.approx(-0.2, abs=1e-15)

    def test_first_step_with_positive_defect(self):
        table = table_at(0.01, n=101)
        i = table.grid.center_index
        assert table.values[i + 1] == pytest.approx(-0.1 * 1.02, rel=1e-12)

    @pytest.mark.parametrize("n,L", [(5, 2.5), (65, 10.0), (129, 5.0), (257, 7.0 / 3.0)])
    def test_exact_on_linear_field(self, n, L):
        table = table_at(0.0, n=n, half_width=L)
        assert not table.has_divergence
        assert np.max(np.abs(table.values + table.grid.nodes)) <= 1e-10

    def test_antisymmetric_at_zero_defect(self):
        for L in (5.0, 7.0 / 3.0):
            table = table_at(0.0, half_width=L)
            assert np.max(np.abs(table.values + table.values[::-1])) <= 1e-10

    def test_negative_defect_flips_slope_sign(self):
        table = table_at(-0.02)
        slopes = np.diff(table.values) / table.grid.spacing
        assert not table.has_divergence
        assert np.any(slopes > 0)

    def test_positive_defect_diverges_at_fringes(self):
        table = table_at(0.03)
        assert table.has_divergence
        flags = table.diverged
        # diverged nodes are outermost on each side: walking outward from
        # the center, the flag never turns back off
        c = table.grid.center_index
        for side in (flags[c:], flags[c::-1]):
            idx = np.flatnonzero(side)
            assert idx.size > 0
            assert side[idx[0]:].all()
        assert not flags[c]

    def test_basin_shrinks_with_growing_defect(self):
        radii = [table_at(de).stability_radius() for de in (0.01, 0.02, 0.03, 0.05)]
        assert all(a >= b for a, b in zip(radii, radii[1:]))
        assert all(np.isfinite(radii))

    def test_divergence_values_keep_sign_then_blank(self):
        table = table_at(0.03)
        first = np.argmax(table.diverged[table.grid.center_index:]) + table.grid.center_index
        assert table.values[first] == -math.inf  # right side blows up negative
        assert np.isnan(table.values[first + 1:]).all()

    def test_residual_shrinks_with_grid_refinement(self):
        def residual_scale(n, defect):
            table = table_at(defect, n=n)
            grid = table.grid
            x, v = grid.nodes, table.values
            ok = ~table.diverged
            inner = ok[:-2] & ok[1:-1] & ok[2:] & (np.abs(x[1:-1]) <= 2.0)
            dv = (v[2:] - v[:-2]) / (2 * grid.spacing)
            res = bridge_residual(UNIT, v[1:-1][inner], dv[inner], x[1:-1][inner],
                                  0.5 + defect)
            return np.max(np.abs(res))

        for defect in (0.005, -0.01):
            assert residual_scale(513, defect) < residual_scale(129, defect)

    def test_center_pinned_to_zero(self):
        for de in (-0.02, 0.0, 0.03):
            table = table_at(de)
            assert table.values[table.grid.center_index] == 0.0

    def test_scan_matches_single_solve(self):
        grid = CollocationGrid(65, 5.0)
        [table] = field_scan(UNIT, [0.0], grid)
        single = solve_field(UNIT, EnergySpec.for_params(UNIT, 0.0), grid)
        assert np.array_equal(table.values, single.values)

    def test_scan_rejects_empty(self):
        with pytest.raises(ConfigurationError):
            field_scan(UNIT, [], CollocationGrid(65, 5.0))


class TestGlobalInterpolation:
    def test_reproduces_nodes(self):
        table = table_at(-0.01)
        for method in ("cubic", "barycentric"):
            evaluator = DriftField.global_interpolant(table, method)
            for j in (0, 17, 64, 100, 128):
                assert evaluator(table.grid.nodes[j]) == pytest.approx(
                    table.values[j], rel=1e-12, abs=1e-12
                )

    def test_exact_on_linear_data(self):
        table = table_at(0.0)
        xs = np.linspace(-5, 5, 777)
        evaluator = DriftField.global_interpolant(table)
        assert max(abs(evaluator(x) + x) for x in xs) < 1e-9

    @pytest.mark.parametrize("n,tol", [(9, 1e-12), (17, 1e-10), (33, 1e-6)])
    def test_barycentric_exact_on_linear_data_at_modest_size(self, n, tol):
        # a degree-(n-1) polynomial through equispaced nodes loses accuracy
        # as n grows (conditioning ~ 2^n), which is why the piecewise cubic
        # is the default scheme
        table = table_at(0.0, n=n)
        evaluator = DriftField.global_interpolant(table, "barycentric")
        xs = np.linspace(-5, 5, 111)
        assert max(abs(evaluator(x) + x) for x in xs) < tol

    def test_zero_at_center(self):
        table = table_at(0.0)
        assert abs(interpolate_global(table, 0.0)) < 1e-12

    def test_rejects_diverged_tables(self):
        with pytest.raises(UnsupportedModeError):
            interpolate_global(table_at(0.03), 0.1)

    def test_extrapolation_is_flagged(self):
        evaluator = DriftField.global_interpolant(table_at(0.0))
        inside, flag_in = evaluator.evaluate(4.0)
        outside, flag_out = evaluator.evaluate(6.5)
        assert not flag_in and flag_out
        assert math.isfinite(outside)

    def test_unknown_method_rejected(self):
        with pytest.raises(ConfigurationError):
            DriftField.global_interpolant(table_at(0.0), "quintic")


class TestLocal3Interpolation:
    def test_reproduces_nodes_exactly(self):
        table = table_at(-0.01)
        for j in (1, 30, 64, 90, 127):
            assert interpolate_local3(table, table.grid.nodes[j]) == table.values[j]

    def test_exact_on_linear_data(self):
        table = table_at(0.0)
        assert interpolate_local3(table, 0.05) == pytest.approx(-0.05, abs=1e-10)
        for x in np.linspace(-4.9, 4.9, 101):
            assert interpolate_local3(table, x) == pytest.approx(-x, abs=1e-10)

    def test_outside_range_is_diverged_sentinel(self):
        table = table_at(0.0)
        edge = table.grid.nodes[-2]
        assert is_diverged(interpolate_local3(table, edge + 1e-9))
        assert is_diverged(interpolate_local3(table, -edge - 1e-9))
        assert not is_diverged(interpolate_local3(table, edge))

    def test_diverged_node_in_triple_gives_sentinel(self):
        table = table_at(0.03)
        first = int(np.argmax(table.diverged[table.grid.center_index:])) \
            + table.grid.center_index
        x_last_ok = table.grid.nodes[first - 1]
        dx = table.grid.spacing
        # inside the bracket touching the diverged node
        assert is_diverged(interpolate_local3(table, x_last_ok + 0.5 * dx))
        # well inside the basin the quadratic is clean
        assert not is_diverged(interpolate_local3(table, 0.3))

    def test_third_node_choice_and_center_tiebreak(self):
        grid = CollocationGrid(9, 4.0)  # nodes at -4, -3, ..., 4
        rng = np.random.default_rng(3)
        values = rng.normal(size=9)
        table = solve_field(UNIT, EnergySpec.for_params(UNIT, 0.0), grid)
        table = type(table)(grid=grid, values=values, diverged=np.zeros(9, bool),
                            energy=table.energy)

        def quad_through(i1, i2, i3, x):
            xs, ys = grid.nodes[[i1, i2, i3]], values[[i1, i2, i3]]
            return float(np.polyval(np.polyfit(xs, ys, 2), x))

        # x in the outer part of bracket [x5, x6]: third node is x7 (nearer)
        x = grid.nodes[5] + 0.8
        assert interpolate_local3(table, x) == pytest.approx(quad_through(5, 6, 7, x), rel=1e-12)
        # x in the inner part: third node is x4
        x = grid.nodes[5] + 0.2
        assert interpolate_local3(table, x) == pytest.approx(quad_through(4, 5, 6, x), rel=1e-12)
        # exact midpoint of a right-half bracket: tie goes to the node
        # nearer the center, i.e. the inner neighbor
        x = grid.nodes[5] + 0.5
        assert interpolate_local3(table, x) == pytest.approx(quad_through(4, 5, 6, x), rel=1e-12)
        # mirror bracket on the left half: tie goes to the outer... center side
        x = grid.nodes[2] + 0.5
        assert interpolate_local3(table, x) == pytest.approx(quad_through(3, 2, 4, x), rel=1e-12)

    def test_agrees_with_global_on_clean_table(self):
        table = table_at(0.0)
        global_eval = DriftField.global_interpolant(table)
        local_eval = DriftField.local3(table)
        xs = np.linspace(table.grid.nodes[1], table.grid.nodes[-2], 301)
        assert max(abs(global_eval(x) - local_eval(x)) for x in xs) < 1e-9


class TestDriftField:
    def test_analytic_mode(self):
        p = PhysicalParams(force_constant=4.0)
        drift = DriftField.analytic(p)
        assert drift(0.5) == -1.0
        assert drift.half_width == 5.0

    def test_kernel_args_roundtrip(self):
        drift = DriftField.local3(table_at(0.0))
        mode, omega, xs, vs, div, coef, bw = drift.kernel_args
        assert mode == 1 and xs.shape == vs.shape == div.shape


class TestCsvExport:
    def test_field_csv_tokens(self, tmp_path):
        table = table_at(0.03)
        path = tmp_path / "field.csv"
        write_field_csv(path, table)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,v,diverged"
        assert len(lines) == 1 + table.grid.n_points
        cells = [line.split(",") for line in lines[1:]]
        # both signed-infinity tokens and blank cells appear among diverged rows
        diverged_vs = [c[1] for c in cells if c[2] == "1"]
        assert "-inf" in diverged_vs and "inf" in diverged_vs and "" in diverged_vs
        # finite rows round-trip
        for c in cells:
            if c[2] == "0":
                float(c[1])

    def test_field_csv_roundtrips_linear_field(self, tmp_path):
        table = table_at(0.0)
        path = tmp_path / "field.csv"
        write_field_csv(path, table)
        rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
        for x_cell, v_cell, flag in rows:
            assert flag == "0"
            assert float(v_cell) == pytest.approx(-float(x_cell), abs=1e-10)
