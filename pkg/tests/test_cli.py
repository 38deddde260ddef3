import json
import os

import pytest

from stochmech.cli import main

pytestmark = pytest.mark.usefixtures("in_tmp_dir")


@pytest.fixture
def in_tmp_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [line.split(",") for line in lines[1:]]


def manifest(out_dir):
    with open(out_dir / "manifest.json") as fh:
        return json.load(fh)


class TestSolveField:
    def test_exact_field_csv(self, tmp_path):
        assert main(["solve-field", "--seed", "1", "--out", "sf"]) == 0
        header, rows = read_csv(tmp_path / "sf" / "field_dE+0.csv")
        assert header == ["x", "v", "diverged"]
        for x_cell, v_cell, flag in rows:
            assert flag == "0"
            assert abs(float(v_cell) + float(x_cell)) <= 1e-10

    def test_positive_defect_marks_divergence(self, tmp_path):
        assert main(["solve-field", "--seed", "1", "--delta-e", "0.03",
                     "--out", "sf"]) == 0
        _, rows = read_csv(tmp_path / "sf" / "field_dE+0.03.csv")
        assert any(flag == "1" for _, _, flag in rows)

    def test_field_scan_schema(self, tmp_path):
        assert main(["field-scan", "--preset", "desk-fig4", "--seed", "1",
                     "--out", "fs"]) == 0
        header, rows = read_csv(tmp_path / "fs" / "fig4.csv")
        assert header == ["delta_e", "x", "v", "diverged"]
        defects = sorted({row[0] for row in rows}, key=float)
        assert len(defects) == 7
        assert any(flag == "1" for *_, flag in rows)


class TestSimulate:
    def test_density_and_noise_outputs(self, tmp_path):
        assert main(["simulate", "--seed", "7", "--n-steps", "100000",
                     "--out", "sim"]) == 0
        header, rows = read_csv(tmp_path / "sim" / "density.csv")
        assert header == ["x_center", "count", "density", "oracle_density"]
        assert len(rows) == 128
        assert sum(int(r[1]) for r in rows) <= 100000
        header, noise_rows = read_csv(tmp_path / "sim" / "noise.csv")
        assert header == ["iteration", "sigma_n"]
        assert noise_rows[-1][0] == "100000"
        assert float(noise_rows[-1][1]) < float(noise_rows[0][1])

    def test_single_step_occupies_one_bin(self, tmp_path):
        assert main(["simulate", "--seed", "3", "--n-steps", "1",
                     "--out", "one"]) == 0
        _, rows = read_csv(tmp_path / "one" / "density.csv")
        occupied = [r for r in rows if r[1] != "0"]
        assert len(occupied) == 1 and occupied[0][1] == "1"

    def test_same_seed_gives_byte_identical_outputs(self, tmp_path):
        args = ["simulate", "--seed", "11", "--n-steps", "50000"]
        assert main(args + ["--out", "a", "--no-figures"]) == 0
        assert main(args + ["--out", "b", "--no-figures"]) == 0
        for name in ("density.csv", "noise.csv"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()


class TestStudies:
    def test_converge_outputs(self, tmp_path):
        assert main(["converge", "--seed", "5", "--n-bins-list", "16,32",
                     "--n-steps", "20000", "--replicates", "2",
                     "--n-field", "33", "--out", "cv"]) == 0
        header, rows = read_csv(tmp_path / "cv" / "fig1b.csv")
        assert header == ["n_bins", "sigma_mean", "sigma_std"]
        assert [r[0] for r in rows] == ["16", "32"]
        assert (tmp_path / "cv" / "density_n16.csv").exists()
        assert (tmp_path / "cv" / "density_n32.csv").exists()
        header, _ = read_csv(tmp_path / "cv" / "replicates.csv")
        assert header == ["n_bins", "stream_index", "value"]

    def test_threads_do_not_change_results(self, tmp_path):
        base = ["converge", "--seed", "5", "--n-bins-list", "16,32",
                "--n-steps", "20000", "--replicates", "3", "--n-field", "33",
                "--no-figures"]
        assert main(base + ["--out", "t1", "--threads", "1"]) == 0
        assert main(base + ["--out", "t4", "--threads", "4"]) == 0
        assert (tmp_path / "t1" / "fig1b.csv").read_bytes() == \
            (tmp_path / "t4" / "fig1b.csv").read_bytes()

    def test_dt_sweep_outputs(self, tmp_path):
        assert main(["dt-sweep", "--seed", "5", "--dt-list", "0.05,0.01",
                     "--n-steps", "10000", "--replicates", "2",
                     "--n-field", "33", "--n-bins", "32", "--out", "dts"]) == 0
        header, rows = read_csv(tmp_path / "dts" / "fig2b.csv")
        assert header == ["dt", "iteration", "sigma_mean", "sigma_std"]
        header, rows3 = read_csv(tmp_path / "dts" / "fig3.csv")
        assert header == ["dt", "sigma_mean", "sigma_std", "fit_a", "fit_b"]
        assert len(rows3) == 2

    def test_lifetime_defect_sweep_has_cap_row_at_zero(self, tmp_path):
        assert main(["lifetime", "--preset", "desk-fig5b", "--seed", "3",
                     "--replicates", "2", "--tau-max", "2000",
                     "--de-list=-0.02,0,0.005", "--out", "lt"]) == 0
        header, rows = read_csv(tmp_path / "lt" / "fig5b.csv")
        assert header == ["delta_e", "tau_mean", "tau_std"]
        by_key = {float(r[0]): (float(r[1]), float(r[2])) for r in rows}
        assert by_key[0.0] == (2000.0, 0.0)
        assert by_key[-0.02][0] < 2000.0

    def test_lifetime_dt_sweep(self, tmp_path):
        assert main(["lifetime", "--sweep", "dt", "--seed", "3",
                     "--delta-e", "-0.02", "--dt-list", "0.001,0.01",
                     "--replicates", "2", "--tau-max", "50", "--out", "lta"]) == 0
        header, rows = read_csv(tmp_path / "lta" / "fig5a.csv")
        assert header == ["dt", "tau_mean", "tau_std"]
        assert len(rows) == 2


class TestManifest:
    def test_lists_every_output(self, tmp_path):
        assert main(["simulate", "--seed", "2", "--n-steps", "5000",
                     "--out", "m"]) == 0
        data = manifest(tmp_path / "m")
        on_disk = set(os.listdir(tmp_path / "m")) - {"manifest.json"}
        assert set(data["outputs"]) == on_disk
        assert data["tool"] == "stochmech"
        assert data["settings"]["seed"] == 2

    def test_preset_resolution_recorded(self, tmp_path):
        assert main(["converge", "--preset", "paper-fig1", "--seed", "9",
                     "--n-steps", "1000", "--n-field", "33", "--no-figures",
                     "--out", "pf"]) == 0
        data = manifest(tmp_path / "pf")
        assert data["preset"] == "paper-fig1"
        assert data["settings"]["n_bins_list"] == [32, 64, 128, 256]
        assert data["settings"]["dt"] == 0.005
        assert data["settings"]["replicates"] == 12
        # the explicit flag wins over the preset and is recorded
        assert data["settings"]["n_steps"] == 1000
        assert data["overrides"]["n_steps"] == 1000
        assert data["stream_indices"]["32"] == list(range(12))

    def test_config_file_plus_flag_precedence(self, tmp_path):
        (tmp_path / "run.toml").write_text(
            "seed = 4\n\n[run]\ndt = 0.01\nn_steps = 2000\n"
        )
        assert main(["simulate", "--config", "run.toml", "--dt", "0.02",
                     "--no-figures", "--out", "cfg"]) == 0
        data = manifest(tmp_path / "cfg")
        assert data["settings"]["dt"] == 0.02
        assert data["settings"]["n_steps"] == 2000
        assert data["settings"]["seed"] == 4


class TestExitCodes:
    def test_missing_seed(self, capsys):
        assert main(["simulate"]) == 1
        assert "seed" in capsys.readouterr().err

    def test_missing_config_file(self):
        assert main(["simulate", "--config", "nope.toml", "--seed", "1"]) == 1

    def test_unknown_preset(self):
        assert main(["simulate", "--preset", "desk-fig9", "--seed", "1"]) == 1

    def test_unknown_config_key(self, tmp_path):
        (tmp_path / "bad.toml").write_text("seed = 1\nwarp_factor = 9\n")
        assert main(["simulate", "--config", "bad.toml"]) == 1

    def test_bad_usage_maps_to_config_error(self):
        assert main(["simulate", "--dt", "noodle", "--seed", "1"]) == 1
        assert main(["warp"]) == 1

    def test_degenerate_histogram_exits_two(self, tmp_path):
        # a domain so narrow that every post-step position lands outside it
        (tmp_path / "deg.toml").write_text(
            "seed = 1\n\n[physical]\nhalf_width = 1e-6\n\n"
            "[run]\ndt = 0.5\nn_steps = 50\ninterpolation_mode = \"analytic\"\n"
        )
        assert main(["simulate", "--config", "deg.toml", "--out", "dg"]) == 2

    def test_write_failure_exits_three(self, tmp_path):
        (tmp_path / "blocker").write_text("a file, not a directory")
        assert main(["simulate", "--seed", "1", "--n-steps", "1000",
                     "--out", "blocker/sub"]) == 3

    def test_help_exits_zero(self):
        assert main(["--help"]) == 0
