import json

import numpy as np
import pytest

from rhd.cli import main
from rhd.synthdata import load_dataset, save_dataset, Dataset


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestGen:
    def test_writes_header_and_summary(self, tmp_path, capsys):
        path = tmp_path / "data.rhd"
        code, out, _ = run(
            capsys, "gen", "--family", "gaussian", "--d", "10", "--n", "100",
            "--noise", "random:0.1", "--teacher", "e1", "--seed", "7", "-o", str(path),
        )
        assert code == 0
        assert path.read_text().splitlines()[0].startswith("rhd v1 n=100 d=10 ")
        assert "n=100 d=10" in out

    def test_hard_margin_rows(self, tmp_path, capsys):
        path = tmp_path / "hm.rhd"
        code, _, _ = run(
            capsys, "gen", "--family", "hard-margin", "--d", "3", "--n", "200",
            "--teacher", "e1", "--gamma0", "0.2", "-o", str(path),
        )
        assert code == 0
        ds = load_dataset(path)
        assert np.all(np.abs(ds.features[:, 0]) >= 0.2)

    def test_missing_d_is_usage_error(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "gen", "--family", "gaussian", "--n", "10",
            "-o", str(tmp_path / "x.rhd"),
        )
        assert code == 2
        assert "--d" in err

    def test_unwritable_output_is_io_error(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "gen", "--family", "gaussian", "--d", "2", "--n", "10",
            "-o", str(tmp_path / "missing" / "x.rhd"),
        )
        assert code == 1


@pytest.fixture()
def small_dataset(tmp_path):
    path = tmp_path / "train.rhd"
    code = main([
        "gen", "--family", "gaussian", "--d", "4", "--n", "400", "--teacher", "e1",
        "--noise", "random:0.1", "--normalize-lp", "2", "--seed", "3", "-o", str(path),
    ])
    assert code == 0
    return path


class TestTrain:
    def test_gd_trace_contract(self, small_dataset, tmp_path, capsys):
        trace_path = tmp_path / "trace.json"
        code, out, _ = run(
            capsys, "train", "--algo", "gd", "--loss", "xent", "--p", "2", "--r", "0.05",
            "--eta", "0.05", "--k", "200", "--data", str(small_dataset),
            "-o", str(trace_path),
        )
        assert code == 0
        doc = json.loads(trace_path.read_text())
        assert doc["algorithm"] == "gd"
        assert doc["best_index"] is not None
        assert doc["snapshots"][0]["iteration"] == 0
        assert doc["snapshots"][-1]["iteration"] == 200
        assert all(s["metrics"] is not None for s in doc["snapshots"])
        assert "best_robust_error" in out

    def test_sgd_hinge_rejected_before_compute(self, small_dataset, tmp_path, capsys):
        code, _, err = run(
            capsys, "train", "--algo", "sgd", "--loss", "hinge", "--p", "2", "--r", "0.05",
            "--eta", "0.05", "--k", "100", "--data", str(small_dataset),
            "-o", str(tmp_path / "t.json"),
        )
        assert code == 2
        assert "smooth" in err

    def test_psat_sigma_auto_echoed(self, tmp_path, capsys):
        trace_path = tmp_path / "psat.json"
        code, _, _ = run(
            capsys, "train", "--algo", "psat", "--loss", "sigmoidal", "--sigma", "auto",
            "--p", "inf", "--r", "0.02", "--eta", "0.001", "--k", "300",
            "--family", "gaussian", "--d", "4", "--teacher", "e1",
            "--w-init", "e1", "--val-n", "1000", "--seed", "1",
            "-o", str(trace_path),
        )
        assert code == 0
        doc = json.loads(trace_path.read_text())
        assert doc["config"]["loss"] == {"kind": "sigmoidal", "sigma": 0.02}

    def test_gd_on_generator_needs_n(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "train", "--algo", "gd", "--loss", "xent", "--p", "2", "--r", "0.05",
            "--eta", "0.05", "--k", "50", "--family", "gaussian", "--d", "3",
            "-o", str(tmp_path / "t.json"),
        )
        assert code == 2 and "--n" in err

    def test_gd_on_generator(self, tmp_path, capsys):
        trace_path = tmp_path / "gen_gd.json"
        code, _, _ = run(
            capsys, "train", "--algo", "gd", "--loss", "xent", "--p", "2", "--r", "0.05",
            "--eta", "0.05", "--k", "100", "--family", "gaussian", "--d", "3",
            "--teacher", "e1", "--n", "300", "--val-n", "1000", "--seed", "4",
            "-o", str(trace_path),
        )
        assert code == 0
        assert json.loads(trace_path.read_text())["mode"] == "full_batch"

    def test_sgd_fresh_stream(self, tmp_path, capsys):
        trace_path = tmp_path / "sgd.json"
        code, _, _ = run(
            capsys, "train", "--algo", "sgd", "--loss", "xent", "--p", "2", "--r", "0.05",
            "--eta", "0.01", "--k", "2000", "--family", "gaussian", "--d", "4",
            "--teacher", "e1", "--normalize-lp", "2", "--val-n", "1000", "--seed", "2",
            "-o", str(trace_path),
        )
        assert code == 0
        assert json.loads(trace_path.read_text())["mode"] == "fresh"


class TestEval:
    def test_zero_radius_matches_clean(self, small_dataset, capsys):
        code, out, _ = run(
            capsys, "eval", "--data", str(small_dataset), "--weights", "1,0,0,0",
            "--p", "2", "--r", "0",
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["clean_error"] == doc["robust_error"]

    def test_trace_weights(self, small_dataset, tmp_path, capsys):
        trace_path = tmp_path / "trace.json"
        main([
            "train", "--algo", "gd", "--loss", "xent", "--p", "2", "--r", "0.05",
            "--eta", "0.05", "--k", "50", "--data", str(small_dataset),
            "-o", str(trace_path),
        ])
        capsys.readouterr()  # drop the train summary line
        code, out, _ = run(
            capsys, "eval", "--data", str(small_dataset), "--trace", str(trace_path),
            "--snapshot", "best", "--p", "2", "--r", "0.05",
        )
        assert code == 0
        doc = json.loads(out)
        assert 0.0 <= doc["robust_error"] <= 1.0

    def test_dimension_mismatch(self, small_dataset, capsys):
        code, _, err = run(
            capsys, "eval", "--data", str(small_dataset), "--weights", "1,0",
            "--p", "2", "--r", "0.1",
        )
        assert code == 2
        assert "mismatch" in err or "entries" in err


class TestOracleCmd:
    def test_three_point_fixture(self, tmp_path, capsys):
        X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
        ds = Dataset(features=X, labels=np.array([1, 1, -1]))
        path = tmp_path / "three.rhd"
        save_dataset(ds, path)
        code, out, _ = run(
            capsys, "oracle", "--data", str(path), "--p", "2", "--r", "0",
            "--method", "grid2d",
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["opt_estimate"] == pytest.approx(1.0 / 3.0)


def sweep_config(tmp_path, seeds, noises, steps=300, n=800):
    cfg = {
        "generator": {
            "family": "hard_margin", "d": 3, "teacher": [1.0, 0.0, 0.0],
            "gamma0": 0.2, "noise": {"kind": "random_flip", "rate": 0.0},
        },
        "train": {
            "algorithm": "gd", "loss": {"kind": "cross_entropy"}, "p": 2,
            "eta": 0.05, "steps": steps, "eval_every": 50,
        },
        "r_values": [0.1],
        "noise_rates": noises,
        "seeds": seeds,
        "train_n": n,
        "val_n": 1000,
        "eval_n": 4000,
        "oracle": {"method": "random_search", "resolution": 2000},
    }
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(cfg))
    return path


class TestSweep:
    def test_single_cell(self, tmp_path, capsys):
        cfg = sweep_config(tmp_path, seeds=[1], noises=[0.02])
        out_csv = tmp_path / "out.csv"
        code, _, _ = run(capsys, "sweep", "--config", str(cfg), "-o", str(out_csv))
        assert code == 0
        lines = out_csv.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0] == ("r,noise_rate,seed,algorithm,opt_estimate,"
                            "teacher_robust_error,learned_robust_error,"
                            "learned_clean_error,sin_theta,iterations_to_best,"
                            "wall_ms,error")

    def test_three_seeds_deterministic(self, tmp_path, capsys):
        cfg = sweep_config(tmp_path, seeds=[1, 2, 3], noises=[0.02])
        a_csv, b_csv = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(capsys, "sweep", "--config", str(cfg), "-o", str(a_csv))[0] == 0
        assert run(capsys, "sweep", "--config", str(cfg), "-o", str(b_csv), "--jobs", "2")[0] == 0
        a_lines = a_csv.read_text().splitlines()
        assert len(a_lines) == 4
        # identical up to the wall-clock column
        strip = lambda line: line.rsplit(",", 2)[0]
        assert [strip(l) for l in a_lines] == [strip(l) for l in b_csv.read_text().splitlines()]
        seeds = [line.split(",")[2] for line in a_lines[1:]]
        assert seeds == ["1", "2", "3"]

    def test_noise_proportionality(self, tmp_path, capsys):
        # errors should scale roughly linearly with the injected noise rate
        cfg = sweep_config(tmp_path, seeds=[5], noises=[0.01, 0.02, 0.04],
                           steps=600, n=3000)
        out_csv = tmp_path / "prop.csv"
        assert run(capsys, "sweep", "--config", str(cfg), "-o", str(out_csv))[0] == 0
        rows = out_csv.read_text().splitlines()[1:]
        ratios = []
        for line in rows:
            cols = line.split(",")
            ratios.append(float(cols[6]) / float(cols[1]))
        assert max(ratios) / min(ratios) < 3.0

    def test_failing_cell_sets_exit_three(self, tmp_path, capsys):
        cfg_path = sweep_config(tmp_path, seeds=[1], noises=[0.02])
        cfg = json.loads(cfg_path.read_text())
        cfg["generator"]["gamma0"] = 80.0  # infeasible margin: generation times out
        cfg_path.write_text(json.dumps(cfg))
        out_csv = tmp_path / "fail.csv"
        code, out, _ = run(capsys, "sweep", "--config", str(cfg_path), "-o", str(out_csv))
        assert code == 3
        lines = out_csv.read_text().splitlines()
        assert len(lines) == 2
        assert "GenerationTimeoutError" in lines[1]

    def test_small_eval_n_rejected(self, tmp_path, capsys):
        cfg_path = sweep_config(tmp_path, seeds=[1], noises=[0.02])
        cfg = json.loads(cfg_path.read_text())
        cfg["eval_n"] = 500
        cfg_path.write_text(json.dumps(cfg))
        code, _, err = run(capsys, "sweep", "--config", str(cfg_path),
                           "-o", str(tmp_path / "x.csv"))
        assert code == 2
        assert "eval_n" in err

    def test_empty_seed_list_rejected(self, tmp_path, capsys):
        cfg_path = sweep_config(tmp_path, seeds=[1], noises=[0.02])
        cfg = json.loads(cfg_path.read_text())
        cfg["seeds"] = []
        cfg_path.write_text(json.dumps(cfg))
        code, _, err = run(capsys, "sweep", "--config", str(cfg_path),
                           "-o", str(tmp_path / "x.csv"))
        assert code == 2
        assert "seeds" in err


class TestExitCodes:
    def test_unknown_command(self, capsys):
        assert run(capsys, "frobnicate")[0] == 2

    def test_missing_data_file(self, capsys):
        code, _, _ = run(capsys, "eval", "--data", "/nonexistent.rhd",
                         "--weights", "1,0", "--p", "2", "--r", "0.1")
        assert code == 1
