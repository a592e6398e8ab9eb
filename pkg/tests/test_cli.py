import csv
import json

import pytest

from columnbench.cli import main

SMALL = dict(nx=6, ny=5, nz=30, cloudy_fraction=0.5, seed=3, n_timesteps=2, repeats=1)


def _write_config(tmp_path, **values):
    tmp_path.mkdir(parents=True, exist_ok=True)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(values))
    return str(path)


def _rows(out):
    with open(out / "report.csv", newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _run(tmp_path, *argv, **config):
    out = tmp_path / "out"
    args = list(argv) + ["--out", str(out)]
    if config:
        args += ["--config", _write_config(tmp_path, **config)]
    return main(args), out


class TestRun:
    def test_warm_config(self, tmp_path):
        code, out = _run(tmp_path, "run", **SMALL)
        assert code == 0
        rows = _rows(out)
        assert len(rows) == 1
        assert rows[0]["mode"] == "warm" and rows[0]["columns"] == "30"
        doc = json.loads((out / "report.json").read_text())
        assert doc["config"]["nx"] == 6
        assert doc["rows"][0]["checksum"] == rows[0]["checksum"]

    def test_malformed_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{nx: 3")
        assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2

    def test_unknown_key(self, tmp_path):
        code, _ = _run(tmp_path, "run", **dict(SMALL, colour="blue"))
        assert code == 2

    def test_bad_value(self, tmp_path, capsys):
        code, _ = _run(tmp_path, "run", **dict(SMALL, cloudy_fraction=2.0))
        assert code == 2
        assert "cloudy_fraction" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2

    def test_usage_error(self):
        assert main(["frobnicate"]) == 2
        assert main([]) == 2

    def test_unknown_policy_flag(self, tmp_path):
        assert main(["run", "--policy", "round_robin", "--out", str(tmp_path)]) == 2

    def test_flags_override_config(self, tmp_path):
        code, out = _run(tmp_path, "run", "--seed", "9", "--workers", "3", "--policy", "guided",
                         **SMALL)
        assert code == 0
        row = _rows(out)[0]
        assert (row["seed"], row["n_workers"], row["policy"]) == ("9", "3", "guided")

    def test_global_flags_before_subcommand(self, tmp_path):
        cfg = _write_config(tmp_path, **SMALL)
        out = tmp_path / "o"
        assert main(["--config", cfg, "--out", str(out), "--seed", "5", "run"]) == 0
        assert _rows(out)[0]["seed"] == "5"

    def test_cold_costs_more(self, tmp_path):
        cfg = dict(SMALL, nx=16, ny=16, nz=60, repeats=3)
        _, warm = _run(tmp_path / "w", "run", **dict(cfg, mode="warm"))
        _, cold = _run(tmp_path / "c", "run", **dict(cfg, mode="cold"))
        assert (float(_rows(cold)[0]["avg_microphysics_per_step"])
                > float(_rows(warm)[0]["avg_microphysics_per_step"]))

    def test_runtime_failure_is_one(self, tmp_path, monkeypatch):
        from columnbench import driver

        def boom(config):
            raise RuntimeError("device on fire")

        monkeypatch.setattr(driver, "run_simulation", boom)
        code, _ = _run(tmp_path, "run", **SMALL)
        assert code == 1


class TestSweep:
    def test_order_and_count(self, tmp_path):
        code, out = _run(tmp_path, "sweep", "--columns", "40,10,20", **SMALL)
        assert code == 0
        assert [r["columns"] for r in _rows(out)] == ["40", "10", "20"]
        assert {r["seed"] for r in _rows(out)} == {"3"}

    def test_range_syntax(self, tmp_path):
        code, out = _run(tmp_path, "sweep", "--columns", "10:30:10", **SMALL)
        assert code == 0
        assert [r["columns"] for r in _rows(out)] == ["10", "20", "30"]

    def test_single_point(self, tmp_path):
        code, out = _run(tmp_path, "sweep", "--columns", "12", **SMALL)
        assert code == 0 and len(_rows(out)) == 1

    def test_empty_axis(self, tmp_path):
        code, _ = _run(tmp_path, "sweep", **SMALL)
        assert code == 2

    def test_linear_in_columns(self, tmp_path):
        cfg = dict(SMALL, nz=60, mode="cold", cloudy_fraction=1.0, n_timesteps=2, repeats=3)
        code, out = _run(tmp_path, "sweep", "--columns", "2000,4000", **cfg)
        assert code == 0
        small, large = (float(r["min_microphysics_per_step"]) for r in _rows(out))
        assert large / small == pytest.approx(2.0, rel=0.2)


class TestSchedCompare:
    def test_checksums_agree(self, tmp_path):
        cfg = dict(SMALL, nx=16, ny=16, mode="cold", layout="deck", n_workers=4)
        code, out = _run(tmp_path, "sched-compare", "--bitwise-check", **cfg)
        assert code == 0
        rows = _rows(out)
        assert [r["policy"] for r in rows] == ["static", "dynamic", "guided"]
        assert len({r["checksum"] for r in rows}) == 1
        assert len({r["state_digest"] for r in rows}) == 1
        doc = json.loads((out / "report.json").read_text())
        assert doc["checksums_equal"] and doc["bitwise_equal"]

    def test_single_policy(self, tmp_path):
        code, out = _run(tmp_path, "sched-compare", "--policies", "guided", **SMALL)
        assert code == 0 and len(_rows(out)) == 1

    def test_unknown_policy(self, tmp_path):
        code, _ = _run(tmp_path, "sched-compare", "--policies", "static,lottery", **SMALL)
        assert code == 2

    def test_equal_cost_walls_close(self, tmp_path):
        # clear sky plus fixed-cost stubs: every column costs the same
        cfg = dict(nx=32, ny=32, nz=30, cloudy_fraction=0.0, n_timesteps=2, repeats=3,
                   stub_cost=1e-4, n_workers=8)
        code, out = _run(tmp_path, "sched-compare", **cfg)
        assert code == 0
        walls = [float(r["min_total_per_step"]) for r in _rows(out)]
        assert max(walls) <= 1.1 * min(walls)


class TestPredict:
    def test_wave_jump_on_k20x(self, tmp_path):
        code, out = _run(tmp_path, "predict", "--calibration", "reference", "--device", "k20x",
                         "--regs", "64", "--gangs", "112", "--vector-length", "128",
                         "--columns", "14336,14337")
        assert code == 0
        rows = _rows(out)
        assert [r["waves"] for r in rows] == ["1", "2"]
        assert rows[0]["max_concurrent_threads"] == "14336"
        assert float(rows[1]["t_kernel"]) > float(rows[0]["t_kernel"])

    def test_reference_cold_share(self, tmp_path):
        code, out = _run(tmp_path, "predict", "--calibration", "reference", "--mode", "cold",
                         "--columns", "20000")
        assert code == 0
        assert float(_rows(out)[0]["kernel_share"]) == pytest.approx(0.93, abs=0.05)

    def test_oom_flag(self, tmp_path):
        code, out = _run(tmp_path, "predict", "--calibration", "reference", "--mode", "cold",
                         "--columns", "20000,25000")
        assert code == 0
        assert [r["out_of_memory"] for r in _rows(out)] == ["False", "True"]

    def test_missing_calibration(self, tmp_path):
        code, _ = _run(tmp_path, "predict", "--columns", "100")
        assert code == 2
        code, _ = _run(tmp_path, "predict", "--calibration", str(tmp_path / "none.csv"))
        assert code == 2

    def test_deterministic(self, tmp_path):
        argv = ["predict", "--calibration", "reference", "--columns", "5000"]
        main(argv + ["--out", str(tmp_path / "a")])
        main(argv + ["--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


class TestCalibrate:
    def test_reference(self, tmp_path):
        code, out = _run(tmp_path, "calibrate")
        assert code == 0
        rows = _rows(out)
        assert len(rows) == 6
        for r in rows:
            for k in ("err_t_in", "err_t_kernel", "err_t_out"):
                assert abs(float(r[k])) <= 0.15

    def test_user_table(self, tmp_path):
        table = tmp_path / "t.csv"
        table.write_text("columns,config,t_in_ms,t_kernel_ms,t_out_ms\n1000,warm,1,20,0.5\n")
        code, out = _run(tmp_path, "calibrate", "--calibration", str(table))
        assert code == 0
        assert abs(float(_rows(out)[0]["err_t_kernel"])) < 1e-9

    def test_bad_table(self, tmp_path):
        table = tmp_path / "t.csv"
        table.write_text("n,t\n1,2\n")
        code, _ = _run(tmp_path, "calibrate", "--calibration", str(table))
        assert code == 2


class TestAutotune:
    def _space(self, tmp_path, **space):
        path = tmp_path / "space.json"
        path.write_text(json.dumps(space))
        return str(path)

    def test_default_space(self, tmp_path):
        code, out = _run(tmp_path, "autotune", "--device", "p100", "--columns", "20000")
        assert code == 0
        rows = _rows(out)
        assert [r["rank"] for r in rows] == ["best", "worst"]
        assert float(rows[0]["spread"]) >= 1
        assert rows[0]["evaluated"] == "8960"

    def test_singleton(self, tmp_path):
        space = self._space(tmp_path, gangs=[64], vector_length=[128], regs_per_thread=[64])
        code, out = _run(tmp_path, "autotune", "--space", space, "--columns", "1000")
        assert code == 0
        assert float(_rows(out)[0]["spread"]) == 1.0

    def test_empty_space(self, tmp_path):
        space = self._space(tmp_path, gangs=[], vector_length=[128], regs_per_thread=[64])
        code, _ = _run(tmp_path, "autotune", "--space", space)
        assert code == 2

    def test_rerun_identical(self, tmp_path):
        argv = ["autotune", "--calibration", "reference", "--mode", "cold", "--columns", "20000"]
        assert main(argv + ["--out", str(tmp_path / "a")]) == 0
        assert main(argv + ["--out", str(tmp_path / "b")]) == 0
        for name in ("report.csv", "report.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
