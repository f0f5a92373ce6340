import csv
import json

import pytest
import tomli

from ckdv.cli import main, sweep
from ckdv.config import (DEFAULTS, dump_toml, get_key, load_config, parse_scalar, set_key,
                         write_config)
from ckdv.errors import ConfigError

SMALL = """
[grid]
N = 128
L = 40.0
[time]
T = 0.05
dt = 0.001
stride = 10
[output]
plots = false
"""

FAULTY = """
[grid]
N = 256
L = 50.0
[time]
T = 0.3
dt = 0.01
stride = 10
[data]
kind = "gaussian"
weights = [100.0, 100.0]
[output]
plots = false
"""


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg["grid"] == {"N": 1024, "L": 100.0}
        assert cfg["system"]["a3"] == 0.4

    def test_file_overrides_defaults(self, tmp_path):
        cfg = load_config(write(tmp_path, SMALL))
        assert cfg["grid"]["N"] == 128 and cfg["time"]["T"] == 0.05
        assert cfg["data"]["kind"] == DEFAULTS["data"]["kind"]

    def test_file_needs_grid_size(self, tmp_path):
        with pytest.raises(ConfigError, match="grid.N: required key is missing"):
            load_config(write(tmp_path, "[grid]\nL = 10.0\n"))

    @pytest.mark.parametrize("text, key", [
        ("[grid]\nN = 100\n", "grid.N"),
        ("[grid]\nN = 64\nL = -1.0\n", "grid.L"),
        ("[grid]\nN = 64\n[time]\nT = 0.1\ndt = 0.2\n", "time.dt"),
        ("[grid]\nN = 64\n[time]\nstride = 0\n", "time.stride"),
        ("[grid]\nN = 64\n[data]\nkind = \"wave\"\n", "data.kind"),
        ("[grid]\nN = 64\n[data]\nweights = [1.0]\n", "data.weights"),
        ("[grid]\nN = 64\n[data]\nkind = \"file\"\n", "data.path"),
        ("[grid]\nN = 64\n[grid.extra]\n", "grid.extra"),
        ("[grid]\nN = 64\nM = 3\n", "grid.M"),
        ("[grid]\nN = 64\n[solver]\n", "solver"),
        ("[grid]\nN = \"big\"\n", "grid.N"),
        ("[grid]\nN = 64\n[output]\nplots = 1\n", "output.plots"),
        ("[grid]\nN = 64\n[experiment]\nname = \"fly\"\n", "experiment.name"),
    ])
    def test_errors_name_the_key(self, tmp_path, text, key):
        with pytest.raises(ConfigError) as info:
            load_config(write(tmp_path, text))
        assert str(info.value).startswith(key)

    def test_bad_toml(self, tmp_path):
        with pytest.raises(ConfigError, match="not valid TOML"):
            load_config(write(tmp_path, "[grid\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.toml")

    def test_dump_round_trips(self, tmp_path):
        cfg = load_config(write(tmp_path, SMALL))
        cfg["experiment"]["params"] = {"T_list": [0.1, 0.2], "s": 1.0, "label": 'a"b'}
        again = tomli.loads(dump_toml(cfg))
        assert again == cfg
        path = write_config(cfg, tmp_path / "out.toml")
        assert load_config(path) == cfg

    def test_keys(self):
        cfg = load_config()
        assert get_key(cfg, "data.eps") == 0.1
        new = set_key(cfg, "experiment.params.s", 2.0)
        assert new["experiment"]["params"]["s"] == 2.0 and cfg["experiment"]["params"] == {}
        with pytest.raises(ConfigError):
            get_key(cfg, "data.nothing")
        with pytest.raises(ConfigError):
            set_key(cfg, "grid", 3)

    @pytest.mark.parametrize("text, value", [("3", 3), ("0.5", 0.5), ("1e-3", 1e-3),
                                             ("soliton", "soliton")])
    def test_parse_scalar(self, text, value):
        assert parse_scalar(text) == value


class TestRun:
    def test_simulate_writes_artifacts(self, tmp_path):
        out = tmp_path / "sim"
        code = main(["simulate", "--config", str(write(tmp_path, SMALL)), "--out", str(out),
                     "--quiet", "--assert"])
        assert code == 0
        for name in ("manifest.json", "config.toml", "series.csv", "summary.json"):
            assert (out / name).exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["experiment"] == "simulate" and manifest["exit_status"] == 0
        summary = json.loads((out / "summary.json").read_text())
        assert all(summary["checks"].values())

    def test_resolved_config_reruns_identically(self, tmp_path):
        main(["simulate", "--config", str(write(tmp_path, SMALL)), "--out",
              str(tmp_path / "a"), "--quiet"])
        main(["simulate", "--config", str(tmp_path / "a" / "config.toml"), "--out",
              str(tmp_path / "b"), "--quiet"])
        assert (tmp_path / "a" / "series.csv").read_bytes() == \
            (tmp_path / "b" / "series.csv").read_bytes()

    def test_plots_and_dumps(self, tmp_path):
        text = SMALL.replace("plots = false", "plots = true\ndumps = true")
        out = tmp_path / "p"
        assert main(["simulate", "--config", str(write(tmp_path, text)), "--out", str(out),
                     "--quiet"]) == 0
        assert (out / "fields.svg").exists() and (out / "final.bin").exists()

    def test_config_error_exit(self, tmp_path, capsys):
        code = main(["simulate", "--config", str(write(tmp_path, "[grid]\nL = 1.0\n")),
                     "--out", str(tmp_path / "x")])
        assert code == 1
        assert "grid.N" in capsys.readouterr().err

    def test_invalid_coefficients_exit(self, tmp_path):
        text = SMALL + "[system]\na3 = 1.0\nb2 = 1.0\n"
        assert main(["simulate", "--config", str(write(tmp_path, text)), "--out",
                     str(tmp_path / "x"), "--quiet"]) == 1

    def test_numerical_fault_exit(self, tmp_path):
        out = tmp_path / "f"
        assert main(["simulate", "--config", str(write(tmp_path, FAULTY)), "--out", str(out),
                     "--quiet"]) == 2
        summary = json.loads((out / "summary.json").read_text())
        assert summary["status"] == "fault" and "fault_time" in summary

    def test_failed_check_exit(self, tmp_path):
        # a coarse step keeps E4 drift well above its tolerance
        text = SMALL.replace("dt = 0.001", "dt = 0.05").replace("stride = 10", "stride = 1")
        text = text.replace("T = 0.05", "T = 0.5")
        assert main(["simulate", "--config", str(write(tmp_path, text)), "--out",
                     str(tmp_path / "c"), "--quiet", "--assert"]) == 3

    def test_diagnose(self, tmp_path):
        out = tmp_path / "d"
        assert main(["diagnose", "--config", str(write(tmp_path, SMALL)), "--out", str(out),
                     "--quiet"]) == 0
        assert (out / "spectrum.csv").read_text().startswith("xi,abs_u,abs_v")

    def test_operator_check(self, tmp_path):
        out = tmp_path / "o"
        assert main(["operator-check", "--config", str(write(tmp_path, SMALL)), "--out",
                     str(out), "--quiet", "--assert"]) == 0

    def test_zero_data_gives_zero_series(self, tmp_path):
        text = SMALL.replace("[output]", "[data]\nkind = \"zero\"\n[output]")
        out = tmp_path / "z"
        assert main(["simulate", "--config", str(write(tmp_path, text)), "--out", str(out),
                     "--quiet"]) == 0
        with open(out / "series.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        for row in rows:
            assert all(float(v) == 0.0 for k, v in row.items() if k != "t"), row

    def test_operator_check_lists_identities(self, tmp_path):
        out = tmp_path / "oc"
        main(["operator-check", "--config", str(write(tmp_path, SMALL)), "--out", str(out),
              "--quiet"])
        identities = json.loads((out / "summary.json").read_text())["identities"]
        names = {r["identity"] for r in identities}
        assert {"LP", "LJ", "P3dx3", "dilation_vs_t_pde"} <= names
        assert all({"residual", "pass"} <= set(r) for r in identities)

    def test_bilinear_probe_params(self, tmp_path):
        text = SMALL + "[experiment.params]\ntrials = 3\ngrid_sizes = [32, 64]\n"
        out = tmp_path / "b"
        assert main(["bilinear-probe", "--config", str(write(tmp_path, text)), "--out",
                     str(out), "--quiet", "--seed", "5"]) == 0
        assert json.loads((out / "summary.json").read_text())["seed"] == 5

    def test_bilinear_probe_bad_params(self, tmp_path):
        text = SMALL + "[experiment.params]\nb = 0.7\n"
        assert main(["bilinear-probe", "--config", str(write(tmp_path, text)), "--out",
                     str(tmp_path / "b"), "--quiet"]) == 1

    def test_picard(self, tmp_path):
        text = SMALL.replace("[output]", "[data]\nkind = \"gaussian\"\nweights = [0.1, 0.1]\n"
                             "[output]") + "[experiment.params]\nT_list = [0.025, 0.05]\n" \
                                           "compare_T = 0.05\niterations = 20\n"
        out = tmp_path / "pc"
        assert main(["picard", "--config", str(write(tmp_path, text)), "--out", str(out),
                     "--quiet"]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["checks"]["ratios_below_one"]


class TestSweep:
    def test_fault_is_isolated(self, tmp_path):
        out = tmp_path / "sw"
        code = main(["sweep", "--config", str(write(tmp_path, FAULTY)), "--axis", "time.dt",
                     "--values", "0.01,0.001", "--out", str(out), "--quiet", "--workers", "2"])
        assert code == 2
        rows = json.loads((out / "summary.json").read_text())["cells"]
        assert [r["status"] for r in rows] == ["fault", "ok"]
        assert (out / "cell_01" / "series.csv").stat().st_size > 0
        assert (out / "sweep.csv").read_text().startswith("value,exit_status,status")

    def test_serial_matches_parallel(self, tmp_path):
        from ckdv.config import load_config as lc
        cfg = lc(write(tmp_path, SMALL))
        sweep(cfg, "data.x0", [0.0, 1.0], tmp_path / "s1", workers=1)
        sweep(cfg, "data.x0", [0.0, 1.0], tmp_path / "s2", workers=2)
        for cell in ("cell_00", "cell_01"):
            assert (tmp_path / "s1" / cell / "series.csv").read_bytes() == \
                (tmp_path / "s2" / cell / "series.csv").read_bytes()

    def test_single_value_sweep_equals_run(self, tmp_path):
        cfg = load_config(write(tmp_path, SMALL))
        sweep(cfg, "data.x0", [0.0], tmp_path / "sw", workers=1)
        main(["simulate", "--config", str(write(tmp_path, SMALL)), "--out",
              str(tmp_path / "run"), "--quiet"])
        assert (tmp_path / "sw" / "cell_00" / "series.csv").read_bytes() == \
            (tmp_path / "run" / "series.csv").read_bytes()

    def test_eps_sweep_has_one_row_per_value(self, tmp_path):
        cfg = load_config(write(tmp_path, SMALL))
        code, rows = sweep(cfg, "data.eps", [0.4, 0.3, 0.2, 0.1], tmp_path / "e", workers=2)
        assert code == 0 and [r["value"] for r in rows] == [0.4, 0.3, 0.2, 0.1]
        with open(tmp_path / "e" / "sweep.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 4

    def test_axis_must_be_scalar(self, tmp_path):
        code = main(["sweep", "--config", str(write(tmp_path, SMALL)), "--axis", "data.weights",
                     "--values", "1,2", "--out", str(tmp_path / "s"), "--quiet"])
        assert code == 1

    def test_bad_value_is_a_config_error(self, tmp_path):
        code = main(["sweep", "--config", str(write(tmp_path, SMALL)), "--axis", "grid.N",
                     "--values", "100", "--out", str(tmp_path / "s"), "--quiet"])
        assert code == 1
