"""Tests for the config document and the command line front end."""

import csv
import dataclasses
import json

import numpy as np
import pytest

from admlab import analysis, cli, config, plant, sim


class TestConfigDocument:
    def test_defaults_round_trip(self):
        rc = config.build_run_config(None)
        text = config.dump_config(rc)
        rc2 = config.parse_config(text)
        assert config.dump_config(rc2) == text
        assert rc2.cp == rc.cp
        assert rc2.sweep == rc.sweep
        assert rc2.compare_variants == rc.compare_variants

    def test_unknown_section(self):
        with pytest.raises(config.ConfigError):
            config.build_run_config({"plants": {}})

    def test_unknown_key(self):
        with pytest.raises(config.ConfigError):
            config.build_run_config({"plant": {"stiffness": 1e5}})

    def test_invariant_violation_names_parameter(self):
        with pytest.raises(config.ConfigError, match="Ba > 0"):
            config.build_run_config({"controller": {"Ba": -5}})

    def test_numeric_string_accepted(self):
        rc = config.build_run_config({"plant": {"Ks": "2e7"}})
        assert rc.pp.Ks == 2e7

    def test_non_numeric_rejected(self):
        with pytest.raises(config.ConfigError):
            config.build_run_config({"plant": {"Ks": "stiff"}})

    def test_partial_document_keeps_defaults(self):
        rc = config.build_run_config({"scenario": {"seed": 9}})
        assert rc.seed == 9
        assert rc.duration == 4.0
        assert rc.cp == plant.ControllerParams()

    def test_var_damping_block(self):
        rc = config.build_run_config(
            {"controller": {"var_damping": {"B_hi": 800, "B_lo": 550}}})
        assert rc.cp.var_damping.B_hi == 800.0
        assert rc.cp.var_damping.max_delta == 20.0
        with pytest.raises(config.ConfigError):
            config.build_run_config(
                {"controller": {"var_damping": {"B_high": 800}}})

    def test_mode_and_format_validated(self):
        with pytest.raises(config.ConfigError):
            config.build_run_config({"scenario": {"mode": "sideways"}})
        with pytest.raises(config.ConfigError):
            config.build_run_config({"output": {"format": "xml"}})
        with pytest.raises(config.ConfigError):
            config.build_run_config({"bode": {"which": "H"}})

    def test_set_override_paths(self):
        doc = {}
        config.set_override(doc, "plant.Ks=2e7")
        config.set_override(doc, "frontier.values=[25, 12]")
        config.set_override(doc, "scenario.collision_response=true")
        rc = config.build_run_config(doc)
        assert rc.pp.Ks == 2e7
        assert rc.sweep.values == (25.0, 12.0)
        assert rc.collision_response

    def test_set_override_bad_specs(self):
        with pytest.raises(config.ConfigError):
            config.set_override({}, "plant.Ks")
        doc = {"plant": {"Ks": 1e5}}
        with pytest.raises(config.ConfigError):
            config.set_override(doc, "plant.Ks.deep=1")

    def test_push_profile(self):
        rc = config.build_run_config(
            {"scenario": {"push_amplitude": 18.0, "push_rise": 0.25,
                          "duration": 2.5}})
        sc = config.build_scenario(rc)
        assert sc.force_profile.size == int(round(2.5 / rc.cp.h))
        assert sc.force_profile[0] == 0.0
        assert sc.force_profile[-1] == pytest.approx(18.0)
        with pytest.raises(config.ConfigError):
            config.build_run_config({"scenario": {"push_rise": 0.0}})


def run_cli(*args):
    return cli.main(list(args))


class TestSimulateCommand:
    def test_writes_trace_metrics_figure(self, tmp_path):
        assert run_cli("simulate", "--out", str(tmp_path), "--seed", "11") == 0
        header = (tmp_path / "trace.csv").read_text().splitlines()[0]
        assert header.split(",")[0] == "t"
        fields = {f.name for f in dataclasses.fields(sim.SimTrace)}
        assert set(header.split(",")) == fields
        m = json.loads((tmp_path / "metrics.json").read_text())
        assert m["contact"] is True
        assert m["peak_force"] >= 30.0
        assert (tmp_path / "trace.png").stat().st_size > 0

    def test_no_plot(self, tmp_path):
        assert run_cli("simulate", "--out", str(tmp_path), "--no-plot") == 0
        assert not (tmp_path / "trace.png").exists()

    def test_validation_exit_2(self, tmp_path, capsys):
        code = run_cli("simulate", "--out", str(tmp_path),
                       "--set", "controller.Ba=-5", "--no-plot")
        assert code == 2
        err = capsys.readouterr().err
        assert "ConfigError" in err
        assert "Ba > 0" in err

    def test_divergence_exit_3(self, tmp_path, capsys):
        code = run_cli("simulate", "--out", str(tmp_path), "--no-plot",
                       "--set", "controller.Kl=0.2",
                       "--set", "scenario.blowup_limit=0.05")
        assert code == 3
        assert "DivergenceError" in capsys.readouterr().err

    def test_seed_reruns_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert run_cli("simulate", "--out", str(d), "--seed", "5",
                           "--no-plot") == 0
        assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
        assert (a / "metrics.json").read_bytes() == \
            (b / "metrics.json").read_bytes()

    def test_free_space_run_reports_no_contact(self, tmp_path):
        assert run_cli("simulate", "--out", str(tmp_path), "--no-plot",
                       "--set", "scenario.mode=free_space_jog",
                       "--set", "plant.Ke=0") == 0
        m = json.loads((tmp_path / "metrics.json").read_text())
        assert m["contact"] is False

    def test_dump_config_round_trip(self, tmp_path, capsys):
        assert run_cli("simulate", "--dump-config",
                       "--set", "plant.Ks=2e7", "--seed", "3") == 0
        text = capsys.readouterr().out
        rc = config.parse_config(text)
        assert rc.pp.Ks == 2e7
        assert rc.seed == 3
        assert config.dump_config(rc) == text


class TestBodeCommand:
    def test_curve_per_variant(self, tmp_path):
        assert run_cli("bode", "--out", str(tmp_path), "--no-plot") == 0
        names = ("baseline", "lead", "lead+fb", "ideal-acc", "filtered-acc")
        for name in names:
            data = np.loadtxt(tmp_path / ("bode_%s.csv" % name),
                              delimiter=",", skiprows=1)
            assert data.shape == (200, 2)
            assert np.isfinite(data).all()
            assert data[0, 0] == pytest.approx(2 * np.pi * 0.05)

    def test_csv_reingestion_is_lossless(self, tmp_path):
        assert run_cli("bode", "--out", str(tmp_path), "--no-plot",
                       "--set", "bode.variants=[lead]") == 0
        data = np.loadtxt(tmp_path / "bode_lead.csv", delimiter=",",
                          skiprows=1)
        rc = config.build_run_config(None)
        model = cli.variant_model("lead", rc.cp, rc.pp)
        curve = analysis.bode_sweep(model, rc.bode_which)
        assert np.array_equal(data[:, 0], curve.omegas)
        assert np.array_equal(data[:, 1], curve.magnitudes)

    def test_empty_variant_list_exit_2(self, tmp_path, capsys):
        code = run_cli("bode", "--out", str(tmp_path), "--no-plot",
                       "--set", "bode.variants=[]")
        assert code == 2
        assert "ConfigError" in capsys.readouterr().err

    def test_json_format(self, tmp_path):
        assert run_cli("bode", "--out", str(tmp_path), "--no-plot",
                       "--format", "json",
                       "--set", "bode.variants=[baseline, lead]") == 0
        doc = json.loads((tmp_path / "bode.json").read_text())
        assert set(doc["curves"]) == {"baseline", "lead"}
        assert len(doc["curves"]["lead"]["omega"]) == 200

    def test_thread_cap_does_not_change_output(self, tmp_path, monkeypatch):
        a, b = tmp_path / "a", tmp_path / "b"
        monkeypatch.setenv("ADMLAB_THREADS", "1")
        assert run_cli("bode", "--out", str(a), "--no-plot") == 0
        monkeypatch.setenv("ADMLAB_THREADS", "4")
        assert run_cli("bode", "--out", str(b), "--no-plot") == 0
        for f in a.iterdir():
            assert f.read_bytes() == (b / f.name).read_bytes()


class TestFrontierCommand:
    def test_rows_and_dedup(self, tmp_path):
        assert run_cli("frontier", "--out", str(tmp_path), "--no-plot",
                       "--set", "frontier.values=[25, 12, 12]") == 0
        with open(tmp_path / "frontier.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["sweep_value", "min_stable_Ba", "max_stable_Kl"]
        assert len(rows) == 3    # header + 2 deduplicated points
        assert [float(r[0]) for r in rows[1:]] == [25.0, 12.0]
        assert all(float(r[1]) > 0 for r in rows[1:])

    def test_no_bracket_exit_3(self, tmp_path, capsys):
        code = run_cli("frontier", "--out", str(tmp_path), "--no-plot",
                       "--set", "frontier.values=[25]",
                       "--set", "frontier.Ba_bracket=[50, 100]",
                       "--set", "frontier.scan_Kl=false")
        assert code == 3
        assert "NoBracketError" in capsys.readouterr().err

    def test_single_scan_leaves_nan_column(self, tmp_path):
        assert run_cli("frontier", "--out", str(tmp_path), "--no-plot",
                       "--set", "frontier.values=[25]",
                       "--set", "frontier.scan_Kl=false") == 0
        data = np.loadtxt(tmp_path / "frontier.csv", delimiter=",",
                          skiprows=1)
        assert np.isfinite(data[1])
        assert np.isnan(data[2])


class TestCompareCommand:
    def test_labels_survive_csv_quoting(self, tmp_path):
        assert run_cli("compare", "--out", str(tmp_path), "--no-plot",
                       "--seed", "3") == 0
        with open(tmp_path / "compare.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0][0] == "label"
        labels = [r[0] for r in rows[1:]]
        assert labels == ["Bfb=0,Kl=0", "Bfb=0", "baseline"]
        peaks = [float(r[rows[0].index("peak_force")]) for r in rows[1:]]
        assert peaks[0] >= peaks[1] >= peaks[2]

    def test_empty_variants_exit_2(self, tmp_path, capsys):
        code = run_cli("compare", "--out", str(tmp_path), "--no-plot",
                       "--set", "compare.variants=[]")
        assert code == 2
        assert "ConfigError" in capsys.readouterr().err

    def test_figure_rendered(self, tmp_path):
        assert run_cli("compare", "--out", str(tmp_path), "--seed", "3",
                       "--set", "compare.variants=[{}, {Kl: 0.005}]") == 0
        assert (tmp_path / "compare.png").stat().st_size > 0


class TestArgumentErrors:
    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as ei:
            cli.main(["bogus"])
        assert ei.value.code == 2

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as ei:
            cli.main(["simulate", "--frobnicate"])
        assert ei.value.code == 2
