"""Command-line behavior: exit codes, formats, determinism."""

import json
from pathlib import Path

import numpy as np
import pytest

from trapsim.cli import SCAN_GAIN_VPM_PER_V, main

from conftest import assert_close

ROOT = Path(__file__).resolve().parent.parent
PARAMS = ROOT / "paper_params"


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _csv_rows(text):
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return header, rows


class TestExitCodes:
    def test_usage_error_is_2(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 2
        with pytest.raises(SystemExit) as err:
            main(["dc-scan", "--no-such-flag"])
        assert err.value.code == 2

    def test_physics_error_is_1_with_json(self, capsys):
        code, out, err = _run(capsys, "dc-scan", "--stray", "150",
                              "--grid", "3:1:0.1")
        assert code == 1
        report = json.loads(err)
        assert report["error"]  # machine-readable kind tag
        assert "grid" in report["message"]

    def test_missing_input_file_is_1(self, capsys, tmp_path):
        code, out, err = _run(capsys, "fit-scan", "--in",
                              str(tmp_path / "nope.csv"))
        assert code == 1
        assert "cannot read" in json.loads(err)["message"]

    def test_selftest_passes(self, capsys):
        code, out, _ = _run(capsys, "selftest")
        assert code == 0
        lines = out.strip().splitlines()
        assert sum(1 for ln in lines if ln.startswith("PASS")) == 5
        assert not any(ln.startswith("FAIL") for ln in lines)
        assert lines[-1].startswith("backend:")


class TestTrap:
    def test_report_keys_and_determinism(self, capsys):
        code, out1, _ = _run(capsys, "trap")
        assert code == 0
        rep = json.loads(out1)
        for key in ("position_m", "frequencies_hz", "mathieu_q",
                    "idc_gain_vpm_per_v", "layout_name", "backend"):
            assert key in rep, key
        assert_close(rep["idc_gain_vpm_per_v"], SCAN_GAIN_VPM_PER_V,
                     rtol=1e-9)
        code, out2, _ = _run(capsys, "trap")
        assert out2 == out1

    def test_out_writes_file(self, capsys, tmp_path):
        target = tmp_path / "trap.json"
        code, out, _ = _run(capsys, "trap", "--out", str(target))
        assert code == 0
        assert out == ""
        assert json.loads(target.read_text())["mathieu_q"]


class TestDcScan:
    def test_noiseless_peak_sits_at_cancellation(self, capsys):
        code, out, _ = _run(capsys, "dc-scan", "--stray", "150",
                            "--grid", "-3:3:0.1", "--shots", "inf")
        assert code == 0
        header, rows = _csv_rows(out)
        assert header == ["timestamp_s", "delta_v_V", "p1", "shots"]
        assert len(rows) == 61
        assert all(r[3] == "inf" for r in rows)
        dv = np.array([float(r[1]) for r in rows])
        p1 = np.array([float(r[2]) for r in rows])
        best = dv[int(np.argmax(p1))]
        target = -150.0 / SCAN_GAIN_VPM_PER_V
        closest = dv[int(np.argmin(np.abs(dv - target)))]
        assert best == closest
        assert p1.max() > 0.99  # half-pi probe saturates at cancellation

    def test_shot_noise_deterministic_per_seed(self, capsys):
        args = ("dc-scan", "--stray", "-400", "--shots", "200",
                "--seed", "3")
        _, out1, _ = _run(capsys, *args)
        _, out2, _ = _run(capsys, *args)
        assert out1 == out2
        _, out3, _ = _run(capsys, "dc-scan", "--stray", "-400",
                          "--shots", "200", "--seed", "4")
        assert out3 != out1
        _, rows = _csv_rows(out1)
        counts = [float(r[2]) * 200 for r in rows]
        assert all(abs(c - round(c)) < 1e-9 for c in counts)

    def test_env_seed_overrides_config_seed(self, capsys, monkeypatch):
        args = ("dc-scan", "--stray", "100", "--shots", "100", "--seed", "3")
        _, base, _ = _run(capsys, *args)
        monkeypatch.setenv("TRAPSIM_SEED", "99")
        _, overridden, _ = _run(capsys, *args)
        assert overridden != base

    def test_roundtrip_through_fit(self, capsys, tmp_path):
        csv_path = tmp_path / "scan.csv"
        code, _, _ = _run(capsys, "dc-scan", "--stray", "150",
                          "--grid", "-3:3:0.1", "--shots", "inf",
                          "--out", str(csv_path))
        assert code == 0
        code, out, _ = _run(capsys, "fit-scan", "--in", str(csv_path))
        assert code == 0
        rep = json.loads(out)
        assert set(rep) == {"t", "e_y_estimate", "sigma", "chi2red"}
        assert_close(rep["e_y_estimate"], 150.0, atol=0.15)


class TestRabiCommands:
    def test_curve_csv_and_fit_roundtrip(self, capsys, tmp_path):
        cfg = {
            "modes": [{"mode_id": "radial1", "frequency": "2.11 MHz",
                       "nbar": 6}],
            "drive": {"rabi": "545 kHz"},
            "times": {"start": "0.05 us", "stop": "12 us", "n": 50},
            "shots": "inf",
        }
        cfg_path = tmp_path / "rabi.json"
        cfg_path.write_text(json.dumps(cfg))
        csv_path = tmp_path / "rabi.csv"
        code, _, _ = _run(capsys, "rabi", "--config", str(cfg_path),
                          "--out", str(csv_path))
        assert code == 0
        header, rows = _csv_rows(csv_path.read_text())
        assert header == ["t_us", "p1"]
        assert len(rows) == 50

        code, out, _ = _run(capsys, "fit-rabi", "--in", str(csv_path),
                            "--config", str(cfg_path))
        assert code == 0
        rep = json.loads(out)
        assert rep["converged"] is True
        assert_close(rep["rabi_hz"], 545e3, rtol=1e-3)
        assert_close(rep["nbar"][0], 6.0, rtol=0.05)
        assert len(rep["nbar_sigma"]) == 1

    def test_shot_noise_quantized(self, capsys, tmp_path):
        cfg = {
            "modes": [{"frequency": "2.11 MHz", "nbar": 2}],
            "drive": {"rabi": "545 kHz"},
            "times": {"start": "0 us", "stop": "5 us", "n": 20},
            "shots": 500,
            "seed": 5,
        }
        cfg_path = tmp_path / "r.json"
        cfg_path.write_text(json.dumps(cfg))
        _, out1, _ = _run(capsys, "rabi", "--config", str(cfg_path))
        _, out2, _ = _run(capsys, "rabi", "--config", str(cfg_path))
        assert out1 == out2
        _, rows = _csv_rows(out1)
        assert all(abs(float(r[1]) * 500 - round(float(r[1]) * 500)) < 1e-9
                   for r in rows)


class TestScheduleAndHeating:
    def test_sbc_cools_both_modes(self, capsys):
        code, out, _ = _run(capsys, "sbc", "--schedule",
                            str(PARAMS / "sbc_schedule.json"))
        assert code == 0
        rep = json.loads(out)
        assert rep["n_pulses"] == len(rep["pulse_history"])
        for mid in ("radial1", "radial2"):
            assert rep["final_nbar"][mid] < rep["initial_nbar"][mid]
        assert rep["final_nbar"]["radial2"] < 0.5
        assert rep["final_nbar"]["radial1"] < 6.0

    def test_heating_means(self, capsys):
        code, out, _ = _run(capsys, "heating", "--rate", "1700",
                            "--nbar0", "0.1", "--times", "0,0.5e-3,1e-3")
        assert code == 0
        header, rows = _csv_rows(out)
        assert header == ["t_s", "nbar"]
        nbars = np.array([float(r[1]) for r in rows])
        assert_close(nbars, np.array([0.1, 0.95, 1.8]), atol=2e-4)


class TestMsGateCommand:
    def test_curve_shape_and_determinism(self, capsys):
        code, out1, _ = _run(capsys, "ms-gate", "--params",
                             str(PARAMS / "ms_gate.json"))
        assert code == 0
        header, rows = _csv_rows(out1)
        assert header == ["t_us", "p00", "p01", "p10", "p11"]
        assert len(rows) == 28
        pops = np.array([[float(v) for v in r[1:]] for r in rows])
        assert pops.min() >= 0.0 and pops.max() <= 1.0
        assert_close(pops.sum(axis=1), np.ones(28), atol=1e-9)
        code, out2, _ = _run(capsys, "ms-gate", "--params",
                             str(PARAMS / "ms_gate.json"))
        assert out2 == out1

    def test_fit_ms_rejects_wrong_columns(self, capsys, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t_us,p1\n0,1\n")
        code, _, err = _run(capsys, "fit-ms", "--in", str(bad),
                            "--params", str(PARAMS / "ms_gate.json"))
        assert code == 1
        assert "expected columns" in json.loads(err)["message"]
