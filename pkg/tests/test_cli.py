import json
import subprocess
import sys

from mimo_ae.cli import main
from mimo_ae.fronthaul import KIND_DECODER, KIND_ENCODER, decode_frames

FAST_SWEEP = [
    "--blocks", "2", "--snr", "0,10", "--ndiv", "8", "--epochs", "50",
    "--seed", "3",
]


def run_cli(args):
    return main(list(args))


class TestSweepCommand:
    def test_writes_all_outputs(self, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        code = run_cli(["sweep", "--out", str(out)] + FAST_SWEEP)
        assert code == 0
        for suffix in (".csv", ".report.txt", ".png", ".series.csv"):
            assert (tmp_path / f"sweep{suffix}").exists()
        stdout = capsys.readouterr().out
        assert "Paired-comparison checks" in stdout
        header = out.read_text().splitlines()[0]
        assert header.startswith("scenario,n_div,snr_db,evm_percent")

    def test_same_seed_byte_identical(self, tmp_path):
        outs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            assert run_cli(["sweep", "--out", str(out)] + FAST_SWEEP) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_seed_changes_results(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        base = ["sweep", "--blocks", "1", "--snr", "5", "--ndiv", "8",
                "--epochs", "10", "--scenarios", "full_bw_centralized"]
        assert run_cli(base + ["--out", str(a), "--seed", "1"]) == 0
        assert run_cli(base + ["--out", str(b), "--seed", "2"]) == 0
        assert a.read_bytes() != b.read_bytes()

    def test_thread_env_does_not_change_bytes(self, tmp_path, monkeypatch):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        monkeypatch.setenv("MIMO_AE_THREADS", "1")
        assert run_cli(["sweep", "--out", str(a)] + FAST_SWEEP) == 0
        monkeypatch.setenv("MIMO_AE_THREADS", "2")
        assert run_cli(["sweep", "--out", str(b)] + FAST_SWEEP) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_bad_output_path_exits_2(self, tmp_path, capsys):
        missing = tmp_path / "nope" / "sweep.csv"
        code = run_cli(["sweep", "--out", str(missing)] + FAST_SWEEP)
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_invalid_scenario_exits_2(self, tmp_path, capsys):
        code = run_cli(
            ["sweep", "--out", str(tmp_path / "x.csv"), "--scenarios", "warp_drive"]
        )
        assert code == 2
        assert "warp_drive" in capsys.readouterr().err


class TestConfigFile:
    def test_config_values_take_effect(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text(
            "[system]\nm = 16\nk = 2\nseed = 5\n"
            "[sweep]\nblocks = 1\nsnr = 5\nndiv = 8\n"
            "scenarios = full_bw_centralized\n"
            "[autoencoder]\nepochs = 10\n"
        )
        out = tmp_path / "cfg.csv"
        assert run_cli(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 2
        row = lines[1].split(",")
        assert row[0] == "full_bw_centralized"
        assert row[4] == "1"
        assert row[5] == "5"

    def test_cli_overrides_beat_config(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[system]\nm = 16\nk = 2\n[sweep]\nblocks = 1\n")
        out = tmp_path / "o.csv"
        assert run_cli([
            "sweep", "--config", str(cfg), "--out", str(out), "--blocks", "2",
            "--snr", "5", "--ndiv", "8", "--scenarios", "full_bw_centralized",
            "--epochs", "5",
        ]) == 0
        assert out.read_text().splitlines()[1].split(",")[4] == "2"

    def test_unknown_keys_aggregated(self, tmp_path, capsys):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[system]\nwarp = 9\n[mystery]\nx = 1\n")
        assert run_cli(["sweep", "--config", str(cfg), "--out", "x.csv"]) == 2
        err = capsys.readouterr().err
        assert "warp" in err and "mystery" in err

    def test_missing_config_exits_2(self, tmp_path, capsys):
        assert run_cli(["sweep", "--config", str(tmp_path / "no.ini")]) == 2
        assert "error:" in capsys.readouterr().err


class TestTrainCommand:
    def test_writes_models_and_manifest(self, tmp_path):
        out = tmp_path / "models"
        code = run_cli([
            "train", "--out", str(out), "--seed", "4", "--epochs", "20",
            "--blocks", "2",
        ])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["blocks"]) == 2
        for entry in manifest["blocks"]:
            frames = decode_frames((out / entry["file"]).read_bytes())
            assert [f.kind for f in frames] == [KIND_ENCODER, KIND_DECODER]
            assert all(f.block_id == entry["block_id"] for f in frames)

    def test_rerun_is_byte_identical(self, tmp_path):
        blobs = []
        for name in ("m1", "m2"):
            out = tmp_path / name
            assert run_cli([
                "train", "--out", str(out), "--seed", "4", "--epochs", "20",
                "--blocks", "1",
            ]) == 0
            blobs.append(
                ((out / "block_00000.maef").read_bytes(),
                 (out / "manifest.json").read_bytes())
            )
        assert blobs[0] == blobs[1]

    def test_unwritable_output_exits_2(self, tmp_path, capsys):
        blocker = tmp_path / "file.txt"
        blocker.write_text("not a directory")
        code = run_cli(["train", "--out", str(blocker / "models"), "--blocks", "1"])
        assert code == 2
        assert "error:" in capsys.readouterr().err


class TestReportCommand:
    def test_report_from_sweep_csv(self, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        assert run_cli(["sweep", "--out", str(out)] + FAST_SWEEP) == 0
        (tmp_path / "sweep.png").unlink()
        capsys.readouterr()
        code = run_cli(["report", str(out)])
        assert code == 0
        stdout = capsys.readouterr().out
        checks = [l for l in stdout.splitlines() if l.strip().startswith("[")]
        assert len(checks) == 3
        assert (tmp_path / "sweep.png").exists()

    def test_malformed_csv_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("scenario,n_div\nx,1\n")
        assert run_cli(["report", str(bad)]) == 2
        assert "line 1" in capsys.readouterr().err

    def test_report_line_number_on_bad_row(self, tmp_path, capsys):
        bad = tmp_path / "bad2.csv"
        bad.write_text(
            "scenario,n_div,snr_db,evm_percent,n_blocks,seed,recon_mse,paper_factor,actual_overhead\n"
            "full_bw_centralized,,x,1,1,0,,,\n"
        )
        assert run_cli(["report", str(bad)]) == 2
        assert "line 2" in capsys.readouterr().err


class TestSelftestCommand:
    def test_exit_zero_and_one_line_per_check(self, capsys):
        code = run_cli(["selftest"])
        out = capsys.readouterr().out
        assert code == 0
        lines = [l for l in out.splitlines() if l.startswith("[")]
        assert len(lines) == 4
        assert all(l.startswith("[PASS]") for l in lines)


class TestConsoleEntryPoint:
    def test_module_invocation(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "mimo_ae.cli", "--version"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert "mimo-ae" in result.stdout
