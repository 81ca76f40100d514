"""Command-line entry points: scenarios, replay, export, serve."""
import signal
import subprocess
import sys
import time

import pytest

from wozlab.gateway.cli import main
from wozlab.scene.commands import RotateItem

from harness import Platform, matched_pair


@pytest.fixture()
def sealed_session(tmp_path):
    """One completed session on disk, made through the coordinator."""
    platform = Platform(tmp_path)
    session = matched_pair(platform)
    platform.chat(session.session_id, "u1", "turn the sofa please")
    platform.command(session.session_id, "w1", RotateItem("o0", 90, "wizard"))
    platform.coordinator.end_session(session.session_id, "u1")
    platform.pump()
    return tmp_path, session.session_id


class TestScenarios:
    def test_lists_bundled_ids(self, capsys):
        assert main(["scenarios"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out == ["navigation", "shopping"]

    def test_scenario_dir_must_exist(self, tmp_path, capsys):
        code = main(["scenarios", "--scenario-dir", str(tmp_path / "absent")])
        assert code == 1


class TestReplay:
    def test_replay_success(self, sealed_session, capsys):
        log_dir, session_id = sealed_session
        code = main(["replay", "--log-dir", str(log_dir), "--session", session_id])
        assert code == 0
        out = capsys.readouterr().out
        assert session_id in out and "version 1" in out

    def test_replay_unknown_session(self, tmp_path, capsys):
        code = main(["replay", "--log-dir", str(tmp_path), "--session", "nope"])
        assert code == 1
        assert "replay failed" in capsys.readouterr().err

    def test_replay_detects_tampering(self, sealed_session, capsys):
        log_dir, session_id = sealed_session
        events = log_dir / session_id / "events.jsonl"
        tampered = events.read_text().replace('"dyaw_deg":90', '"dyaw_deg":180')
        assert tampered != events.read_text()
        events.write_text(tampered)
        code = main(["replay", "--log-dir", str(log_dir), "--session", session_id])
        assert code == 1


class TestExport:
    def test_export_prints_path(self, sealed_session, capsys):
        log_dir, session_id = sealed_session
        code = main(["export", "--log-dir", str(log_dir), "--session", session_id])
        assert code == 0
        out = capsys.readouterr().out.strip()
        assert out.endswith("export.jsonl")

    def test_export_unknown_session(self, tmp_path, capsys):
        code = main(["export", "--log-dir", str(tmp_path), "--session", "nope"])
        assert code == 1


class TestServe:
    def test_bad_config_exits_nonzero(self, tmp_path, capsys):
        code = main(
            ["serve", "--port", "8765", "--scenario-dir", str(tmp_path / "absent")]
        )
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_serve_runs_and_stops_on_sigterm(self, tmp_path):
        proc = subprocess.Popen(
            [
                sys.executable,
                "-m",
                "wozlab.gateway.cli",
                "serve",
                "--port",
                "0",
                "--log-dir",
                str(tmp_path / "logs"),
            ],
            stderr=subprocess.PIPE,
            text=True,
        )
        try:
            deadline = time.monotonic() + 10
            line = ""
            while time.monotonic() < deadline:
                line = proc.stderr.readline()
                if "listening on" in line:
                    break
            assert "listening on" in line
            proc.send_signal(signal.SIGTERM)
            assert proc.wait(timeout=10) == 0
        finally:
            if proc.poll() is None:
                proc.kill()
