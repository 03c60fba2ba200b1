"""End-to-end command-line behavior via main(argv)."""

import json

import pytest

from dsmlab.cli import (
    EXIT_CONFIG,
    EXIT_HORIZON,
    EXIT_OK,
    EXIT_PARSE,
    EXIT_REJECTED,
    EXIT_UNDECIDED,
    main,
)
from dsmlab.core import OK, WRITE
from dsmlab.files import read_history, serialize_history, write_history

from helpers import op_events, sc_not_lin, write_then_stale_read


def _cfg(tmp_path, text="n = 3\nseed = 4\n", name="run.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# --- run -------------------------------------------------------------------------


def test_run_writes_history_and_sidecar(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    assert main(["run", str(cfg)]) == EXIT_OK
    out = capsys.readouterr().out
    hist = tmp_path / "run.jsonl"
    side = tmp_path / "run.msgs.jsonl"
    assert hist.exists() and side.exists()
    assert "protocol sc_abd" in out and "seed=4" in out
    assert "writes completed" in out and "reads completed" in out
    assert "outcome: quiescent" in out
    assert read_history(hist)  # parses back


def test_run_seed_override_and_out_path(tmp_path):
    cfg = _cfg(tmp_path)
    out1 = tmp_path / "a.jsonl"
    out2 = tmp_path / "b.jsonl"
    assert main(["run", str(cfg), "--out", str(out1)]) == EXIT_OK
    assert main(["run", str(cfg), "--seed", "99", "--out", str(out2)]) == EXIT_OK
    assert out1.read_text() != out2.read_text()
    assert main(["run", str(cfg), "--seed", "4", "--out", str(out2)]) == EXIT_OK
    assert out1.read_text() == out2.read_text()


def test_run_round_shapes_in_summary(tmp_path, capsys):
    cfg = _cfg(tmp_path, "n = 5\nseed = 1\nops_per_process = 3\n")
    assert main(["run", str(cfg)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "(rounds: 1)" in out   # writes take one round
    assert "(rounds: 2)" in out   # reads take two


def test_run_invalid_config_exits_3(tmp_path, capsys):
    cfg = _cfg(tmp_path, "protocol = raft\n")
    assert main(["run", str(cfg)]) == EXIT_CONFIG
    assert "invalid config" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG


def test_run_horizon_exits_4_but_writes_files(tmp_path, capsys):
    cfg = _cfg(tmp_path, "n = 5\nops_per_process = 4\nmax_ticks = 10\n")
    assert main(["run", str(cfg)]) == EXIT_HORIZON
    captured = capsys.readouterr()
    assert "horizon" in captured.err
    assert (tmp_path / "run.jsonl").exists()
    assert (tmp_path / "run.msgs.jsonl").exists()


def test_run_reports_crashes(tmp_path, capsys):
    cfg = _cfg(tmp_path, "n = 3\nseed = 2\ncrashes = 3@8\n")
    assert main(["run", str(cfg)]) == EXIT_OK
    assert "crashes applied: p3@" in capsys.readouterr().out


# --- check ------------------------------------------------------------------------


def _run_then_history(tmp_path, text="n = 3\nseed = 4\n"):
    cfg = _cfg(tmp_path, text)
    assert main(["run", str(cfg)]) in (EXIT_OK, EXIT_HORIZON)
    return tmp_path / "run.jsonl"


def test_check_accepts_simulated_run(tmp_path, capsys):
    hist = _run_then_history(tmp_path)
    capsys.readouterr()
    assert main(["check", str(hist)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "compositional: accepted" in out
    assert "register r0: accepted" in out


def test_check_rejects_violation_exits_1(tmp_path, capsys):
    hist = tmp_path / "bad.jsonl"
    write_history(hist, write_then_stale_read())
    assert main(["check", str(hist)]) == EXIT_REJECTED
    out = capsys.readouterr().out
    assert "compositional: rejected" in out
    assert "register x: rejected" in out


def test_check_mode_both_agreement(tmp_path, capsys):
    hist = tmp_path / "h.jsonl"
    write_history(hist, sc_not_lin())
    assert main(["check", str(hist), "--mode", "both"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "compositional: accepted" in out
    assert "bruteforce: accepted" in out
    assert "agreement: yes" in out

    write_history(hist, write_then_stale_read())
    assert main(["check", str(hist), "--mode", "both"]) == EXIT_REJECTED
    assert "agreement: yes" in capsys.readouterr().out


def test_check_bruteforce_cap_exits_2(tmp_path, capsys):
    events = []
    for i in range(11):
        events += op_events(i + 1, 1, WRITE, "x", arg=i, ret=OK, ts=(i + 1, 1),
                            inv=(2 * i, 2 * i + 1), res=(2 * i + 1, 2 * i + 2))
    hist = tmp_path / "big.jsonl"
    write_history(hist, events)
    assert main(["check", str(hist), "--mode", "bruteforce"]) == EXIT_UNDECIDED
    assert "cap" in capsys.readouterr().err
    assert main(["check", str(hist), "--mode", "bruteforce", "--op-cap", "11"]) == EXIT_OK


def test_check_state_cap_can_force_undecided(tmp_path, capsys):
    # strip instrumentation so the checker has to search, then starve it
    hist = _run_then_history(tmp_path, "n = 3\nseed = 6\nops_per_process = 3\n")
    stripped = []
    for line in hist.read_text().splitlines():
        rec = json.loads(line)
        rec["ts"] = None
        stripped.append(json.dumps(rec, separators=(",", ":")))
    hist.write_text("\n".join(stripped) + "\n", encoding="utf-8")
    capsys.readouterr()
    code = main(["check", str(hist), "--state-cap", "1"])
    assert code == EXIT_UNDECIDED
    assert "undecided" in capsys.readouterr().out


def test_check_pending_note(tmp_path, capsys):
    cfg = _cfg(tmp_path, "n = 3\nseed = 3\ncrashes = 2@3\nmid_op_crash = true\nthink_time = 0\nops_per_process = 3\n")
    assert main(["run", str(cfg)]) == EXIT_OK
    hist = tmp_path / "run.jsonl"
    capsys.readouterr()
    code = main(["check", str(hist)])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    if "pending" in out:
        assert "resolved before checking" in out


def test_check_parse_error_exits_5(tmp_path, capsys):
    bad = tmp_path / "junk.jsonl"
    bad.write_text("not json\n", encoding="utf-8")
    assert main(["check", str(bad)]) == EXIT_PARSE
    assert main(["check", str(tmp_path / "missing.jsonl")]) == EXIT_PARSE


# --- fuzz -------------------------------------------------------------------------


def test_fuzz_zero_runs(capsys):
    assert main(["fuzz", "--runs", "0"]) == EXIT_OK
    assert "0 runs" in capsys.readouterr().out


def test_fuzz_clean_campaign(capsys):
    assert main(["fuzz", "--runs", "25", "--protocol", "mw_abd"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "accepted: 25/25" in out
    assert "clock audit failures: 0" in out
    assert "SOUNDNESS" not in out


def test_fuzz_small_quorum_campaign(capsys):
    assert main(["fuzz", "--runs", "30", "--mutant", "small-quorum"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "rejected:" in out and "first seed" in out
    assert "confirmed" in out
    assert "SOUNDNESS" not in out


def test_fuzz_no_writeback_campaign(capsys):
    assert main(["fuzz", "--runs", "20", "--mutant", "no-writeback"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "visibility audit failures:" in out
    assert "(first seed 0)" in out


# --- stats -------------------------------------------------------------------------


def test_stats_with_sidecar(tmp_path, capsys):
    hist = _run_then_history(tmp_path, "n = 3\nseed = 5\nops_per_process = 3\n")
    capsys.readouterr()
    assert main(["stats", str(hist)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "operations:" in out
    assert "write rounds: 1 round(s)" in out
    assert "read rounds: 2 round(s)" in out
    assert "latency ticks" in out
    assert "dropped:" in out


def test_stats_without_sidecar(tmp_path, capsys):
    hist = _run_then_history(tmp_path)
    (tmp_path / "run.msgs.jsonl").unlink()
    capsys.readouterr()
    assert main(["stats", str(hist)]) == EXIT_OK
    captured = capsys.readouterr()
    assert "no message-log sidecar" in captured.err
    assert "rounds" not in captured.out


def test_stats_parse_error(tmp_path):
    bad = tmp_path / "junk.jsonl"
    bad.write_text("{}\n", encoding="utf-8")
    assert main(["stats", str(bad)]) == EXIT_PARSE


def test_entry_point_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
