import json

from ppoff.cli import main
from ppoff.ir import emit_schedule, parse_schedule


def run(args):
    return main(args)


def test_plan_gis_summary_peak(tmp_path, capsys):
    out = tmp_path / "o"
    code = run(["plan", "--schedule", "gis", "--d", "8", "--v", "2", "--m", "32",
                "--costs", "1,1,1", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "gis.json").read_text())
    assert summary["peak_units_rank0"] == 16
    assert summary["predicted_peak_units"] == 16
    assert (out / "gis.schedule").exists()


def test_plan_full_offload_warns_over_budget(tmp_path, capsys):
    out = tmp_path / "o"
    code = run(["plan", "--schedule", "po", "--d", "4", "--v", "2", "--m", "8",
                "--offload", "full", "--costs", "1,1,1", "--out", str(out)])
    assert code == 0
    captured = capsys.readouterr()
    assert "exceeds k budget" in captured.err
    assert (out / "po.plan").exists()


def test_plan_invalid_g_rejected(tmp_path, capsys):
    code = run(["plan", "--schedule", "gis-g", "--g", "1", "--d", "8", "--v", "2",
                "--m", "32", "--costs", "1,1,1", "--out", str(tmp_path)])
    assert code != 0
    assert "outside" in capsys.readouterr().err


def test_g_flag_only_for_gis_g(tmp_path, capsys):
    code = run(["plan", "--schedule", "gis", "--g", "4", "--d", "8", "--v", "2",
                "--m", "32", "--out", str(tmp_path)])
    assert code != 0


def test_simulate_writes_trace(tmp_path):
    out = tmp_path / "o"
    code = run(["simulate", "--schedule", "po", "--d", "4", "--v", "2", "--m", "8",
                "--offload", "half", "--costs", "1,1,1", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "po-summary.json").read_text())
    assert summary["makespan"] > 0
    assert (out / "po-trace.csv").read_text().startswith("device,")


def test_simulate_free_lunch_case(tmp_path):
    out = tmp_path / "o"
    # d=1: single device, no pipeline: bubble zero
    code = run(["simulate", "--schedule", "1f1b", "--d", "1", "--v", "2", "--m", "1",
                "--costs", "1,1,1", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "1f1b-summary.json").read_text())
    assert summary["bubble"] == [0.0]


def test_verify_default_passes(capsys):
    assert run(["verify", "--grid-d", "2,4", "--grid-v", "1,2"]) == 0
    assert "all rows ok" in capsys.readouterr().out


def test_verify_catches_injected_warmup_bug(monkeypatch, capsys):
    import ppoff.builders as builders

    def wrong(d, v, rank, g=None):
        return (d if g is None else g) * (v - 1) + d - rank + 1

    monkeypatch.setattr(builders, "warmup_gis", wrong)
    code = run(["verify", "--grid-d", "2", "--grid-v", "2"])
    assert code != 0
    assert "gis" in capsys.readouterr().err


def test_verify_empty_grid_vacuous(capsys):
    assert run(["verify", "--grid-d", "", "--grid-v", ""]) == 0


def test_render_gis_and_plan(tmp_path, capsys):
    out = tmp_path / "o"
    run(["plan", "--schedule", "po", "--d", "4", "--v", "2", "--m", "8",
         "--offload", "half", "--costs", "1,1,1", "--out", str(out)])
    code = run(["render", str(out / "po.schedule"), "--plan-file", str(out / "po.plan"),
                "--memory", "--out", str(out)])
    assert code == 0
    svg = (out / "po.svg").read_text()
    assert svg.startswith("<svg") and "rect" in svg
    art = capsys.readouterr().out
    assert "d0" in art and "F" in art and ("o" in art or "r" in art)


def test_render_parse_error_has_line_number(tmp_path, capsys):
    bad = tmp_path / "bad.schedule"
    bad.write_text("# schedule kind=x d=1 v=1 stages=1 m=1 units=1 split=0\nnot a pass line\n")
    code = run(["render", str(bad)])
    assert code == 1
    assert "line 2" in capsys.readouterr().err


def test_render_empty_schedule(tmp_path, capsys):
    empty = tmp_path / "empty.schedule"
    empty.write_text("# schedule kind=x d=2 v=1 stages=2 m=0 units=1 split=0\n")
    assert run(["render", str(empty), "--out", str(tmp_path)]) == 0
    assert "empty" in capsys.readouterr().out


def test_round_trip_cli_output(tmp_path):
    out = tmp_path / "o"
    run(["plan", "--schedule", "gis-h", "--d", "8", "--v", "2", "--m", "16",
         "--costs", "1,1,1", "--out", str(out)])
    text = (out / "gis-h.schedule").read_text()
    sched = parse_schedule(text)
    assert emit_schedule(sched) == text


def test_config_file_with_overrides(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "model": {"hidden_size": 8192, "sequence_length": 4096},
        "hardware": {"compute_bandwidth": 220e12, "transfer_bandwidth": 15e9},
        "schedule": {"kind": "gis", "d": 4, "v": 2, "m": 8},
        "costs": {"t_f": 1, "t_b": 1, "t_w": 1},
    }))
    out = tmp_path / "o"
    code = run(["plan", "--config", str(cfg), "--d", "2", "--m", "4", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "gis.json").read_text())
    assert summary["d"] == 2 and summary["m"] == 4
    assert 0.91 <= summary["k"] <= 0.93


def test_preset_loads_model(tmp_path):
    out = tmp_path / "o"
    code = run(["plan", "--schedule", "gis", "--d", "2", "--v", "2", "--m", "4",
                "--preset", "42.9B", "--costs", "1,1,1", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "gis.json").read_text())
    assert 0.91 <= summary["k"] <= 0.93  # hidden 8192 at the default link speeds


def test_sweep_reduction(tmp_path, capsys):
    out = tmp_path / "o"
    code = run(["sweep", "--study", "reduction", "--d", "4", "--v", "2", "--m", "8",
                "--costs", "1,1,1", "--out", str(out)])
    assert code == 0
    assert (out / "sweep-reduction.csv").read_text().count("\n") == 4  # header + n=0..2


def test_simulate_table2_smoke(tmp_path):
    out = tmp_path / "o"
    code = run(["simulate", "--schedule", "gis", "--d", "4", "--v", "2", "--m", "8",
                "--costs", "1,1,1", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "gis-summary.json").read_text())
    assert summary["bubble"] == [6.0, 6.0, 6.0, 6.0]


def test_simulate_offload_free_lunch_smoke(tmp_path):
    # same schedule with and without a half offload: identical makespans
    base_out, off_out = tmp_path / "a", tmp_path / "b"
    args = ["simulate", "--schedule", "po", "--d", "8", "--v", "2", "--m", "16",
            "--preset", "42.9B"]
    assert run(args + ["--out", str(base_out)]) == 0
    assert run(args + ["--offload", "half", "--out", str(off_out)]) == 0
    a = json.loads((base_out / "po-summary.json").read_text())
    b = json.loads((off_out / "po-summary.json").read_text())
    assert a["makespan"] == b["makespan"]
    assert b["max_peak_units"] < a["max_peak_units"]


def test_simulate_host_capacity_warning(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "hardware": {"compute_bandwidth": 220e12, "transfer_bandwidth": 15e9,
                     "host_memory_capacity": 1},
        "schedule": {"kind": "po", "d": 4, "v": 2, "m": 8},
        "costs": {"t_f": 1, "t_b": 1, "t_w": 1},
        "offload": "full",
    }))
    out = tmp_path / "o"
    assert run(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    assert "exceeds capacity" in capsys.readouterr().err
    summary = json.loads((out / "po-summary.json").read_text())
    assert summary["host_peak_bytes"] > 1


def test_offload_count_out_of_range(tmp_path, capsys):
    code = run(["plan", "--schedule", "po", "--d", "4", "--v", "2", "--m", "8",
                "--offload", "3", "--costs", "1,1,1", "--out", str(tmp_path)])
    assert code != 0
    assert "outside" in capsys.readouterr().err
