from __future__ import annotations

import csv
import json

import pytest

from fracstage.cli import FDM_COLUMNS, RUN_COLUMNS, main

TINY_STAGES = """
lattices = [[5, 5], [6, 6]]
repeats = 1
seeds = [1]

[stage.0]
widths = [2, 6, 6, 1]
adam_iters = 3
lbfgs_max_iters = 3

[stage.1]
widths = [2, 5, 1]
adam_iters = 3
lbfgs_max_iters = 3
"""


def write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_six_cell_sweep_emits_twelve_rows(tmp_path):
    cfg = write(tmp_path, 'problem = "exp"\nalpha = [0.1, 0.5, 0.9]\nr = [1, "optimal"]\n' + TINY_STAGES)
    out = tmp_path / "run"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv(out / "results.csv")
    assert tuple(rows[0]) == RUN_COLUMNS
    assert len(rows) == 13
    assert [r[2] for r in rows[1:]] == ["0", "1"] * 6
    summary = json.loads((out / "summary.json").read_text())
    assert [c["status"] for c in summary["cells"]] == ["ok"] * 6
    assert len(list((out / "history").glob("*.csv"))) == 12


def _strip_wall_time(rows):
    i = rows[0].index("wall_time_s")
    return [r[:i] + r[i + 1:] for r in rows]


def test_runs_are_reproducible(tmp_path):
    cfg = write(tmp_path, 'problem = "poly"\nalpha = [0.6]\nr = [2]\n' + TINY_STAGES)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(a)]) == 0
    assert main(["run", "--config", cfg, "--out", str(b)]) == 0
    assert _strip_wall_time(read_csv(a / "results.csv")) == _strip_wall_time(read_csv(b / "results.csv"))
    for h in sorted((a / "history").glob("*.csv")):
        assert h.read_bytes() == (b / "history" / h.name).read_bytes()


def test_seed_offset_changes_results(tmp_path):
    cfg = write(tmp_path, 'problem = "poly"\nalpha = [0.6]\nr = [2]\n' + TINY_STAGES)
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", "--config", cfg, "--out", str(a)])
    main(["run", "--config", cfg, "--out", str(b), "--seed-offset", "5"])
    assert read_csv(a / "results.csv")[1][3] != read_csv(b / "results.csv")[1][3]


def test_parallel_workers_match_serial(tmp_path):
    cfg = write(tmp_path, 'problem = "poly"\nalpha = [0.3, 0.7]\nr = [1]\n' + TINY_STAGES)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(a)]) == 0
    assert main(["run", "--config", cfg, "--out", str(b), "--workers", "2"]) == 0
    assert _strip_wall_time(read_csv(a / "results.csv")) == _strip_wall_time(read_csv(b / "results.csv"))


def test_plots_are_written(tmp_path):
    cfg = write(tmp_path, 'problem = "poly"\nalpha = [0.5]\nr = [1]\nplots = true\n' + TINY_STAGES)
    out = tmp_path / "run"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    svgs = sorted(p.name for p in out.glob("*.svg"))
    assert svgs and all(p.startswith(("loss_", "error_")) for p in svgs)
    assert (out / svgs[0]).read_text().startswith("<svg")


def test_empty_sweep_is_rejected_without_files(tmp_path, capsys):
    cfg = write(tmp_path, 'problem = "poly"\nalpha = []\nr = [1]\n')
    out = tmp_path / "never"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()
    assert "alpha" in capsys.readouterr().err


def test_failed_cell_does_not_abort_sweep(tmp_path):
    # r = 1000 underflows the first time step, so only that cell fails
    cfg = write(tmp_path, 'problem = "poly"\nalpha = [0.5]\nr = [1000, 1]\n' + TINY_STAGES)
    out = tmp_path / "run"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 1
    cells = json.loads((out / "summary.json").read_text())["cells"]
    assert [c["status"] for c in cells] == ["error", "ok"]
    assert "MeshError" in cells[0]["error"]
    assert len(read_csv(out / "results.csv")) == 3


def test_optimal_grading_above_cap_is_a_config_error(tmp_path, capsys):
    cfg = write(tmp_path, 'problem = "poly"\nalpha = [0.01]\nr = ["optimal"]\n')
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "exceeds the cap" in capsys.readouterr().err


def test_fdm_poly_is_exact(tmp_path):
    cfg = write(tmp_path, 'problem = "poly"\nalpha = [0.3, 0.9]\nr = [1, "optimal"]\nfdm_M = 16\nfdm_N = [8, 16, 32]\n')
    out = tmp_path / "fdm"
    assert main(["fdm", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv(out / "fdm.csv")
    assert tuple(rows[0]) == FDM_COLUMNS
    assert len(rows) == 1 + 4 * 3
    assert all(float(r[4]) <= 1e-10 for r in rows[1:])


def test_fdm_zero_problem_has_zero_error(tmp_path):
    cfg = write(tmp_path, 'problem = "zero"\nalpha = [0.5]\nr = [1, 3]\nfdm_M = 8\nfdm_N = [4, 8]\n')
    out = tmp_path / "fdm"
    assert main(["fdm", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv(out / "fdm.csv")[1:]
    assert all(float(r[4]) == 0.0 and float(r[5]) == 0.0 for r in rows)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
def test_fdm_power_study_orders(tmp_path, alpha):
    cfg = write(tmp_path, f'problem = "tpow"\nalpha = [{alpha}]\nr = [1, 2]\nfdm_N = [64, 128, 256, 512]\n')
    out = tmp_path / "fdm"
    assert main(["fdm", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv(out / "fdm.csv")[1:]
    for r in (1.0, 2.0):
        order = float([row for row in rows if float(row[1]) == r][-1][6])
        assert abs(order - min(2 - alpha, r * alpha)) <= 0.25


def test_run_rejects_fdm_only_problem(tmp_path, capsys):
    cfg = write(tmp_path, 'problem = "tpow"\nalpha = [0.5]\nr = [1]\n')
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "fdm verb" in capsys.readouterr().err


def test_bad_workers(tmp_path):
    cfg = write(tmp_path, 'problem = "poly"\nalpha = [0.5]\nr = [1]\n')
    assert main(["run", "--config", cfg, "--workers", "0"]) == 2
