from __future__ import annotations

import pytest

from fracstage.config import ConfigError, parse_config, parse_config_text, resolve_grading
from fracstage.staging import DEFAULT_STAGES
from fracstage.train import STAGE2_BUDGET


def test_minimal_config_fills_default_lattices():
    cfg = parse_config_text('problem = "poly"\nalpha = [0.5]\nr = [1]\n')
    assert [(s.M, s.N) for s in cfg.stages] == [(10, 10), (40, 40)]
    assert cfg.stages == DEFAULT_STAGES
    assert cfg.repeats == 3 and cfg.seeds == (1, 2, 3)
    assert cfg.shift and cfg.correction_data == "misfit"
    assert cfg.cells() == [(0.5, 1.0)]


def test_alpha_out_of_range():
    with pytest.raises(ConfigError, match=r"alpha must lie in \(0,1\)"):
        parse_config_text('problem = "poly"\nalpha = [1.5]\nr = [1]\n')


def test_optimal_grading_resolves():
    cfg = parse_config_text('problem = "exp"\nalpha = [0.5]\nr = ["optimal"]\n')
    assert cfg.cells() == [(0.5, 3.0)]
    assert resolve_grading("optimal", 0.9) == pytest.approx(1.1 / 0.9)


def test_stage_sections_and_comments():
    text = """
    # sweep
    problem = "exp"   # benchmark
    alpha = [0.1, 0.5]
    r = [1, "optimal"]
    lattices = [[6, 6], [8, 12]]
    repeats = 2
    seeds = [7, 9]

    [stage.1]
    widths = [2, 5, 5, 1]
    lbfgs_max_iters = 40
    """
    cfg = parse_config_text(text)
    assert len(cfg.cells()) == 4
    s0, s1 = cfg.stages
    assert (s0.M, s0.N, s1.M, s1.N) == (6, 6, 8, 12)
    assert s1.widths == (2, 5, 5, 1)
    assert s1.budget.lbfgs_max_iters == 40
    assert s1.budget.adam_iters == STAGE2_BUDGET.adam_iters
    assert s0.seeds == (7, 9) and s1.repeats == 2


def test_seed_offset():
    cfg = parse_config_text('problem = "poly"\nalpha = 0.5\nr = 1\n').with_seed_offset(10)
    assert cfg.seeds == (11, 12, 13)
    assert all(s.seeds == (11, 12, 13) for s in cfg.stages)


@pytest.mark.parametrize(
    "text, match",
    [
        ('problem = "poly"\nalpha = [0.5]\nr = [1]\ncolour = 3\n', r"4: unknown key 'colour'"),
        ('problem = "poly"\nalpha = [0.5\n', r"2: cannot parse value for 'alpha'"),
        ('problem = "poly"\nalpha = []\nr = [1]\n', "alpha: list must be non-empty"),
        ('problem = "heat"\nalpha = [0.5]\nr = [1]\n', "problem: unknown problem"),
        ('alpha = [0.5]\nr = [1]\n', "problem: required"),
        ('problem = "poly"\nalpha = [0.5]\nr = [0.5]\n', "r: grading must be"),
        ('problem = "poly"\nalpha = [0.5]\nr = ["best"]\n', "r: unknown grading token"),
        ('problem = "poly"\nalpha = [0.5]\nr = [1]\nrepeats = 2\nseeds = [1]\n', "seeds: need 2 seeds"),
        ('problem = "poly"\nalpha = [0.5]\nr = [1]\nlattices = [[0, 4]]\n', "lattices"),
        ('problem = "poly"\nalpha = [0.5]\nr = [1]\n[stage.2]\nM = 4\n', "stage.2: only 2 stages"),
        ('problem = "poly"\nalpha = [0.5]\nr = [1]\n[stage.0]\nadam_iters = 0\n', "stage.0"),
        ('problem = "poly"\nalpha = [0.5]\nr = [1]\n[stage.0]\nalpha = 0.3\n', "unknown key 'alpha'"),
        ('problem = "poly"\nalpha = [0.5]\nr = [1]\nshift = 1\n', "shift: expected true or false"),
        ('problem = "poly"\nalpha = [0.5]\nr = [1]\ncorrection_data = "none"\n', "correction_data"),
        ('problem = "poly"\nproblem = "exp"\n', "2: duplicate key"),
        ('problem = "poly"\n[solver]\n', "2: unknown section"),
        ('problem "poly"\n', "1: expected 'key = value'"),
    ],
)
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="no such config file"):
        parse_config(tmp_path / "absent.cfg")


def test_hash_inside_string(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text('problem = "poly"\nalpha = [0.5]\nr = [1]\nout = "runs/#1"  # trailing\n')
    cfg = parse_config(p)
    assert cfg.out == "runs/#1" and cfg.source == str(p)
