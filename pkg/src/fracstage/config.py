"""Experiment configuration files.

The format is flat ``key = value`` lines with optional ``[stage.K]`` sections.
Values are JSON literals (numbers, ``"strings"``, ``[lists]``, ``true``/``false``);
``#`` starts a comment. Example::

    problem = "exp"
    alpha = [0.5]
    r = ["optimal", 1]
    lattices = [[10, 10], [40, 40]]

    [stage.1]
    adam_iters = 300
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .mesh import MeshError, optimal_grading
from .staging import CORRECTION_DATA, DEFAULT_STAGES, StageConfig
from .train import OptimizerBudget

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text", "resolve_grading"]


class ConfigError(ValueError):
    pass


TOP_KEYS = {
    "problem", "alpha", "r", "lattices", "repeats", "seeds", "out", "shift",
    "eval_grid", "fdm_M", "fdm_N", "plots", "correction_data",
}
STAGE_KEYS = {"M", "N", "widths", "kappa"} | set(OptimizerBudget.__dataclass_fields__)
# "zero" and "tpow" (scalar D^alpha t^alpha) are discretization studies for the fdm verb
PROBLEMS = ("exp", "poly", "zero", "tpow")
_SECTION = re.compile(r"^\[stage\.(\d+)\]$")


@dataclass(frozen=True)
class RunConfig:
    problem: str
    alphas: tuple[float, ...]
    gradings: tuple[Any, ...]  # floats or the token "optimal"
    stages: tuple[StageConfig, ...] = DEFAULT_STAGES
    repeats: int = 3
    seeds: tuple[int, ...] = (1, 2, 3)
    out: str = "results"
    shift: bool = True
    eval_grid: tuple[int, int] = (100, 100)
    fdm_M: int = 100
    fdm_N: tuple[int, ...] = (16, 32, 64, 128)
    plots: bool = False
    correction_data: str = "misfit"
    source: str = field(default="<string>", compare=False)

    def cells(self) -> list[tuple[float, float]]:
        """``(alpha, r)`` pairs in sweep order, with ``"optimal"`` resolved."""
        return [(a, resolve_grading(g, a)) for a in self.alphas for g in self.gradings]

    def with_seed_offset(self, offset: int) -> RunConfig:
        if not offset:
            return self
        stages = tuple(replace(s, seeds=tuple(x + offset for x in s.seeds)) for s in self.stages)
        return replace(self, seeds=tuple(x + offset for x in self.seeds), stages=stages)


def resolve_grading(g, alpha: float) -> float:
    if isinstance(g, str):
        if g != "optimal":
            raise ConfigError(f"r: unknown grading token {g!r}")
        try:
            return optimal_grading(alpha)
        except MeshError as exc:
            raise ConfigError(f"r: {exc}") from None
    return float(g)


def parse_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{p}: no such config file")
    return parse_config_text(p.read_text(), str(p))


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    top: dict[str, Any] = {}
    sections: dict[int, dict[str, Any]] = {}
    current = top
    allowed = TOP_KEYS
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            k = int(m.group(1))
            if k in sections:
                raise ConfigError(f"{source}:{lineno}: duplicate section [stage.{k}]")
            current = sections[k] = {}
            allowed = STAGE_KEYS
            continue
        if line.startswith("["):
            raise ConfigError(f"{source}:{lineno}: unknown section {line}")
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in allowed:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in current:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            current[key] = json.loads(value.strip())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{lineno}: cannot parse value for {key!r}: {exc.msg}") from None
    return _build(top, sections, source)


def _strip_comment(line: str) -> str:
    # '#' inside a quoted string is kept
    in_str = False
    for i, ch in enumerate(line):
        if ch == '"' and (i == 0 or line[i - 1] != "\\"):
            in_str = not in_str
        elif ch == "#" and not in_str:
            return line[:i]
    return line


def _as_list(key, v) -> list:
    if not isinstance(v, list):
        v = [v]
    if not v:
        raise ConfigError(f"{key}: list must be non-empty")
    return v


def _build(top: dict, sections: dict, source: str) -> RunConfig:
    if "problem" not in top:
        raise ConfigError("problem: required")
    problem = top["problem"]
    if problem not in PROBLEMS:
        raise ConfigError(f"problem: unknown problem {problem!r}; choose from {', '.join(PROBLEMS)}")
    for req in ("alpha", "r"):
        if req not in top:
            raise ConfigError(f"{req}: required")
    alphas = []
    for a in _as_list("alpha", top["alpha"]):
        if isinstance(a, bool) or not isinstance(a, (int, float)) or not 0.0 < a < 1.0:
            raise ConfigError(f"alpha: alpha must lie in (0,1), got {a!r}")
        alphas.append(float(a))
    gradings = []
    for g in _as_list("r", top["r"]):
        if isinstance(g, str):
            resolve_grading(g, 0.5)
            gradings.append(g)
        elif isinstance(g, bool) or not isinstance(g, (int, float)) or g < 1:
            raise ConfigError(f"r: grading must be >= 1 or \"optimal\", got {g!r}")
        else:
            gradings.append(float(g))

    repeats = _positive_int("repeats", top.get("repeats", 3))
    seeds = tuple(_int("seeds", s) for s in _as_list("seeds", top.get("seeds", list(range(1, repeats + 1)))))
    if len(seeds) != repeats:
        raise ConfigError(f"seeds: need {repeats} seeds, got {len(seeds)}")

    lattices = top.get("lattices", [[s.M, s.N] for s in DEFAULT_STAGES])
    lattices = _as_list("lattices", lattices)
    for lat in lattices:
        if not (isinstance(lat, list) and len(lat) == 2 and all(_is_int(v) and v > 0 for v in lat)):
            raise ConfigError(f"lattices: each entry must be [M, N] with positive integers, got {lat!r}")
    for k in sections:
        if k >= len(lattices):
            raise ConfigError(f"stage.{k}: only {len(lattices)} stages configured")

    stages = []
    for k, (M, N) in enumerate(lattices):
        base = DEFAULT_STAGES[min(k, len(DEFAULT_STAGES) - 1)]
        sec = sections.get(k, {})
        budget_kw = {b: sec[b] for b in OptimizerBudget.__dataclass_fields__ if b in sec}
        try:
            budget = replace(base.budget, **budget_kw)
            stage = StageConfig(
                M=int(sec.get("M", M)),
                N=int(sec.get("N", N)),
                widths=tuple(int(w) for w in sec.get("widths", base.widths)),
                budget=budget,
                repeats=repeats,
                seeds=seeds,
                kappa=float(sec.get("kappa", base.kappa)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"stage.{k}: {exc}") from None
        stages.append(stage)

    eval_grid = top.get("eval_grid", [100, 100])
    if not (isinstance(eval_grid, list) and len(eval_grid) == 2 and all(_is_int(v) and v > 0 for v in eval_grid)):
        raise ConfigError(f"eval_grid: expected [M_e, N_e], got {eval_grid!r}")
    fdm_N = tuple(_positive_int("fdm_N", n) for n in _as_list("fdm_N", top.get("fdm_N", [16, 32, 64, 128])))
    shift = top.get("shift", True)
    plots = top.get("plots", False)
    for key, v in (("shift", shift), ("plots", plots)):
        if not isinstance(v, bool):
            raise ConfigError(f"{key}: expected true or false, got {v!r}")
    correction_data = top.get("correction_data", "misfit")
    if correction_data not in CORRECTION_DATA:
        raise ConfigError(f"correction_data: expected one of {', '.join(CORRECTION_DATA)}, got {correction_data!r}")
    out = top.get("out", "results")
    if not isinstance(out, str):
        raise ConfigError(f"out: expected a string, got {out!r}")
    cfg = RunConfig(
        problem=problem,
        alphas=tuple(alphas),
        gradings=tuple(gradings),
        stages=tuple(stages),
        repeats=repeats,
        seeds=seeds,
        out=out,
        shift=shift,
        eval_grid=(int(eval_grid[0]), int(eval_grid[1])),
        fdm_M=_positive_int("fdm_M", top.get("fdm_M", 100)),
        fdm_N=fdm_N,
        plots=plots,
        correction_data=correction_data,
        source=source,
    )
    cfg.cells()  # every (alpha, "optimal") pair must resolve
    return cfg


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _int(key, v) -> int:
    if not _is_int(v):
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    return v


def _positive_int(key, v) -> int:
    v = _int(key, v)
    if v < 1:
        raise ConfigError(f"{key}: must be positive, got {v}")
    return v
