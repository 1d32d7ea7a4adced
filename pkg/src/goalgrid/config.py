"""Run configuration: a flat sectioned key-value document.

Sections are ``[market]``, ``[goals.1]`` ... ``[goals.N]`` (the last one is
the fundamental goal), ``[grid]``, ``[solver]`` and ``[sim]``. Unknown
sections or keys are rejected with their line number.
"""
from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from .hjb import SolverConfig
from .model import GoalLadder, GoalSpec, InvalidLadder, InvalidMarket, MarketParams, validate_ladder
from .pipeline import GridSpec
from .simulate import SimConfig


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{message}")
        self.line = line
        self.key = key


class ValidationError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


MARKET_KEYS = ("risk_free", "discount", "drift_1", "drift_2", "vol_1", "vol_2", "correlation")
GOAL_REQUIRED = ("target_amount", "deadline")
GOAL_OPTIONAL = {"weight": 1.0, "penalty_in": 0.0, "penalty_out": 0.0}
GRID_KEYS = ("x_max", "dx", "dt_last", "dt_two_goal")
SIM_KEYS = {"seed": int, "n_paths": int, "dt_sim": float, "x1": float, "x2": float, "trace_paths": int}
SOLVER_TYPES = {f.name: {"max_policy_iters": int, "cross_stencil": str}.get(f.name, float)
                for f in fields(SolverConfig)}


@dataclass(frozen=True)
class RunConfig:
    market: MarketParams
    ladder: GoalLadder
    grid: GridSpec
    solver: SolverConfig
    sim: SimConfig | None = None
    output_dir: str = "out"

    def echo(self) -> str:
        """Canonical text form; loading it gives back an equal config."""
        m = self.market
        lines = ["[market]"]
        vals = (m.risk_free, m.discount, m.drifts[0], m.drifts[1], m.vol_1, m.vol_2, m.correlation)
        lines += [f"{k} = {v!r}" for k, v in zip(MARKET_KEYS, vals)]
        for k, g in enumerate(self.ladder.goals, start=1):
            lines += ["", f"[goals.{k}]"]
            lines += [f"{f.name} = {getattr(g, f.name)!r}" for f in fields(GoalSpec)]
        lines += ["", "[grid]"] + [f"{k} = {getattr(self.grid, k)!r}" for k in GRID_KEYS]
        lines += ["", "[solver]"]
        for f in fields(SolverConfig):
            v = getattr(self.solver, f.name)
            lines.append(f"{f.name} = {v}" if isinstance(v, str) else f"{f.name} = {v!r}")
        if self.sim is not None:
            s = self.sim
            lines += ["", "[sim]", f"seed = {s.seed}", f"n_paths = {s.n_paths}"]
            if s.dt_sim is not None:
                lines.append(f"dt_sim = {s.dt_sim!r}")
            lines += [f"x1 = {float(s.initial_wealth[0])!r}", f"x2 = {float(s.initial_wealth[1])!r}",
                      f"trace_paths = {s.trace_paths}"]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.echo().encode()).hexdigest()[:12]


def _key_lines(text: str) -> dict:
    """Map (section, key) to the 1-based line where the key appears."""
    out = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", line)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), n)
            continue
        key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
        out.setdefault((section, key), n)
    return out


def _number(cp, section, key, kind, lines):
    raw = cp[section][key]
    try:
        return kind(raw)
    except ValueError:
        raise ParseError(f"[{section}] {key}: cannot read {raw!r} as {kind.__name__}",
                         lines.get((section, key)), key) from None


def load_config(text: str, output_dir: str = "out") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        cp.read_string(text)
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ParseError("malformed line", line) from None
    except configparser.Error as e:
        raise ParseError(str(e).splitlines()[0], getattr(e, "lineno", None)) from None
    lines = _key_lines(text)

    goal_sections = []
    for sec in cp.sections():
        m = re.fullmatch(r"goals\.(\d+)", sec)
        if m:
            goal_sections.append((int(m.group(1)), sec))
        elif sec not in ("market", "grid", "solver", "sim"):
            raise ParseError(f"unknown section [{sec}]", lines.get((sec, None)), sec)
    goal_sections.sort()
    if [k for k, _ in goal_sections] != list(range(1, len(goal_sections) + 1)) or not goal_sections:
        raise ParseError("goal sections must be numbered [goals.1] .. [goals.N] without gaps")

    def check(sec, allowed, required=()):
        if sec not in cp:
            if required:
                raise ParseError(f"missing section [{sec}]", None, sec)
            return
        for key in cp[sec]:
            if key not in allowed:
                raise ParseError(f"unknown key {key!r} in [{sec}]", lines.get((sec, key)), key)
        for key in required:
            if key not in cp[sec]:
                raise ValidationError(f"{sec}.{key}", "required key is missing")

    check("market", MARKET_KEYS, MARKET_KEYS)
    check("grid", GRID_KEYS, GRID_KEYS)
    check("solver", SOLVER_TYPES)
    check("sim", SIM_KEYS)
    for _, sec in goal_sections:
        check(sec, GOAL_REQUIRED + tuple(GOAL_OPTIONAL), GOAL_REQUIRED)

    mk = {k: _number(cp, "market", k, float, lines) for k in MARKET_KEYS}
    try:
        market = MarketParams(mk["risk_free"], mk["discount"], (mk["drift_1"], mk["drift_2"]),
                              mk["vol_1"], mk["vol_2"], mk["correlation"])
    except InvalidMarket as e:
        raise ValidationError(f"market.{e.path}", e.message) from None

    goals = []
    for _, sec in goal_sections:
        vals = {k: _number(cp, sec, k, float, lines) for k in cp[sec]}
        goals.append(GoalSpec(**{**GOAL_OPTIONAL, **vals}))
    ladder = GoalLadder(tuple(goals))
    try:
        validate_ladder(ladder)
    except InvalidLadder as e:
        raise ValidationError(e.path, e.message) from None

    grid = GridSpec(**{k: _number(cp, "grid", k, float, lines) for k in GRID_KEYS})
    solver_vals = {k: _number(cp, "solver", k, t, lines) for k, t in SOLVER_TYPES.items()
                   if "solver" in cp and k in cp["solver"]}
    try:
        solver = SolverConfig(**solver_vals)
        grid.axis()
    except ValueError as e:
        raise ValidationError("solver" if solver_vals else "grid", str(e)) from None

    sim = None
    if "sim" in cp:
        sv = {k: _number(cp, "sim", k, t, lines) for k, t in SIM_KEYS.items() if k in cp["sim"]}
        x0 = (sv.pop("x1", 1.4), sv.pop("x2", 1.4))
        try:
            sim = SimConfig(initial_wealth=x0, **sv)
        except ValueError as e:
            raise ValidationError("sim", str(e)) from None
    return RunConfig(market, ladder, grid, solver, sim, output_dir)


def shipped_configs() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("goalgrid.configs").iterdir() if p.name.endswith(".ini"))


def read_config(ref: str, output_dir: str = "out") -> RunConfig:
    """Load a config from a file path or the name of a shipped config."""
    p = Path(ref)
    if p.is_file():
        text = p.read_text()
    else:
        res = resources.files("goalgrid.configs") / f"{ref}.ini"
        if not res.is_file():
            raise FileNotFoundError(f"no config file or shipped config named {ref!r}")
        text = res.read_text()
    return load_config(text, output_dir)
