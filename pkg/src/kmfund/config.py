"""Run configuration: INI-style text with sections market, utility,
mortality, grid, sim and output.

Example::

    [market]
    mu = 0.05
    sigma = 0.15
    r = 0.02
    delta_t = 0.02

    [utility]
    a = -0.1
    n = -2

    [mortality]
    mode = collective
    table = builtin
    start_age = 65

    [grid]
    points = 1001
    lower = 0
    upper = 195

    [sim]
    x0 = 65

Exactly one mortality source is allowed: ``table = builtin``, ``csv = PATH``
(relative to the config file) or ``lambda = RATE`` with ``horizon = YEARS``.
"""

import configparser
import math
from dataclasses import dataclass, replace
from pathlib import Path

from .model import (FundMode, MarketParams, PowerUtility, builtin_mortality,
                    mortality_exponential, mortality_from_csv)
from .simulate import DEFAULT_LEVELS, SimConfig
from .solver import GridSpec, SolveConfig

SECTIONS = ("market", "utility", "mortality", "grid", "sim", "output")
MORTALITY_SOURCES = ("table", "csv", "lambda")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def _num(section, key, raw):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a number") from None


def _int(section, key, raw):
    v = _num(section, key, raw)
    if v != int(v):
        raise ConfigError(f"[{section}] {key} = {raw!r} is not an integer")
    return int(v)


def parse_levels(text):
    try:
        return tuple(float(p) for p in str(text).split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"percentiles must be a comma-separated list, got {text!r}") from None


@dataclass(frozen=True)
class RunConfig:
    market: MarketParams
    utility: PowerUtility
    mode: FundMode
    mortality: dict
    grid: GridSpec
    sim: SimConfig
    eps: float | None = None
    out_dir: Path = Path("out")
    analytic_points: int = 201
    analytic_horizon: float | None = None

    def mortality_model(self):
        m = self.mortality
        dt = self.market.delta_t
        if m["source"] == "lambda":
            return mortality_exponential(m["lambda"], dt, m["horizon"])
        if m["source"] == "csv":
            path = Path(m["csv"])
            if not path.is_file():
                raise ConfigError(f"mortality file not found: {path}")
            return mortality_from_csv(path, dt, m.get("start_age"), m.get("end_age"))
        return builtin_mortality(dt, m.get("start_age", 65.0), m.get("end_age"))

    def solve_config(self):
        return SolveConfig(self.market, self.utility, self.mortality_model(), self.mode,
                           self.grid, eps=self.eps)

    def with_overrides(self, seed=None, scenarios=None, measure=None, percentiles=None,
                       trace=None, out_dir=None, points=None, horizon=None):
        sim = self.sim
        changes = {k: v for k, v in dict(seed=seed, scenarios=scenarios, measure=measure,
                                         percentiles=percentiles, trace=trace).items()
                   if v is not None}
        try:
            sim = replace(sim, **changes) if changes else sim
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        out = self
        if out_dir is not None:
            out = replace(out, out_dir=Path(out_dir))
        if points is not None:
            if points < 2:
                raise ConfigError("--points must be at least 2")
            out = replace(out, analytic_points=int(points))
        if horizon is not None:
            out = replace(out, analytic_horizon=float(horizon))
        return replace(out, sim=sim)

    def echo(self):
        """Section/key mapping that :func:`parse_sections` turns back into this config."""
        m = dict(self.mortality)
        mort = {"mode": self.mode.value}
        src = m.pop("source")
        mort[src] = m.pop(src)
        mort.update({k: v for k, v in m.items() if v is not None})
        grid = {"points": self.grid.n_points, "lower": self.grid.lower,
                "upper": self.grid.upper, "spacing": self.grid.spacing}
        if self.eps is not None:
            grid["eps"] = self.eps
        s = self.sim
        output = {"dir": str(self.out_dir), "analytic_points": self.analytic_points}
        if self.analytic_horizon is not None:
            output["analytic_horizon"] = self.analytic_horizon
        return {
            "market": {"mu": self.market.mu, "sigma": self.market.sigma, "r": self.market.r,
                       "delta_t": self.market.delta_t},
            "utility": {"a": self.utility.a, "n": self.utility.n, "x0": self.utility.x0,
                        "b": self.utility.b},
            "mortality": mort,
            "grid": grid,
            "sim": {"x0": s.x0, "scenarios": s.scenarios, "seed": s.seed, "measure": s.measure,
                    "percentiles": ",".join(repr(p) for p in s.percentiles), "trace": s.trace,
                    "initial": s.initial},
            "output": output,
        }


def _get(sections, name, key, default=None, required=False):
    sec = sections.get(name, {})
    if key in sec and str(sec[key]).strip() != "":
        return sec[key]
    if required:
        raise ConfigError(f"missing [{name}] {key}")
    return default


def parse_sections(sections, base_dir="."):
    """Build a :class:`RunConfig` from a ``{section: {key: value}}`` mapping."""
    unknown = set(sections) - set(SECTIONS) - {"DEFAULT"}
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    base_dir = Path(base_dir)
    try:
        market = MarketParams(*(_num("market", k, _get(sections, "market", k, required=True))
                                for k in ("mu", "sigma", "r", "delta_t")))
        utility = PowerUtility(_num("utility", "a", _get(sections, "utility", "a", required=True)),
                               _num("utility", "n", _get(sections, "utility", "n", required=True)),
                               _num("utility", "x0", _get(sections, "utility", "x0", 0.0)),
                               _num("utility", "b", _get(sections, "utility", "b", 0.0)))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    mode = FundMode.parse(_get(sections, "mortality", "mode", "individual"))
    present = [k for k in MORTALITY_SOURCES if _get(sections, "mortality", k) is not None]
    if len(present) != 1:
        raise ConfigError("[mortality] needs exactly one of table, csv, lambda; "
                          f"got {present or 'none'}")
    src = present[0]
    mort = {"source": src}
    for k in ("start_age", "end_age"):
        v = _get(sections, "mortality", k)
        mort[k] = None if v is None else _num("mortality", k, v)
    if src == "table":
        name = str(_get(sections, "mortality", "table")).strip().lower()
        if name != "builtin":
            raise ConfigError(f"[mortality] table must be 'builtin', got {name!r}")
        mort["table"] = "builtin"
        if mort["start_age"] is None:
            mort["start_age"] = 65.0
    elif src == "csv":
        path = Path(str(_get(sections, "mortality", "csv")))
        if not path.is_absolute():
            path = base_dir / path
        if not path.is_file():
            raise ConfigError(f"mortality file not found: {path}")
        mort["csv"] = str(path)
    else:
        mort["lambda"] = _num("mortality", "lambda", _get(sections, "mortality", "lambda"))
        mort["horizon"] = _num("mortality", "horizon",
                               _get(sections, "mortality", "horizon", required=True))
        if not mort["lambda"] > 0:
            raise ConfigError(f"[mortality] lambda must be positive, got {mort['lambda']}")

    eps = _get(sections, "grid", "eps")
    try:
        grid = GridSpec(_int("grid", "points", _get(sections, "grid", "points", required=True)),
                        _num("grid", "lower", _get(sections, "grid", "lower", required=True)),
                        _num("grid", "upper", _get(sections, "grid", "upper", required=True)),
                        str(_get(sections, "grid", "spacing", "uniform")).strip())
        sim = SimConfig(
            _num("sim", "x0", _get(sections, "sim", "x0", required=True)),
            _int("sim", "scenarios", _get(sections, "sim", "scenarios", 100_000)),
            _int("sim", "seed", _get(sections, "sim", "seed", 0)),
            str(_get(sections, "sim", "measure", "P")).strip(),
            parse_levels(_get(sections, "sim", "percentiles",
                              ",".join(str(p) for p in DEFAULT_LEVELS))),
            _int("sim", "trace", _get(sections, "sim", "trace", 0)),
            str(_get(sections, "sim", "initial", "exact")).strip())
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    horizon = _get(sections, "output", "analytic_horizon")
    cfg = RunConfig(
        market, utility, mode, mort, grid, sim,
        eps=None if eps is None else _num("grid", "eps", eps),
        out_dir=Path(str(_get(sections, "output", "dir", "out"))),
        analytic_points=_int("output", "analytic_points",
                             _get(sections, "output", "analytic_points", 201)),
        analytic_horizon=None if horizon is None else _num("output", "analytic_horizon", horizon))
    if not all(math.isfinite(v) for v in (market.mu, market.sigma, market.r, market.delta_t)):
        raise ConfigError("market parameters must be finite")
    return cfg


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    sections = {s: dict(parser[s]) for s in parser.sections()}
    return parse_sections(sections, base_dir=path.parent)
