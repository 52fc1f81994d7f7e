"""Command-line driver: one subcommand per experiment, JSON reports and CSV artifacts.

Every parameter can come from a JSON/YAML config file (top-level keys, or a
section named after the subcommand) or from a flag; flags win. Both sources
and the effective values are written into ``report.json``.

Exit codes: 0 when every assertion passes, 1 when one fails, 2 on a
configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .stats import RNG_ALGORITHM, Report, Verdict

SCHEMA_PATH = Path(__file__).parent / "schemas" / "report.schema.json"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# value parsing


def _float(field_name):
    def conv(v):
        if isinstance(v, bool):
            raise ConfigError(f"{field_name}: expected a number, got {v!r}")
        try:
            return float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{field_name}: expected a number, got {v!r}") from None
    return conv


def _int(field_name):
    def conv(v):
        if isinstance(v, bool):
            raise ConfigError(f"{field_name}: expected an integer, got {v!r}")
        try:
            f = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{field_name}: expected an integer, got {v!r}") from None
        if not f.is_integer():
            raise ConfigError(f"{field_name}: expected an integer, got {v!r}")
        return int(f)
    return conv


def _float_list(field_name):
    def conv(v):
        if isinstance(v, str):
            v = [x for x in v.split(",") if x.strip()]
        if not isinstance(v, (list, tuple)) or not v:
            raise ConfigError(f"{field_name}: expected a non-empty list of numbers")
        return [_float(field_name)(x) for x in v]
    return conv


def _int_list(field_name):
    def conv(v):
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            v = [v]
        if isinstance(v, str):
            v = [x for x in v.split(",") if x.strip()]
        if not isinstance(v, (list, tuple)) or not v:
            raise ConfigError(f"{field_name}: expected a non-empty list of integers")
        return [_int(field_name)(x) for x in v]
    return conv


def _kv(spec: str, field_name: str) -> tuple[str, dict]:
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, (x.strip() for x in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"{field_name}: expected key=value, got {item!r}")
        params[key.strip()] = val.strip()
    return kind.strip(), params


def parse_boundary(v, field_name: str = "boundary"):
    """``power:c=1,r=1,q=0.5``, ``constant:left=0,right=1``, ``log``, ``exp``, ``poisson``."""
    from .partition import BoundarySpec

    if isinstance(v, dict):
        v = dict(v)
        kind = v.pop("kind", None)
        params = {k: str(x) for k, x in v.items()}
    elif isinstance(v, str):
        kind, params = _kv(v, field_name)
    else:
        raise ConfigError(f"{field_name}: expected a boundary spec string or mapping")
    num = {}
    for k, x in params.items():
        num[k] = _float(f"{field_name}.{k}")(x)
    allowed = {
        "power": {"c", "r", "q", "anchor"},
        "constant": {"left", "right", "q"},
        "log": {"r", "q", "anchor"},
        "exp": {"r", "q", "anchor"},
        "poisson": set(),
    }
    if kind not in allowed:
        raise ConfigError(f"{field_name}.kind: unknown boundary kind {kind!r} "
                          f"(expected one of {sorted(allowed)})")
    extra = set(num) - allowed[kind]
    if extra:
        raise ConfigError(f"{field_name}.{sorted(extra)[0]}: not a parameter of {kind} boundaries")
    try:
        if kind == "power":
            return BoundarySpec.power(num.get("c", 1.0), num.get("r", 1.0), num.get("q", 0.5), num.get("anchor"))
        if kind == "constant":
            return BoundarySpec.constant(num.get("left", 0.0), num.get("right", 1.0), num.get("q", 0.5))
        if kind == "log":
            return BoundarySpec.logarithmic(num.get("r", 1.0), num.get("q", 0.5), num.get("anchor"))
        if kind == "exp":
            return BoundarySpec.exponential(num.get("r", 1.0), num.get("q", 0.5), num.get("anchor"))
        return BoundarySpec.poisson()
    except ValueError as exc:
        raise ConfigError(f"{field_name}: {exc}") from None


def parse_split(v, field_name: str = "split"):
    """``det:p=0.5``, ``random_strat:law=uniform``, ``fully_random:law=beta,a=3,b=7``."""
    from .partition import SplitSpec

    if isinstance(v, dict):
        v = dict(v)
        kind = v.pop("kind", None)
        params = {k: str(x) for k, x in v.items()}
    elif isinstance(v, str):
        kind, params = _kv(v, field_name)
    else:
        raise ConfigError(f"{field_name}: expected a split spec string or mapping")
    try:
        if kind == "det":
            if set(params) - {"p"}:
                raise ConfigError(f"{field_name}.{sorted(set(params) - {'p'})[0]}: not a parameter of det splits")
            p = _float(f"{field_name}.p")(params.get("p", 0.5))
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{field_name}.p: must lie in [0, 1], got {p}")
            return SplitSpec.det(p)
        if kind in ("random_strat", "fully_random"):
            law_name = params.get("law", "uniform")
            if set(params) - {"law", "a", "b"}:
                bad = sorted(set(params) - {"law", "a", "b"})[0]
                raise ConfigError(f"{field_name}.{bad}: not a parameter of {kind} splits")
            if law_name == "uniform":
                law = "uniform"
            elif law_name == "beta":
                a = _float(f"{field_name}.a")(params.get("a", 1.0))
                b = _float(f"{field_name}.b")(params.get("b", 1.0))
                if a <= 0 or b <= 0:
                    raise ConfigError(f"{field_name}.a/b: beta parameters must be positive")
                law = ("beta", a, b)
            else:
                raise ConfigError(f"{field_name}.law: unknown law {law_name!r} (uniform or beta)")
            return SplitSpec(kind, law=law)
        raise ConfigError(f"{field_name}.kind: unknown split kind {kind!r} "
                          "(expected det, random_strat or fully_random)")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{field_name}: {exc}") from None


def _functions(field_name):
    def conv(v):
        from .line import PiecewiseLinear

        if isinstance(v, str):
            try:
                v = json.loads(v)
            except json.JSONDecodeError:
                raise ConfigError(f"{field_name}: expected a JSON list of test functions") from None
        if not isinstance(v, list) or not v:
            raise ConfigError(f"{field_name}: expected a non-empty list of test functions")
        out = []
        for i, item in enumerate(v):
            where = f"{field_name}[{i}]"
            if not isinstance(item, dict) or "knots" not in item or "values" not in item:
                raise ConfigError(f"{where}: needs 'knots' and 'values'")
            try:
                f = PiecewiseLinear(tuple(_float_list(where + ".knots")(item["knots"])),
                                    tuple(_float_list(where + ".values")(item["values"])))
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{where}: {exc}") from None
            out.append({"name": str(item.get("name", f"f{i}")), "knots": list(f.knots),
                        "values": list(f.values)})
        return out
    return conv


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class Param:
    name: str
    conv: object
    default: object
    help: str
    check: object = None  # callable(value) -> error message or None


def _positive(v):
    return None if v > 0 else "must be positive"


def _non_negative(v):
    return None if v >= 0 else "must be non-negative"


def _open_unit(v):
    return None if 0.0 < v < 1.0 else "must lie in (0, 1)"


def _closed_unit(v):
    return None if 0.0 <= v <= 1.0 else "must lie in [0, 1]"


def _c_range(v):
    return None if v >= 0.0 else "must be >= 0 (use inf for fast growth)"


def _grid_check(v):
    return None if all(0.0 < t < 1.0 for t in v) else "entries must lie in (0, 1)"


def _steps_check(v):
    return None if all(s >= 0 for s in v) else "entries must be non-negative"


SEED = Param("seed", lambda v: _int("seed")(v), None, "master seed (required for stochastic runs)")

PARAMS: dict[str, list[Param]] = {
    "evolve": [
        Param("boundary", parse_boundary, "power:c=1,r=1", "boundary spec"),
        Param("split", parse_split, "det:p=0.5", "split spec"),
        Param("n", _int("n"), 100, "number of steps", _non_negative),
        Param("all_steps", lambda v: bool(v), False, "write every step, not only the last"),
    ],
    "alpha": [
        Param("boundary", parse_boundary, "power:c=1,r=1", "boundary spec"),
        Param("split", parse_split, "det:p=0.5", "split spec"),
        Param("n", _int("n"), 200, "number of steps", _non_negative),
        Param("replications", _int("replications"), 0,
              "Monte Carlo chains for the representation check (0 = skip)", _non_negative),
        Param("tol", _float("tol"), 1e-10, "tolerance for the exact comparison", _positive),
    ],
    "limit-test": [
        Param("c", _float("c"), 1.0, "growth index (0, inf allowed)", _c_range),
        Param("q", _float("q"), 0.5, "right-end share of growth", _closed_unit),
        Param("pbar", _float("pbar"), 0.5, "mean splitting proportion", _open_unit),
        Param("n", _int("n"), 10_000, "number of steps", _positive),
        Param("slow_family", str, "constant", "c = 0 family: constant or log"),
        Param("compare_n", _int("compare_n"), 0, "also assert D_n < D_compare_n (0 = skip)", _non_negative),
    ],
    "tau-test": [
        Param("boundary", parse_boundary, "power:c=1,r=1", "boundary spec"),
        Param("n", _int("n"), 10_000, "number of steps", _positive),
        Param("replications", _int("replications"), 10_000, "Monte Carlo replications", _positive),
    ],
    "genfun": [
        Param("p", _float("p"), 0.3, "splitting proportion", _open_unit),
        Param("n", _int("n"), 5000, "number of steps", _positive),
        Param("k_max", _int("k_max"), 10, "edge depth checked", _non_negative),
        Param("tol", _float("tol"), 1e-3, "edge-limit tolerance", _positive),
        Param("cross_n", _int("cross_n"), 100, "size of the exact cross-check", _positive),
    ],
    "gamma-setup": [
        Param("n", _int("n"), 2000, "number of steps", _positive),
        Param("replications", _int("replications"), 10_000, "replications", _positive),
        Param("t_grid", _float_list("t_grid"), [0.25, 0.5, 0.75], "fluctuation grid", _grid_check),
        Param("spacing_n", _int("spacing_n"), 50, "step for the pooled spacing test", _positive),
        Param("spacing_replications", _int("spacing_replications"), 1000,
              "replications for the pooled spacing test", _positive),
        Param("csv_replications", _int("csv_replications"), 5, "replications written to points.csv",
              _non_negative),
    ],
    "line-invariance": [
        Param("l", _float("l"), -4.0, "window left end (< 0)"),
        Param("m", _float("m"), 4.0, "window right end (> 0)"),
        Param("steps", _int_list("steps"), [1, 10, 50], "steps tested", _steps_check),
        Param("replications", _int("replications"), 10_000, "replications", _positive),
        Param("csv_replications", _int("csv_replications"), 5, "trajectories written to CSV",
              _non_negative),
    ],
    "x1-invariance": [
        Param("replications", _int("replications"), 100_000, "replications", _positive),
        Param("steps", _int_list("steps"), [1, 25], "steps tested", _steps_check),
        Param("factor", _float("factor"), 1.5, "KS threshold multiplier", _positive),
    ],
    "vague-convergence": [
        Param("n", _int("n"), 64, "number of steps", _positive),
        Param("replications", _int("replications"), 10_000, "replications", _positive),
        Param("l", _float("l"), -8.0, "window left end"),
        Param("m", _float("m"), 8.0, "window right end"),
        Param("functions", _functions("functions"),
              [{"name": "triangle", "knots": [-2, 0, 2], "values": [0, 1, 0]},
               {"name": "plateau", "knots": [0, 0, 4, 4], "values": [0, 1, 1, 0]}],
              "test functions: list of {name, knots, values}"),
    ],
    "drift": [
        Param("l", _float("l"), -2.0, "window left end"),
        Param("m", _float("m"), 2.0, "window right end"),
        Param("M", _float("M"), 8.0, "small-set size", _positive),
        Param("states", _int("states"), 100, "sampled states", _positive),
        Param("replications", _int("replications"), 200, "transitions per state", _positive),
    ],
}

STOCHASTIC = {"tau-test", "gamma-setup", "line-invariance", "x1-invariance", "vague-convergence", "drift",
              "limit-test", "all"}

# sizes used by ``all``; each sub-run keeps the module minimums
ALL_OVERRIDES: dict[str, dict] = {
    "evolve": {"n": 100},
    "alpha": {"n": 200, "split": "fully_random:law=uniform", "replications": 10_000},
    "limit-test": {"n": 10_000, "compare_n": 1000},
    "tau-test": {"n": 2000},
    "genfun": {},
    "gamma-setup": {"n": 200},
    "line-invariance": {"steps": [1, 10]},
    "x1-invariance": {},
    "vague-convergence": {"n": 1024, "replications": 2000},
    "drift": {"states": 50, "replications": 100},
}


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict
    file: str | None = None
    file_values: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    out_dir: Path = Path("fraglab-out")

    @property
    def seed(self) -> int | None:
        return self.params.get("seed")

    def provenance(self) -> dict:
        return {
            "file": self.file,
            "file_values": self.file_values,
            "flags": self.flags,
            "effective": _plain(self.params),
        }


def _plain(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        if hasattr(v, "__dataclass_fields__"):
            v = {f: getattr(v, f) for f in v.__dataclass_fields__}
        out[k] = _json_value(v)
    return out


def _json_value(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return None
        return v
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _json_value(x) for k, x in v.items()}
    if isinstance(v, (np.floating, np.integer)):
        return _json_value(v.item())
    return v


def load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config: file not found: {path}")
    text = p.read_text()
    try:
        if p.suffix.lower() in (".yaml", ".yml"):
            import yaml

            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except Exception as exc:  # parse errors of either format
        raise ConfigError(f"config: cannot parse {path}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    return data


def resolve(subcommand: str, file_data: dict, flags: dict, file_path: str | None, out_dir: Path) -> ExperimentConfig:
    """Defaults < config file (top level, then its subcommand section) < flags."""
    params_def = {p.name: p for p in PARAMS.get(subcommand, [])}
    allowed = set(params_def) | {"seed", "out"}
    merged: dict = {p.name: p.default for p in params_def.values()}
    file_values: dict = {}
    for key, val in file_data.items():
        if key in PARAMS or key == "all":
            continue  # sections for other subcommands
        if key not in allowed:
            raise ConfigError(f"{key}: unknown field for {subcommand}")
        file_values[key] = val
    section = file_data.get(subcommand, {})
    if not isinstance(section, dict):
        raise ConfigError(f"{subcommand}: config section must be a mapping")
    for key, val in section.items():
        if key not in allowed:
            raise ConfigError(f"{subcommand}.{key}: unknown field")
        file_values[key] = val
    merged.update({k: v for k, v in file_values.items() if k != "out"})
    merged.update({k: v for k, v in flags.items() if k != "out"})
    seed = merged.pop("seed", None)
    params = {}
    for name, p in params_def.items():
        val = p.conv(merged[name]) if merged[name] is not None else None
        if p.check is not None and val is not None:
            msg = p.check(val)
            if msg:
                raise ConfigError(f"{name}: {msg} (got {val!r})")
        params[name] = val
    params["seed"] = SEED.conv(seed) if seed is not None else None
    if params["seed"] is not None and not 0 <= params["seed"] < 2**64:
        raise ConfigError("seed: must be a non-negative 64-bit integer")
    if _needs_seed(subcommand, params) and params["seed"] is None:
        raise ConfigError(f"seed: --seed is required for {subcommand}")
    # the output location is not part of the experiment, so reports compare across directories
    recorded = {k: v for k, v in flags.items() if k != "out"}
    file_values = {k: v for k, v in file_values.items() if k != "out"}
    return ExperimentConfig(subcommand, params, file_path, _json_value(file_values),
                            _json_value(recorded), out_dir)


def _needs_seed(subcommand: str, params: dict) -> bool:
    if subcommand in STOCHASTIC:
        return True
    if subcommand in ("evolve", "alpha"):
        if params["boundary"].is_random or params["split"].is_random:
            return True
        return subcommand == "alpha" and params.get("replications", 0) > 0
    return False


# ---------------------------------------------------------------------------
# runners; each returns (reports, artifact names)


def _run_evolve(cfg: ExperimentConfig):
    from .partition import Evolution, write_breakpoints_csv

    p = cfg.params
    try:
        ev = Evolution(p["boundary"], p["split"], p["n"], p["seed"])
        steps = list(ev.steps()) if p["all_steps"] else [ev.final()]
    except ValueError as exc:
        raise ConfigError(f"n: {exc}") from None
    write_breakpoints_csv(cfg.out_dir / "breakpoints.csv", steps)
    last = steps[-1].points
    report = Report("evolve")
    gaps = np.diff(last)
    report.add(Verdict("monotone", float(np.min(gaps)) if gaps.size else 0.0, 0.0,
                       bool(np.all(gaps >= 0)), n=p["n"], details={"points": int(last.size)}))
    return [report], ["breakpoints.csv"]


def _run_alpha(cfg: ExperimentConfig):
    from .markov import ChainParams, alpha_exact, representation_check, representation_gap
    from .partition import EmpiricalMeasure, write_measure_csv

    p = cfg.params
    params = ChainParams(p["boundary"], p["split"], p["n"], p["seed"])
    alpha = alpha_exact(params, p["n"])
    write_measure_csv(cfg.out_dir / "alpha.csv", [EmpiricalMeasure(p["n"], alpha[1:-1])])
    reports = []
    report = Report("alpha")
    try:
        gap = representation_gap(params, p["n"])
        report.add(Verdict("alpha_vs_evolution", gap, p["tol"], gap <= p["tol"], n=p["n"]))
    except ValueError as exc:
        report.notes.append(f"direct evolution skipped: {exc}")
    reports.append(report)
    if p["replications"] > 0:
        reports.append(representation_check(params, p["n"], p["replications"], p["seed"]))
    return reports, ["alpha.csv"]


def limit_specs(c: float, q: float, pbar: float, slow_family: str = "constant"):
    """Boundary and split realizing regime ``c`` with shares ``q`` and mean ``pbar``."""
    from .partition import BoundarySpec, SplitSpec

    if c == 0.0:
        if slow_family == "constant":
            boundary = BoundarySpec.constant(0.0, 1.0, q=q)
        elif slow_family == "log":
            boundary = BoundarySpec.logarithmic(q=q)
        else:
            raise ConfigError(f"slow_family: expected constant or log, got {slow_family!r}")
    elif math.isinf(c):
        boundary = BoundarySpec.exponential(q=q)
    else:
        boundary = BoundarySpec.power(c, q=q)
    law = "uniform" if pbar == 0.5 else ("beta", 10.0 * pbar, 10.0 * (1.0 - pbar))
    return boundary, SplitSpec.fully_random(law)


def _run_limit(cfg: ExperimentConfig):
    from .limits import LimitLaw, limit_test, normalized_measure, write_cdf_csv

    p = cfg.params
    boundary, split = limit_specs(p["c"], p["q"], p["pbar"], p["slow_family"])
    compare = p["compare_n"] or None
    report = limit_test(boundary, split, p["n"], p["seed"], compare_n=compare)
    law = LimitLaw.for_regime(boundary.regime, p["q"], split.mean)
    write_cdf_csv(cfg.out_dir / "cdf.csv", normalized_measure(boundary, split, p["n"], p["seed"]), law)
    return [report], ["cdf.csv"]


def _run_tau(cfg: ExperimentConfig):
    from .markov import ChainParams, tau_statistics
    from .partition import SplitSpec

    p = cfg.params
    params = ChainParams(p["boundary"], SplitSpec.det(0.5), p["n"], p["seed"])
    return [tau_statistics(params, p["n"], p["replications"], p["seed"])], []


def _run_genfun(cfg: ExperimentConfig):
    from .genfun import h_cross_check, h_limit_check, h_table, write_h_csv

    p = cfg.params
    if p["n"] < 10 * p["k_max"]:
        raise ConfigError(f"n: must be at least 10 * k_max = {10 * p['k_max']}")
    if p["cross_n"] > 2000:
        raise ConfigError("cross_n: must be at most 2000")
    report = h_limit_check(p["p"], p["k_max"], p["n"], p["tol"])
    gap = h_cross_check(p["p"], p["cross_n"])
    report.add(Verdict("h_alpha_cross_check", gap, 1e-10, gap <= 1e-10, n=p["cross_n"]))
    write_h_csv(cfg.out_dir / "H.csv", h_table(p["p"], p["n"]))
    return [report], ["H.csv"]


def _run_gamma(cfg: ExperimentConfig):
    from .gamma_setup import (
        fluctuation_test,
        order_statistics_check,
        run_batch,
        run_gamma_setup,
        spacing_gamma_test,
        write_fluctuations_csv,
        write_points_csv,
    )

    p = cfg.params
    n, R, seed = p["n"], p["replications"], p["seed"]
    try:
        spacing = spacing_gamma_test(p["spacing_n"], p["spacing_replications"], seed)
        batch = run_batch(n, R, seed, t_grid=p["t_grid"])
        order = order_statistics_check(n, R, seed, batch=batch)
        fluct = fluctuation_test(n, p["t_grid"], R, seed, batch=batch)
    except ValueError as exc:
        raise ConfigError(f"replications: {exc}") from None
    write_points_csv(cfg.out_dir / "points.csv",
                     [run_gamma_setup(n, seed, r) for r in range(min(p["csv_replications"], R))])
    write_fluctuations_csv(cfg.out_dir / "fluctuations.csv", batch)
    return [spacing, order, fluct], ["points.csv", "fluctuations.csv"]


def _run_line(cfg: ExperimentConfig):
    from .line import chain_window_step, crop, invariance_test_ngamma2, sample_line, write_trajectories_csv
    from .stats import SUB_BOUNDARY, SUB_CHAIN, RngStream

    p = cfg.params
    l, m = p["l"], p["m"]
    if not l < 0.0:
        raise ConfigError(f"l: must be negative (got {l})")
    if not m > 0.0:
        raise ConfigError(f"m: must be positive (got {m})")
    try:
        report = invariance_test_ngamma2(l, m, p["steps"], p["replications"], p["seed"])
    except ValueError as exc:
        raise ConfigError(f"replications: {exc}") from None
    trajs = []
    for r in range(min(p["csv_replications"], p["replications"])):
        stream = RngStream(p["seed"], r)
        st = crop(sample_line(l, m, stream.generator(SUB_BOUNDARY)), l, m)
        rng = stream.generator(SUB_CHAIN)
        traj = [st]
        for _ in range(max(p["steps"])):
            st = chain_window_step(st, rng)
            traj.append(st)
        trajs.append(traj)
    write_trajectories_csv(cfg.out_dir / "trajectories.csv", trajs)
    return [report], ["trajectories.csv"]


def _run_x1(cfg: ExperimentConfig):
    from .line import x1_invariance_test

    p = cfg.params
    return [x1_invariance_test(p["replications"], p["seed"], tuple(p["steps"]), p["factor"])], []


def _run_vague(cfg: ExperimentConfig):
    from .line import CoverageError, PiecewiseLinear, vague_convergence_test

    p = cfg.params
    if not p["l"] < p["m"]:
        raise ConfigError(f"l: must be below m (got l={p['l']}, m={p['m']})")
    reports = []
    for spec in p["functions"]:
        f = PiecewiseLinear(tuple(spec["knots"]), tuple(spec["values"]))
        try:
            reports.append(vague_convergence_test(f, p["n"], p["replications"], p["seed"],
                                                  window=(p["l"], p["m"]), name=spec["name"]))
        except CoverageError as exc:
            rep = Report("vague_convergence")
            rep.add(Verdict(f"coverage_{spec['name']}", 1.0, 0.01, False, n=p["n"],
                            replications=p["replications"], details={"error": str(exc)}))
            reports.append(rep)
        except ValueError as exc:
            raise ConfigError(f"functions: {exc}") from None
    return reports, []


def _run_drift(cfg: ExperimentConfig):
    from .line import drift_diagnostic, drift_states

    p = cfg.params
    if not p["l"] < p["m"]:
        raise ConfigError(f"l: must be below m (got l={p['l']}, m={p['m']})")
    states = drift_states(p["l"], p["m"], p["states"], p["seed"])
    return [drift_diagnostic(p["M"], states, p["replications"], p["seed"])], []


RUNNERS = {
    "evolve": _run_evolve,
    "alpha": _run_alpha,
    "limit-test": _run_limit,
    "tau-test": _run_tau,
    "genfun": _run_genfun,
    "gamma-setup": _run_gamma,
    "line-invariance": _run_line,
    "x1-invariance": _run_x1,
    "vague-convergence": _run_vague,
    "drift": _run_drift,
}
SUBCOMMANDS = tuple(RUNNERS) + ("all",)


# ---------------------------------------------------------------------------
# output


def write_json_atomic(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".report-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _payload(cfg: ExperimentConfig, reports: list[Report], artifacts: list[str]) -> dict:
    return {
        "subcommand": cfg.subcommand,
        "version": __version__,
        "rng": RNG_ALGORITHM,
        "seed": cfg.seed,
        "pass": all(r.passed for r in reports),
        "config": cfg.provenance(),
        "reports": [r.to_dict() for r in reports],
        "artifacts": sorted(artifacts),
    }


def run_one(cfg: ExperimentConfig) -> dict:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    reports, artifacts = RUNNERS[cfg.subcommand](cfg)
    payload = _payload(cfg, reports, artifacts)
    write_json_atomic(cfg.out_dir / "report.json", payload)
    return payload


def run_all(file_data: dict, flags: dict, file_path: str | None, out_dir: Path) -> dict:
    summary = {}
    ok = True
    for sub in RUNNERS:
        sub_flags = dict(ALL_OVERRIDES[sub])
        sub_flags.update(flags)
        cfg = resolve(sub, file_data, sub_flags, file_path, out_dir / sub)
        payload = run_one(cfg)
        summary[sub] = payload["pass"]
        ok = ok and payload["pass"]
    top = {
        "subcommand": "all",
        "version": __version__,
        "rng": RNG_ALGORITHM,
        "seed": flags.get("seed", file_data.get("seed")),
        "pass": ok,
        "config": {"file": file_path,
                   "file_values": _json_value({k: v for k, v in file_data.items() if k != "out"}),
                   "flags": _json_value({k: v for k, v in flags.items() if k != "out"}),
                   "effective": {"overrides": _json_value(ALL_OVERRIDES)}},
        "reports": [],
        "artifacts": sorted(f"{s}/report.json" for s in RUNNERS),
        "summary": summary,
    }
    write_json_atomic(out_dir / "report.json", top)
    return top


# ---------------------------------------------------------------------------
# argument parsing


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fraglab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fraglab {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sp = subs.add_parser(name, help=f"run {name}")
        sp.add_argument("--config", default=None, help="JSON or YAML config file")
        sp.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default fraglab-out)")
        sp.add_argument("--seed", default=argparse.SUPPRESS, help=SEED.help)
        for p in PARAMS.get(name, []):
            if p.name == "all_steps":
                sp.add_argument(_flag(p.name), dest=p.name, action="store_true", default=argparse.SUPPRESS,
                                help=p.help)
            else:
                sp.add_argument(_flag(p.name), dest=p.name, default=argparse.SUPPRESS,
                                help=f"{p.help} (default {p.default!r})")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("subcommand", "config")}
    try:
        file_data = load_config_file(args.config) if args.config else {}
        out = flags.get("out") or file_data.get("out") or "fraglab-out"
        out_dir = Path(out)
        if args.subcommand == "all":
            if "seed" not in flags and "seed" not in file_data:
                raise ConfigError("seed: --seed is required for all")
            payload = run_all(file_data, flags, args.config, out_dir)
        else:
            cfg = resolve(args.subcommand, file_data, flags, args.config, out_dir)
            payload = run_one(cfg)
    except ConfigError as exc:
        print(f"fraglab: config error: {exc}", file=sys.stderr)
        return 2
    status = "PASS" if payload["pass"] else "FAIL"
    print(f"{args.subcommand}: {status} ({out_dir / 'report.json'})")
    return 0 if payload["pass"] else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
