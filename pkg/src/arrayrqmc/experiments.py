"""Experiment grids: replicate cells, aggregate, regress, tabulate.

Config files are JSON with top-level keys ``model``, ``option``, ``params``,
``methods``, ``n_list``, ``m`` and ``seed``::

    {
      "model": "vg", "option": "asian", "params": {},
      "methods": [{"family": "independent", "sort": "split"},
                  {"family": "sobol_lms", "sort": "split"}],
      "n_list": [1024, 4096, 16384], "m": 50, "seed": 20240601
    }

``methods`` entries may also be written as ``"family:sort"`` strings. ``m``
may be replaced by ``"scale": "desk"`` (50) or ``"full"`` (100). For the
stratified family each target in ``n_list`` snaps to the closest ``k^(c+d)``
and the realized ``n`` is what gets recorded.

The ``independent`` family is crude Monte Carlo: chains are simulated with
fresh uniforms and never sorted, which has the same law as sorting them
against independent points.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .engine import array_rqmc_replicate, build_config, crude_mc_replicate, estimate_logistic, sort_dims_for
from .models import Option, ParameterError, make_chain
from .pointsets import Family, snap_stratified_n
from .sorts import LogisticMapSpec, SortKind

__all__ = [
    "ConfigError",
    "CellError",
    "Method",
    "ExperimentConfig",
    "ReplicateRow",
    "CellResult",
    "RegressionResult",
    "load_config",
    "parse_config",
    "run_experiment",
    "aggregate",
    "vrf",
    "ols",
    "regression_slope",
    "emit_table",
    "write_replicates",
    "read_replicates",
    "write_cells",
    "read_cells",
    "read_any",
    "REPLICATE_HEADER",
    "CELL_HEADER",
]

REPLICATE_HEADER = ["model", "option", "family", "sort", "n", "replicate", "mean", "wall_ms"]
CELL_HEADER = ["model", "option", "family", "sort", "n", "mean", "var_per_run", "var_estimator", "stderr"]
DEFAULT_M = {"desk": 50, "full": 100}
PILOT_FILE = "pilot_logistic.json"


class ConfigError(ValueError):
    pass


class CellError(RuntimeError):
    """A replicate failed; the message names the cell and replicate."""


@dataclass(frozen=True, order=True)
class Method:
    family: Family
    sort: SortKind

    @property
    def is_mc(self):
        return self.family is Family.INDEPENDENT

    @property
    def label(self):
        return f"{self.family.value}:{self.sort.value}"


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    option: Option
    params: dict
    methods: tuple
    n_list: tuple
    m: int
    seed: int


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _parse_method(raw, path):
    if isinstance(raw, str):
        if raw.count(":") != 1:
            _fail(path, f"expected 'family:sort', got {raw!r}")
        fam, kind = raw.split(":")
    elif isinstance(raw, dict):
        extra = set(raw) - {"family", "sort"}
        if extra:
            _fail(path, f"unknown keys {sorted(extra)}")
        fam, kind = raw.get("family"), raw.get("sort")
    else:
        _fail(path, "method must be a 'family:sort' string or an object")
    try:
        fam = Family(fam)
    except ValueError:
        _fail(f"{path}.family", f"unknown family {fam!r}; expected one of {[f.value for f in Family]}")
    try:
        kind = SortKind(kind)
    except ValueError:
        _fail(f"{path}.sort", f"unknown sort {kind!r}; expected one of {[k.value for k in SortKind]}")
    return Method(fam, kind)


def parse_config(raw: dict, seed=None) -> ExperimentConfig:
    """Validate a decoded JSON config; errors name the offending field."""
    if not isinstance(raw, dict):
        _fail("$", "config must be a JSON object")
    allowed = {"model", "option", "params", "methods", "n_list", "m", "seed", "scale"}
    extra = set(raw) - allowed
    if extra:
        _fail("$", f"unknown keys {sorted(extra)}")
    for key in ("model", "option", "methods", "n_list"):
        if key not in raw:
            _fail(f"$.{key}", "missing")
    model = str(raw["model"]).lower()
    try:
        option = Option(str(raw["option"]).lower())
    except ValueError:
        _fail("$.option", f"expected 'european' or 'asian', got {raw['option']!r}")
    params = raw.get("params", {}) or {}
    if not isinstance(params, dict):
        _fail("$.params", "must be an object")
    try:
        make_chain(model, option, params)
    except ParameterError as exc:
        _fail("$.params" if model in ("vg", "heston", "ou") else "$.model", str(exc))
    methods = raw["methods"]
    if not isinstance(methods, list) or not methods:
        _fail("$.methods", "must be a nonempty list")
    parsed = tuple(_parse_method(mth, f"$.methods[{i}]") for i, mth in enumerate(methods))
    if len(set(parsed)) != len(parsed):
        _fail("$.methods", "duplicate methods")
    n_list = raw["n_list"]
    if (not isinstance(n_list, list) or not n_list
            or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 2 for v in n_list)):
        _fail("$.n_list", "must be a nonempty list of integers >= 2")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        _fail("$.n_list", "must be strictly increasing")
    if "m" in raw:
        m = raw["m"]
    else:
        scale = raw.get("scale", "desk")
        if scale not in DEFAULT_M:
            _fail("$.scale", f"expected one of {sorted(DEFAULT_M)}")
        m = DEFAULT_M[scale]
    if not isinstance(m, int) or isinstance(m, bool) or m < 2:
        _fail("$.m", "must be an integer >= 2")
    s = raw.get("seed", 0) if seed is None else seed
    if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s < 2**64:
        _fail("$.seed", "must be an integer in [0, 2^64)")
    cfg = ExperimentConfig(model, option, dict(params), parsed, tuple(n_list), m, s)
    for i, mth in enumerate(parsed):
        for n in n_list:
            try:
                _cell_config(cfg, mth, _cell_n(cfg, mth, n), logistic=_PLACEHOLDER)
            except (ValueError, ParameterError) as exc:
                _fail(f"$.methods[{i}] at n={n}", str(exc))
    return cfg


def load_config(path, seed=None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw, seed)


_PLACEHOLDER = object()


def _chain(cfg):
    return make_chain(cfg.model, cfg.option, cfg.params)


def _cell_n(cfg, method, target):
    if method.family is Family.STRATIFIED:
        model = _chain(cfg)
        return snap_stratified_n(target, sort_dims_for(model, method.sort) + model.d)
    return target


def _cell_config(cfg, method, n, logistic):
    model = _chain(cfg)
    if logistic is _PLACEHOLDER:
        c = model.sort_dims
        logistic = LogisticMapSpec((0.0,) * c, (1.0,) * c)
    return build_config(model, method.family, method.sort, n, logistic=logistic)


def _cell_seed(seed, method, n):
    fam = list(Family).index(method.family)
    kind = list(SortKind).index(method.sort)
    return int(np.random.SeedSequence([seed, fam, kind, n]).generate_state(2, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class ReplicateRow:
    model: str
    option: str
    family: str
    sort: str
    n: int
    replicate: int
    mean: float
    wall_ms: float


@dataclass(frozen=True)
class CellResult:
    model: str
    option: str
    family: str
    sort: str
    n: int
    mean: float
    var_per_run: float
    var_estimator: float
    stderr: float

    @property
    def method(self):
        return Method(Family(self.family), SortKind(self.sort))


def _run_chunk(task):
    cfg, method, n, logistic, reps = task
    ecfg = _cell_config(cfg, method, n, logistic)
    seed = _cell_seed(cfg.seed, method, n)
    fn = crude_mc_replicate if method.is_mc else array_rqmc_replicate
    out = []
    for r in reps:
        try:
            res = fn(ecfg, seed, r)
        except Exception as exc:
            raise CellError(f"cell {method.label} n={n} replicate {r}: {exc}") from exc
        out.append(ReplicateRow(cfg.model, cfg.option.value, method.family.value, method.sort.value,
                                res.n, r, res.mean, res.wall_time_ms))
    return out


def _chunks(m, parts):
    size = max(1, math.ceil(m / parts))
    return [range(a, min(m, a + size)) for a in range(0, m, size)]


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads=1):
    """Run every (method, n) cell; return (replicate rows, cells).

    Rows come back sorted by method, n, replicate whatever the completion
    order. With ``out_dir`` the pilot, both CSV files and the table are
    written there.
    """
    logistic = None
    if any(mth.sort is SortKind.HILBERT for mth in cfg.methods):
        logistic = estimate_logistic(_chain(cfg), cfg.seed)
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, PILOT_FILE), "w") as fh:
                json.dump([{"step": j + 1, "mu": list(s.mu), "sigma": list(s.sigma)}
                           for j, s in enumerate(logistic)], fh, indent=1)
    tasks = []
    for mth in sorted(cfg.methods):
        for target in cfg.n_list:
            n = _cell_n(cfg, mth, target)
            for reps in _chunks(cfg.m, max(1, threads)):
                tasks.append((cfg, mth, n, logistic if mth.sort is SortKind.HILBERT else None, reps))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_run_chunk, tasks))
    else:
        parts = [_run_chunk(t) for t in tasks]
    rows = sorted((r for part in parts for r in part), key=_row_key)
    cells = aggregate(rows)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_replicates(os.path.join(out_dir, "replicates.csv"), rows)
        write_cells(os.path.join(out_dir, "cells.csv"), cells)
        with open(os.path.join(out_dir, "table.txt"), "w") as fh:
            fh.write(emit_table(cells) + "\n")
    return rows, cells


def _row_key(r):
    return (Family(r.family), SortKind(r.sort), r.n, r.replicate)


def aggregate(rows: Iterable[ReplicateRow]) -> list:
    groups = {}
    for r in rows:
        groups.setdefault((r.model, r.option, r.family, r.sort, r.n), []).append(r.mean)
    cells = []
    for (model, option, family, sort, n), means in groups.items():
        y = np.asarray(means, dtype=float)
        if y.size < 2:
            raise ValueError(f"cell {family}:{sort} n={n} has {y.size} replicate(s); need >= 2")
        var_est = float(np.var(y, ddof=1))
        cells.append(CellResult(model, option, family, sort, n, float(y.mean()), n * var_est, var_est,
                                math.sqrt(var_est / y.size)))
    return sorted(cells, key=lambda c: (Family(c.family), SortKind(c.sort), c.n))


def vrf(mc_var_per_run, method_var_per_run):
    """Variance reduction factor ``mc / method``."""
    if not (mc_var_per_run > 0 and method_var_per_run > 0):
        raise ValueError(f"VRF needs positive variances, got {mc_var_per_run}, {method_var_per_run}")
    return mc_var_per_run / method_var_per_run


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r2: float


def ols(x, y) -> RegressionResult:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.unique(x).size < 2:
        raise ValueError("regression needs at least 2 distinct x values")
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = np.sum((y - ym) ** 2)
    ss_res = np.sum((y - intercept - slope * x) ** 2)
    r2 = 1.0 if ss_tot == 0 else float(max(0.0, 1.0 - ss_res / ss_tot))
    return RegressionResult(slope, intercept, r2)


def regression_slope(cells: Sequence, per_run=False) -> RegressionResult:
    """OLS of log2 variance against log2 n from ``(n, var_per_run)`` pairs.

    By default the response is the estimator variance ``var_per_run / n``;
    ``per_run=True`` regresses ``var_per_run`` itself, whose slope is
    larger by exactly one.
    """
    pairs = [(c.n, c.var_per_run) if isinstance(c, CellResult) else tuple(c) for c in cells]
    if len({n for n, _ in pairs}) < 2:
        raise ValueError("regression needs at least 2 distinct n")
    for n, v in pairs:
        if not v > 0:
            raise ValueError(f"cell n={n} has nonpositive variance {v}")
    x = [math.log2(n) for n, _ in pairs]
    y = [math.log2(v if per_run else v / n) for n, v in pairs]
    return ols(x, y)


def _fmt(v, spec):
    return "-" if v is None else format(v, spec)


def emit_table(cells: Sequence[CellResult]) -> str:
    """One row per method: slope and VRF at the method's largest n."""
    header = f"{'model':<7} {'option':<9} {'sort':<11} {'family':<14} {'n_max':>8} {'beta':>7} {'VRF':>12}"
    lines = [header]
    by_method = {}
    for c in cells:
        by_method.setdefault((c.model, c.option, c.method), []).append(c)
    for (model, option, mth), group in sorted(by_method.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2].sort, kv[0][2].family)):
        group = sorted(group, key=lambda c: c.n)
        top = group[-1]
        try:
            beta = regression_slope(group).slope
        except ValueError:
            beta = None
        mc = [c for (mo, op, m2), g in by_method.items() if mo == model and op == option and m2.is_mc for c in g]
        ratio = None
        if mth.is_mc:
            ratio = 1.0
        elif mc:
            ref = max(mc, key=lambda c: (c.n, c.sort == mth.sort))
            # MC variance per run does not depend on n
            if ref.var_per_run > 0 and top.var_per_run > 0:
                ratio = vrf(ref.var_per_run, top.var_per_run)
        lines.append(f"{model:<7} {option:<9} {mth.sort.value:<11} {mth.family.value:<14} {top.n:>8} "
                     f"{_fmt(beta, '7.2f')} {_fmt(ratio, '12.1f')}")
    return "\n".join(lines)


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, k) for k in header)])


def _read(path, header, cls):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        got = next(rd, None)
        if got != header:
            raise ValueError(f"{path}: header {got} != {header}")
        types = {f.name: f.type for f in fields(cls)}
        conv = {"int": int, "float": float, "str": str}
        return [cls(**{k: conv[types[k]](v) for k, v in zip(header, line)}) for line in rd]


def write_replicates(path, rows):
    _write(path, REPLICATE_HEADER, rows)


def read_replicates(path):
    return _read(path, REPLICATE_HEADER, ReplicateRow)


def write_cells(path, cells):
    _write(path, CELL_HEADER, cells)


def read_cells(path):
    return _read(path, CELL_HEADER, CellResult)


def read_any(path):
    """Cells from either CSV layout; replicate files are aggregated."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if header == REPLICATE_HEADER:
        return aggregate(read_replicates(path))
    return read_cells(path)


def config_dict(cfg: ExperimentConfig):
    d = asdict(cfg)
    d["option"] = cfg.option.value
    d["methods"] = [m.label for m in cfg.methods]
    d["n_list"] = list(cfg.n_list)
    return d
