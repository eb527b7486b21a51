"""Experiment harness: lambda sweeps, fairness-budget search, curve emission.

A run is described by an INI file::

    [run]
    version = 1
    dataset = synthetic-2d        ; synthetic-1d | synthetic-2d | <schema name> | <csv path>
    n = 10000
    gamma = 0.5
    seeds = 10
    methods = ERM, OT-U W2, OT-U TV
    lambda_grid = default

Keys not given fall back to :class:`ExperimentConfig` defaults.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import math
import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .aware import AwareTransport
from .baselines import plug_in_hard, plug_in_soft
from .data import (
    TargetScaler,
    gen_synthetic_1d,
    gen_synthetic_2d,
    load_csv,
    oracle_eta_1d,
    oracle_eta_2d,
    oracle_posterior_1d,
    oracle_posterior_2d,
    read_schema,
    shipped_schema,
    stratified_split,
)
from .domain import (
    INFINITE,
    FairnessReport,
    GroupPriors,
    Penalty,
    RelaxationConfig,
    Setting,
    ValidationError,
    is_infinite,
)
from .estimators import OraclePosterior, OracleRegressor, fit_logistic, fit_ols
from .metrics import build_report
from .relaxation import fit_fair_predictor, predict_fair

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
SYNTHETIC = ("synthetic-1d", "synthetic-2d")
METHODS = ("ERM", "OT-U W2", "OT-U TV", "OT-A W2", "OT-A TV", "plug-in hard", "plug-in soft")
DEFAULT_GRID = "0, log:1e-3:1e3:15, inf"
CURVE_METRICS = ("w2", "tv", "ks", "ks_grid", "var_plus", "var_minus")
RELATIVE_COLUMNS = (("MSE", "mse"), ("W2", "w2"), ("TV", "tv"), ("KS", "ks"), ("KS_T", "ks_grid"))
BUDGET_TOL = 0.02
BUDGET_MAX_ITER = 40
BUDGET_BRACKET = (1e-4, 1e6)


class ConfigError(ValueError):
    """Bad experiment configuration; the message names the line when known."""


# -- lambda grids --------------------------------------------------------------


def parse_lambda_grid(spec: str) -> tuple[float, ...]:
    """Parse ``"0, log:1e-3:1e3:15, inf"``-style grids (``default`` allowed).

    The result is sorted and deduplicated.
    """
    spec = spec.strip()
    if spec.lower() == "default":
        spec = DEFAULT_GRID
    values: list[float] = []
    for item in (p.strip() for p in spec.split(",")):
        if not item:
            continue
        if item.lower().startswith("log:"):
            parts = item.split(":")
            if len(parts) != 4:
                raise ConfigError(f"bad log grid item {item!r}; expected log:<lo>:<hi>:<count>")
            lo, hi, count = float(parts[1]), float(parts[2]), int(parts[3])
            if not (0 < lo <= hi) or count < 1:
                raise ConfigError(f"bad log grid item {item!r}")
            values.extend(np.logspace(math.log10(lo), math.log10(hi), count).tolist())
        elif item.lower() in ("inf", "infinite", "infinity"):
            values.append(INFINITE)
        else:
            try:
                v = float(item)
            except ValueError:
                raise ConfigError(f"bad lambda value {item!r}") from None
            if not v >= 0:
                raise ConfigError(f"lambda must be >= 0, got {item!r}")
            values.append(v)
    if not values:
        raise ConfigError("empty lambda grid")
    return tuple(sorted(set(values)))


def format_lambda(lam) -> str:
    if lam is None:
        return "-"
    return "inf" if is_infinite(lam) else repr(float(lam))


def _parse_lambda_cell(text: str):
    if text == "-":
        return None
    return INFINITE if text == "inf" else float(text)


# -- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "synthetic-2d"
    csv: str = ""
    schema: str = ""
    n: int = 10_000
    gamma: float = 0.5
    seeds: int = 10
    seed_offset: int = 0
    test_fraction: float = 0.2
    methods: tuple[str, ...] = METHODS
    lambda_grid: tuple[float, ...] = field(default_factory=lambda: parse_lambda_grid("default"))
    base: str = "ols"
    classifier: str = "logistic"
    k_neighbors: int = 15
    tau: float = 1e-6
    out: str = "results"

    def __post_init__(self):
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown method(s) {unknown}; choose from {list(METHODS)}")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.base not in ("ols", "oracle") or self.classifier not in ("logistic", "oracle"):
            raise ConfigError("base must be ols|oracle and classifier logistic|oracle")
        if "oracle" in (self.base, self.classifier) and self.dataset not in SYNTHETIC:
            raise ConfigError("oracle estimators exist only for the synthetic datasets")

    @property
    def seed_list(self) -> list[int]:
        return list(range(self.seed_offset, self.seed_offset + self.seeds))


_INT_KEYS = ("n", "seeds", "seed_offset", "k_neighbors")
_FLOAT_KEYS = ("gamma", "test_fraction", "tau")
_STR_KEYS = ("dataset", "csv", "schema", "base", "classifier", "out")


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines, section = {}, ""
    for no, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"\s*([A-Za-z0-9_\-]+)\s*[=:]", line)
        if m:
            lines[(section, m.group(1).strip().lower())] = no
    return lines


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a run config; keyword overrides (e.g. from CLI flags) win over the file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{path}, line {lineno}: cannot parse {line.strip()!r}") from None
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        prefix = f"{path}, line {lineno}" if lineno else str(path)
        raise ConfigError(f"{prefix}: {exc.message.splitlines()[0]}") from None
    if not parser.has_section("run"):
        raise ConfigError(f"{path}: missing [run] section")
    lines = _key_lines(text)
    sec = parser["run"]
    values: dict = {}

    def where(key):
        return f"{path}, line {lines.get(('run', key), '?')}"

    version = sec.get("version", str(CONFIG_VERSION))
    if version.strip() != str(CONFIG_VERSION):
        raise ConfigError(f"{where('version')}: unsupported config version {version!r}")
    known = set(_INT_KEYS + _FLOAT_KEYS + _STR_KEYS + ("methods", "lambda_grid", "version"))
    for key in sec:
        if key not in known:
            raise ConfigError(f"{where(key)}: unknown key {key!r}")
        raw = sec[key].strip()
        try:
            if key in _INT_KEYS:
                values[key] = int(raw)
            elif key in _FLOAT_KEYS:
                values[key] = float(raw)
            elif key in _STR_KEYS:
                values[key] = raw
            elif key == "methods":
                values[key] = tuple(m.strip() for m in raw.split(",") if m.strip())
            elif key == "lambda_grid":
                values[key] = parse_lambda_grid(raw)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{where(key)}: {exc}") from None
    if values.get("csv") and not Path(values["csv"]).is_absolute():
        values["csv"] = str((path.parent / values["csv"]).resolve())
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# -- data preparation ----------------------------------------------------------


@dataclass(frozen=True)
class Split:
    train: object
    test: object
    scaler: TargetScaler | None = None


def _resolve_schema(config: ExperimentConfig):
    if config.schema:
        p = Path(config.schema)
        return read_schema(p) if p.suffix == ".ini" or p.is_file() else shipped_schema(config.schema)
    return shipped_schema(config.dataset)


def load_raw(config: ExperimentConfig, seed: int):
    if config.dataset == "synthetic-1d":
        return gen_synthetic_1d(config.n, config.gamma, seed)
    if config.dataset == "synthetic-2d":
        return gen_synthetic_2d(config.n, config.gamma, seed)
    if config.dataset.endswith(".csv"):
        csv_path, schema = config.dataset, _resolve_schema(replace(config, dataset=Path(config.dataset).stem))
    else:
        if not config.csv:
            raise ValidationError(f"dataset {config.dataset!r} needs a 'csv' path to a user-supplied file")
        csv_path, schema = config.csv, _resolve_schema(config)
    return load_csv(csv_path, schema)


def prepare_split(config: ExperimentConfig, seed: int, raw=None) -> Split:
    """Split one seed's data; real targets are scaled with training statistics only."""
    raw = load_raw(config, seed) if raw is None else raw
    train, test = stratified_split(raw, config.test_fraction, seed)
    if test is None:
        raise ValidationError("test split is empty; raise test_fraction")
    if config.dataset in SYNTHETIC:
        return Split(train, test)
    scaler = TargetScaler.fit(train.target)
    return Split(scaler.apply(train), scaler.apply(test), scaler)


def fit_estimators(config: ExperimentConfig, train):
    if config.base == "oracle":
        base = OracleRegressor(oracle_eta_1d if config.dataset == "synthetic-1d" else oracle_eta_2d)
    else:
        base = fit_ols(train.features, train.target)
    if config.classifier == "oracle":
        fn = oracle_posterior_1d if config.dataset == "synthetic-1d" else oracle_posterior_2d
        gamma = config.gamma
        classifier = OraclePosterior(lambda X: fn(X, gamma))
    else:
        classifier = fit_logistic(train.features, train.sensitive)
    return base, classifier


# -- sweep ---------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRecord:
    method: str
    lam: float | None
    report: FairnessReport
    seed: int
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class _SeedContext:
    config: ExperimentConfig
    split: Split
    base: object
    classifier: object
    priors: GroupPriors
    h_train: np.ndarray
    h_test: np.ndarray


def _context(config: ExperimentConfig, seed: int, raw=None) -> _SeedContext:
    split = prepare_split(config, seed, raw)
    base, classifier = fit_estimators(config, split.train)
    priors = GroupPriors.from_dataset(split.train)
    h_train = np.asarray(base.predict(split.train.features), dtype=float).reshape(-1)
    h_test = np.asarray(base.predict(split.test.features), dtype=float).reshape(-1)
    return _SeedContext(config, split, base, classifier, priors, h_train, h_test)


def predict_method(ctx: _SeedContext, method: str, lam) -> np.ndarray:
    """Test-split predictions of ``method`` at penalty weight ``lam``."""
    test = ctx.split.test
    if method == "ERM":
        return ctx.h_test
    if method.startswith("OT-U"):
        penalty = Penalty.W2 if method.endswith("W2") else Penalty.TV
        cfg = RelaxationConfig(penalty, Setting.UNAWARE, lam, ctx.config.tau)
        fp = fit_fair_predictor(
            ctx.split.train, ctx.base, ctx.classifier, cfg, priors=ctx.priors, k_neighbors=ctx.config.k_neighbors
        )
        return np.asarray(predict_fair(fp, test.features), dtype=float)
    if method.startswith("OT-A"):
        penalty = Penalty.W2 if method.endswith("W2") else Penalty.TV
        maps = AwareTransport.fit(ctx.h_train, ctx.split.train.sensitive, ctx.priors, penalty, lam)
        return np.asarray(maps(ctx.h_test, test.sensitive), dtype=float)
    maps = AwareTransport.fit(ctx.h_train, ctx.split.train.sensitive, ctx.priors, Penalty.W2, lam)
    fn = plug_in_hard if method == "plug-in hard" else plug_in_soft
    return np.asarray(fn(test.features, ctx.base, ctx.classifier, maps), dtype=float)


def _evaluate(ctx: _SeedContext, method: str, lam, seed: int) -> SweepRecord:
    t0 = time.perf_counter()
    pred = predict_method(ctx, method, lam)
    report = build_report(pred, ctx.split.test.target, ctx.split.test.sensitive)
    return SweepRecord(method, lam, report, seed, time.perf_counter() - t0)


def run_sweep(config: ExperimentConfig, *, progress=None) -> list[SweepRecord]:
    """Every (seed, method, lambda) combination, ordered deterministically.

    ``ERM`` is evaluated once per seed with ``lam=None``.
    """
    records = []
    for seed in config.seed_list:
        ctx = _context(config, seed)
        for method in config.methods:
            grid = (None,) if method == "ERM" else config.lambda_grid
            for lam in grid:
                records.append(_evaluate(ctx, method, lam, seed))
                if progress:
                    progress(records[-1])
    return sort_records(records, config.methods)


def sort_records(records, methods=METHODS) -> list[SweepRecord]:
    rank = {m: i for i, m in enumerate(methods)}

    def key(r):
        lam = -1.0 if r.lam is None else r.lam
        return (r.seed, rank.get(r.method, len(rank)), r.method, lam)

    return sorted(records, key=key)


# -- aggregation and output ----------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def aggregate(records) -> dict[tuple[str, float | None], dict[str, tuple[float, float]]]:
    """Mean and sample std (ddof=1; 0 for a single seed) per (method, lambda)."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.method, r.lam), []).append(r.report.as_dict())
    out = {}
    for key, rows in groups.items():
        stats = {}
        for name in FairnessReport.FIELDS:
            v = np.array([row[name] for row in rows])
            stats[name] = (float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0)
        out[key] = stats
    return out


def _ordered_keys(records, agg):
    order = []
    for r in sort_records(records):
        key = (r.method, r.lam)
        if key not in order:
            order.append(key)
    rank = {m: i for i, m in enumerate(METHODS)}
    return sorted(order, key=lambda k: (rank.get(k[0], len(rank)), k[0], -1.0 if k[1] is None else k[1]))


def relative_table(records) -> list[dict]:
    """Means per (method, lambda) divided by the ERM means."""
    agg = aggregate(records)
    ref = agg.get(("ERM", None))
    if ref is None:
        raise ValidationError("relative table needs ERM records")
    rows = []
    for key in _ordered_keys(records, agg):
        stats = agg[key]
        row = {"method": key[0], "lambda": format_lambda(key[1])}
        for col, name in RELATIVE_COLUMNS:
            den = ref[name][0]
            row[col] = stats[name][0] / den if den != 0 else math.nan
        rows.append(row)
    return rows


def write_records(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "method", "lambda", *FairnessReport.FIELDS])
        for r in records:
            w.writerow([r.seed, r.method, format_lambda(r.lam), *(_fmt(v) for v in r.report.as_dict().values())])


def read_records(path) -> list[SweepRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            report = FairnessReport(**{k: float(row[k]) for k in FairnessReport.FIELDS})
            out.append(SweepRecord(row["method"], _parse_lambda_cell(row["lambda"]), report, int(row["seed"])))
    return out


def emit_curves(records, out_dir) -> list[Path]:
    """Write per-metric curve CSVs and the relative table; returns the paths written."""
    records = list(records)
    if not records:
        raise ValidationError("no records to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    agg = aggregate(records)
    keys = _ordered_keys(records, agg)
    written = []
    for metric in CURVE_METRICS:
        path = out_dir / f"curve_{metric}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "lambda", "metric_mean", "metric_std", "mse_mean", "mse_std"])
            for key in keys:
                s = agg[key]
                w.writerow([key[0], format_lambda(key[1]), *map(_fmt, s[metric]), *map(_fmt, s["mse"])])
        written.append(path)
    if ("ERM", None) in agg:
        path = out_dir / "relative.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            cols = [c for c, _ in RELATIVE_COLUMNS]
            w.writerow(["method", "lambda", *cols])
            for row in relative_table(records):
                w.writerow([row["method"], row["lambda"], *(f"{row[c]:.4f}" for c in cols)])
        written.append(path)
    return written


def write_sweep(records, config: ExperimentConfig, out_dir) -> list[Path]:
    """Records CSV, curves, relative table, and a JSON log with wall times.

    The CSVs depend only on the config and seeds; timings go to the log.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_records(records, out_dir / "records.csv")
    paths = [out_dir / "records.csv", *emit_curves(records, out_dir)]
    run_log = {
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in config.__dict__.items()},
        "timings": [
            {"seed": r.seed, "method": r.method, "lambda": format_lambda(r.lam), "seconds": r.wall_time}
            for r in records
        ],
    }
    run_log["config"]["lambda_grid"] = [format_lambda(v) for v in config.lambda_grid]
    (out_dir / "run_log.json").write_text(json.dumps(run_log, indent=1), encoding="utf-8")
    return paths


# -- fairness budget -----------------------------------------------------------


@dataclass(frozen=True)
class BudgetResult:
    lam: float
    ratio: float
    iterations: int
    converged: bool


def match_budget(unfairness, baseline: float, target: float, *, tol: float = BUDGET_TOL,
                 max_iter: int = BUDGET_MAX_ITER, bracket=BUDGET_BRACKET) -> BudgetResult:
    """Find ``lam`` with ``unfairness(lam) / baseline`` within ``tol`` of ``target``.

    Bisection on ``log(lam)``; the ratio is assumed nonincreasing in ``lam``
    up to evaluation noise.  Target 1 returns 0 and target 0 returns
    INFINITE without evaluating anything.
    """
    if not 0.0 <= target <= 1.0:
        raise ValidationError("target fraction must lie in [0, 1]")
    if target == 1.0:
        return BudgetResult(0.0, 1.0, 0, True)
    if target == 0.0:
        return BudgetResult(INFINITE, 0.0, 0, True)
    if not baseline > 0:
        raise ValidationError("baseline unfairness must be positive")

    def ratio(lam):
        return unfairness(lam) / baseline

    lo, hi = bracket
    r_lo, r_hi = ratio(lo), ratio(hi)
    it = 2
    while r_lo < target - tol and lo > 1e-12:
        lo /= 100.0
        r_lo = ratio(lo)
        it += 1
    while r_hi > target + tol and hi < 1e12:
        hi *= 100.0
        r_hi = ratio(hi)
        it += 1
    for lam, r in ((lo, r_lo), (hi, r_hi)):
        if abs(r - target) <= tol:
            return BudgetResult(lam, r, it, True)
    if r_lo < target or r_hi > target:
        raise ValidationError(
            f"target {target} not bracketable: ratio {r_lo:.4f} at lambda={lo:g}, {r_hi:.4f} at lambda={hi:g}"
        )
    best = (lo, r_lo)
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        r = ratio(mid)
        it += 1
        if abs(r - target) < abs(best[1] - target):
            best = (mid, r)
        if abs(r - target) <= tol:
            return BudgetResult(mid, r, it, True)
        if r > target:
            lo = mid
        else:
            hi = mid
    return BudgetResult(best[0], best[1], it, False)


_METRIC_FIELDS = {"w2": "w2", "tv": "tv", "ks": "ks", "ks_grid": "ks_grid", "kst": "ks_grid"}


def budget_for(config: ExperimentConfig, method: str, target: float, metric: str = "w2",
               seed: int | None = None) -> BudgetResult:
    """Budget search for ``method`` on one seed's test split, relative to ERM."""
    if method == "ERM" or method not in METHODS:
        raise ConfigError(f"budget needs a fair method, got {method!r}")
    name = _METRIC_FIELDS.get(metric.lower())
    if name is None:
        raise ConfigError(f"unknown metric {metric!r}; choose from {sorted(_METRIC_FIELDS)}")
    ctx = _context(config, config.seed_offset if seed is None else seed)
    test = ctx.split.test

    def unfairness(lam):
        return getattr(build_report(predict_method(ctx, method, lam), test.target, test.sensitive), name)

    baseline = getattr(build_report(ctx.h_test, test.target, test.sensitive), name)
    return match_budget(unfairness, baseline, target)
