"""Experiment driver: config parsing, runs, sweeps, CSV output.

Configs are YAML files; see README.md for the full schema. Per-run detail
CSVs (latency, decisions, predictions, transmissions, windows, batches) land
in ``<out_dir>/<run_id>/`` and one summary row per completed run is appended
to ``<out_dir>/summary.csv``. Summary rows are only written after a run
finished, so an aborted sweep never leaves truncated rows.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import math
import random
import statistics
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .core import ConfigurationError, Event
from .latency_model import (
    ModelParams,
    gains_from_event_values,
    predict,
    predict_peak,
)
from .runtime import RunMetrics, run
from .scheduler import SchedulerConfig
from .splitter import StreamStats
from .workload import (
    BurstIat,
    ConstantIat,
    CostModel,
    ExponentialIat,
    IatProfile,
    ScopeProfile,
    SinusoidalExponentialIat,
    WorkloadConfig,
)

SUMMARY_HEADER = ["run_id", "scheduler", "param", "max_lo", "p99_lo", "transmissions", "violations"]


@dataclass
class SweepSpec:
    field: str
    values: list[Any]


@dataclass
class ExperimentConfig:
    workload: WorkloadConfig
    scheduler: SchedulerConfig
    model: ModelParams
    mtime_ms: float = 60_000.0
    feedback_interval_ms: float | None = None  # default mtime/10
    transfer_delay_ms: float = 0.0
    feedback_delivery_delay_ms: float = 0.0
    warmup_ms: float = 0.0
    lb_eval_ms: float | None = None  # bound used for violation accounting
    run_id: str = "run"
    seed: int = 0
    out_dir: str = "results"
    sweep: list[SweepSpec] = field(default_factory=list)

    @property
    def effective_lb_eval_ms(self) -> float | None:
        if self.lb_eval_ms is not None:
            return self.lb_eval_ms
        return self.scheduler.lb_ms


# ---------------------------------------------------------------------------
# Config building


def _check_keys(d: Mapping, allowed: set[str], path: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigurationError(f"{path}: unknown key(s) {sorted(unknown)}")


def _num(d: Mapping, key: str, path: str, default=None, required=False) -> Any:
    if key not in d:
        if required:
            raise ConfigurationError(f"{path}.{key} is required")
        return default
    v = d[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ConfigurationError(f"{path}.{key} must be a number, got {v!r}")
    return v


def _build_iat(d: Any, path: str) -> IatProfile:
    if not isinstance(d, Mapping):
        raise ConfigurationError(f"{path} must be a mapping with a 'kind' key")
    kind = d.get("kind")
    if kind == "constant":
        _check_keys(d, {"kind", "mu_ms"}, path)
        return ConstantIat(_num(d, "mu_ms", path, required=True))
    if kind == "exponential":
        _check_keys(d, {"kind", "mu_ms"}, path)
        return ExponentialIat(_num(d, "mu_ms", path, required=True))
    if kind == "sinusoidal_exponential":
        _check_keys(d, {"kind", "mu_min_ms", "mu_max_ms", "period_ms"}, path)
        return SinusoidalExponentialIat(
            _num(d, "mu_min_ms", path, required=True),
            _num(d, "mu_max_ms", path, required=True),
            _num(d, "period_ms", path, required=True),
        )
    if kind == "burst":
        _check_keys(d, {"kind", "burst_size", "intra_gap_ms", "inter_gap_ms"}, path)
        return BurstIat(
            int(_num(d, "burst_size", path, required=True)),
            _num(d, "intra_gap_ms", path, required=True),
            _num(d, "inter_gap_ms", path, required=True),
        )
    raise ConfigurationError(
        f"{path}.kind must be constant|exponential|sinusoidal_exponential|burst, got {kind!r}"
    )


def _build_cost(d: Any, path: str) -> CostModel:
    if not isinstance(d, Mapping):
        raise ConfigurationError(f"{path} must be a mapping")
    _check_keys(d, {"kind", "base_ms", "incr_ms", "build_etype", "probe_etype"}, path)
    base = d.get("base_ms")
    if not isinstance(base, Mapping) or not base:
        raise ConfigurationError(f"{path}.base_ms must be a non-empty mapping of etype to ms")
    return CostModel(
        kind=d.get("kind", "flat_per_type"),
        base_ms={str(k): float(v) for k, v in base.items()},
        incr_ms=_num(d, "incr_ms", path, default=0.0),
        build_etype=str(d.get("build_etype", "L1")),
        probe_etype=str(d.get("probe_etype", "L2")),
    )


def _build_workload(d: Any, seed: int, path: str = "workload") -> WorkloadConfig:
    if not isinstance(d, Mapping):
        raise ConfigurationError(f"{path} section is required")
    _check_keys(
        d,
        {"scenario", "duration_ms", "iat", "scope", "opener", "opener_etype", "type_mix", "cost", "cost_jitter_sigma"},
        path,
    )
    scope_d = d.get("scope", {})
    if not isinstance(scope_d, Mapping):
        raise ConfigurationError(f"{path}.scope must be a mapping")
    _check_keys(scope_d, {"ws_min_ms", "ws_max_ms", "ws_ms"}, f"{path}.scope")
    scope = ScopeProfile(
        ws_min_ms=_num(scope_d, "ws_min_ms", f"{path}.scope"),
        ws_max_ms=_num(scope_d, "ws_max_ms", f"{path}.scope"),
        ws_ms=_num(scope_d, "ws_ms", f"{path}.scope"),
    )
    type_mix = d.get("type_mix")
    if type_mix is not None:
        if not isinstance(type_mix, Mapping):
            raise ConfigurationError(f"{path}.type_mix must be a mapping of etype to probability")
        type_mix = {str(k): float(v) for k, v in type_mix.items()}
    scenario = d.get("scenario")
    if "cost" not in d:
        raise ConfigurationError(f"{path}.cost is required")
    cfg = WorkloadConfig(
        scenario=str(scenario),
        seed=seed,
        duration_ms=_num(d, "duration_ms", path, default=60_000.0),
        iat=_build_iat(d.get("iat", {"kind": "constant", "mu_ms": 1000.0}), f"{path}.iat"),
        scope=scope,
        opener=_build_iat(d["opener"], f"{path}.opener") if d.get("opener") is not None else None,
        opener_etype=str(d.get("opener_etype", "query")),
        type_mix=type_mix,
        cost=_build_cost(d["cost"], f"{path}.cost"),
        cost_jitter_sigma=_num(d, "cost_jitter_sigma", path, default=0.0),
    )
    cfg.validate()
    return cfg


def _build_model(d: Any, path: str = "model") -> ModelParams:
    d = d or {}
    if not isinstance(d, Mapping):
        raise ConfigurationError(f"{path} must be a mapping")
    _check_keys(
        d,
        {"n_iat_bins", "n_lat_bins", "delta_iat", "delta_lp", "alpha_mode", "alpha_fixed", "iat_floor_ms"},
        path,
    )
    params = ModelParams(
        n_iat_bins=int(_num(d, "n_iat_bins", path, default=8)),
        n_lat_bins=int(_num(d, "n_lat_bins", path, default=4)),
        delta_iat=_num(d, "delta_iat", path, default=0.0),
        delta_lp=_num(d, "delta_lp", path, default=0.0),
        alpha_mode=str(d.get("alpha_mode", "tcount")),
        alpha_fixed=_num(d, "alpha_fixed", path, default=0.0),
        iat_floor_ms=_num(d, "iat_floor_ms", path, default=0.01),
    )
    params.validate()
    return params


def _build_scheduler(d: Any, model: ModelParams, path: str = "scheduler") -> SchedulerConfig:
    if not isinstance(d, Mapping):
        raise ConfigurationError(f"{path} section is required")
    _check_keys(d, {"kind", "n_instances", "th_ms", "lb_ms"}, path)
    lb = d.get("lb_ms")
    if isinstance(lb, str) and lb in ("inf", ".inf", "infinity"):
        lb = float("inf")
    elif lb is not None:
        lb = _num(d, "lb_ms", path)
    cfg = SchedulerConfig(
        kind=str(d.get("kind", "round_robin")),
        n_instances=int(_num(d, "n_instances", path, default=1)),
        th_ms=_num(d, "th_ms", path),
        lb_ms=lb,
        model=model,
    )
    cfg.validate()
    return cfg


def build_experiment(raw: Any) -> ExperimentConfig:
    """Turn a parsed YAML mapping into a validated ExperimentConfig."""
    if not isinstance(raw, Mapping):
        raise ConfigurationError("config root must be a mapping")
    _check_keys(raw, {"run_id", "seed", "out_dir", "workload", "scheduler", "model", "sim", "sweep"}, "config")
    seed = int(_num(raw, "seed", "config", default=0))
    model = _build_model(raw.get("model"))
    sim = raw.get("sim") or {}
    if not isinstance(sim, Mapping):
        raise ConfigurationError("sim must be a mapping")
    _check_keys(
        sim,
        {"mtime_ms", "feedback_interval_ms", "transfer_delay_ms", "feedback_delivery_delay_ms", "warmup_ms", "lb_eval_ms"},
        "sim",
    )
    sweep_raw = raw.get("sweep") or []
    if not isinstance(sweep_raw, Sequence) or isinstance(sweep_raw, str):
        raise ConfigurationError("sweep must be a list of {field, values} entries")
    sweep = []
    for i, entry in enumerate(sweep_raw):
        if not isinstance(entry, Mapping) or "field" not in entry or "values" not in entry:
            raise ConfigurationError(f"sweep[{i}] must have 'field' and 'values'")
        values = entry["values"]
        if not isinstance(values, Sequence) or isinstance(values, str) or not values:
            raise ConfigurationError(f"sweep[{i}].values must be a non-empty list")
        sweep.append(SweepSpec(str(entry["field"]), list(values)))
    mtime = _num(sim, "mtime_ms", "sim", default=60_000.0)
    if mtime <= 0:
        raise ConfigurationError(f"sim.mtime_ms must be > 0, got {mtime}")
    cfg = ExperimentConfig(
        workload=_build_workload(raw.get("workload"), seed),
        scheduler=_build_scheduler(raw.get("scheduler"), model),
        model=model,
        mtime_ms=mtime,
        feedback_interval_ms=_num(sim, "feedback_interval_ms", "sim"),
        transfer_delay_ms=_num(sim, "transfer_delay_ms", "sim", default=0.0),
        feedback_delivery_delay_ms=_num(sim, "feedback_delivery_delay_ms", "sim", default=0.0),
        warmup_ms=_num(sim, "warmup_ms", "sim", default=0.0),
        lb_eval_ms=_num(sim, "lb_eval_ms", "sim"),
        run_id=str(raw.get("run_id", "run")),
        seed=seed,
        out_dir=str(raw.get("out_dir", "results")),
        sweep=sweep,
    )
    # validate sweep paths against the raw config
    for spec in cfg.sweep:
        _get_by_path(raw, spec.field)
    return cfg


def _get_by_path(raw: Mapping, path: str) -> Any:
    node: Any = raw
    for part in path.split("."):
        if not isinstance(node, Mapping) or part not in node:
            raise ConfigurationError(f"sweep field {path!r} does not exist in the config")
        node = node[part]
    return node


def _set_by_path(raw: dict, path: str, value: Any) -> None:
    parts = path.split(".")
    node = raw
    for part in parts[:-1]:
        node = node[part]
    node[parts[-1]] = value


def load_config(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raise ConfigurationError(f"config {path} is empty")
    return raw


# ---------------------------------------------------------------------------
# CSV output


def _fmt(v: Any) -> Any:
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_run_outputs(run_dir: Path, metrics: RunMetrics) -> None:
    """Write all per-run detail CSVs into ``run_dir``."""
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(
        run_dir / "latency.csv",
        ["seq", "instance", "lambda_q", "lambda_p", "lambda_o", "ts"],
        (
            (s.event_seq, s.instance, s.lambda_q, s.lambda_p, s.lambda_o, ts)
            for s, ts in zip(metrics.latency_samples, metrics.sample_ts)
        ),
    )
    _write_csv(
        run_dir / "decisions.csv",
        ["wid", "instance", "predicted_lambda_o_max", "kind"],
        (
            (
                d.wid,
                d.instance,
                _fmt(d.prediction.lambda_o_max) if d.prediction is not None
                else (_fmt(d.observed_lambda_o) if d.observed_lambda_o is not None else ""),
                d.kind,
            )
            for d in metrics.decisions
        ),
    )
    _write_csv(
        run_dir / "predictions.csv",
        ["wid", "theta_hat", "theta_bar", "n", "gamma_minus", "gamma_plus", "alpha",
         "lambda_q_init", "lambda_o_max", "instance", "flags"],
        (
            (
                d.wid, p.theta_hat, p.theta_bar, p.n, p.gamma_minus, p.gamma_plus,
                p.alpha, p.lambda_q_init, p.lambda_o_max, d.instance, "|".join(p.flags),
            )
            for d in metrics.decisions
            if (p := d.prediction) is not None
        ),
    )
    _write_csv(
        run_dir / "transmissions.csv",
        ["seq", "ts", "n_member_windows", "n_instances"],
        metrics.transmission_rows,
    )
    _write_csv(
        run_dir / "windows.csv",
        ["wid", "open_ts", "close_ts", "instance", "n_member_events",
         "actual_gamma_minus", "actual_gamma_plus", "actual_lambda_q_peak"],
        (
            (
                w.wid, w.open_ts, w.close_ts if w.close_ts is not None else "",
                w.instance, w.n_member_events, w.actual_gamma_minus,
                w.actual_gamma_plus, w.actual_lambda_q_peak,
            )
            for w in metrics.windows
        ),
    )
    _write_csv(
        run_dir / "batches.csv",
        ["batch_id", "instance", "first_decision_ts", "n_windows",
         "lat_peak", "lat_peak_delay_ms", "qlen_peak", "qlen_peak_delay_ms"],
        (
            (
                fd.batch_id, fd.instance, fd.first_decision_ts, fd.n_windows,
                fd.lat_peak, fd.lat_peak_delay_ms, fd.qlen_peak, fd.qlen_peak_delay_ms,
            )
            for fd in metrics.feedback_delays()
        ),
    )


def p99(values: Sequence[float]) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    idx = max(0, math.ceil(0.99 * len(ordered)) - 1)
    return ordered[idx]


def summary_row(cfg: ExperimentConfig, metrics: RunMetrics, run_id: str | None = None) -> list:
    los = metrics.lambda_o_values(cfg.warmup_ms)
    lb = cfg.effective_lb_eval_ms
    violations = 0
    if lb is not None:
        violations = metrics.violation_stats(lb, cfg.warmup_ms)[0]
    sched = cfg.scheduler
    param = ""
    if sched.kind == "model_based":
        param = repr(float(sched.lb_ms))
    elif sched.kind == "reactive":
        param = repr(float(sched.th_ms))
    return [
        run_id or cfg.run_id,
        sched.kind,
        param,
        repr(max(los) if los else 0.0),
        repr(p99(los)),
        metrics.transmissions,
        violations,
    ]


def append_summary(out_dir: Path, row: Sequence) -> None:
    path = out_dir / "summary.csv"
    fresh = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if fresh:
            w.writerow(SUMMARY_HEADER)
        w.writerow(row)
        fh.flush()


# ---------------------------------------------------------------------------
# Commands


def _apply_overrides(raw: dict, seed: int | None, out: str | None) -> dict:
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out_dir"] = out
    return raw


def cmd_run(args: argparse.Namespace) -> int:
    raw = _apply_overrides(load_config(args.config), args.seed, args.out)
    cfg = build_experiment(raw)
    out_dir = Path(cfg.out_dir)
    metrics = run(cfg)
    write_run_outputs(out_dir / cfg.run_id, metrics)
    row = summary_row(cfg, metrics)
    append_summary(out_dir, row)
    print(
        f"{cfg.run_id}: scheduler={cfg.scheduler.kind} events={metrics.n_events} "
        f"samples={len(metrics.latency_samples)} transmissions={metrics.transmissions} "
        f"max_lo={row[3]} p99_lo={row[4]} violations={row[6]}"
    )
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    raw = _apply_overrides(load_config(args.config), args.seed, args.out)
    cfg = build_experiment(raw)
    if not cfg.sweep:
        raise ConfigurationError("config has no sweep section")
    out_dir = Path(cfg.out_dir)
    fields = [s.field for s in cfg.sweep]
    for combo in itertools.product(*(s.values for s in cfg.sweep)):
        raw_i = yaml.safe_load(yaml.safe_dump(raw))  # deep copy
        for fpath, value in zip(fields, combo):
            _set_by_path(raw_i, fpath, value)
        label = "_".join(f"{f.split('.')[-1]}={v}" for f, v in zip(fields, combo))
        cfg_i = build_experiment(raw_i)
        run_id = f"{cfg.run_id}_{label}"
        metrics = run(cfg_i)
        write_run_outputs(out_dir / run_id, metrics)
        row = summary_row(cfg_i, metrics, run_id=run_id)
        append_summary(out_dir, row)
        print(f"{run_id}: max_lo={row[3]} p99_lo={row[4]} transmissions={row[5]} violations={row[6]}")
    return 0


SELFTEST_LAMBDAS = [8.0, 8.0, 7.0, 7.0, 4.0, 4.0, 2.0]
SELFTEST_IAT = 5.0


def cmd_selftest_fig45(args: argparse.Namespace | None = None) -> int:
    """Recompute the worked gains example and the queuing peaks it implies."""
    gamma_minus, gamma_plus = gains_from_event_values(SELFTEST_LAMBDAS, SELFTEST_IAT)
    ok = gamma_minus == 10.0 and gamma_plus == -5.0
    print(f"gamma_minus={gamma_minus} gamma_plus={gamma_plus}")
    expected = {0.0: 10.0, 0.8: 6.0, 1.0: 5.0}
    for alpha, want in expected.items():
        lq, _ = predict_peak(gamma_minus, gamma_plus, alpha, 0.0, 0.0)
        print(f"alpha={alpha} lambda_q_max={lq}")
        ok = ok and lq == want
    print("selftest-fig45:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def _synthetic_snapshot(n_types: int, n_iat_bins: int, n_lat_bins: int, entries: int = 4000, seed: int = 7):
    """A warmed-up snapshot with n_iat_bins + n_types * n_lat_bins bins."""
    rng = random.Random(seed)
    stats = StreamStats(n_iat_bins, n_lat_bins, mtime_ms=1e12)
    etypes = [f"T{i}" for i in range(n_types)]
    ts = 0
    prev = None
    for i in range(entries):
        ts += rng.randint(1, 40)
        e = Event(i, ts, etypes[i % n_types])
        stats.observe_event(e, prev)
        prev = ts
        stats.observe_latency(e.etype, rng.uniform(1.0, 10.0) * (1 + i % n_types))
    stats.observe_window_opened(0.0)
    stats.observe_window_opened(1000.0)
    stats.observe_window_closed(10_000.0)
    stats.end_monitoring_window(float(ts))
    # second window so bin ranges are warmed
    prev = ts
    for i in range(entries):
        ts += rng.randint(1, 40)
        e = Event(entries + i, ts, etypes[i % n_types])
        stats.observe_event(e, prev)
        prev = ts
        stats.observe_latency(e.etype, rng.uniform(1.0, 10.0) * (1 + i % n_types))
    return stats.end_monitoring_window(float(ts))


def bench_decision_ms(total_bins: int = 32, calls: int = 2001) -> float:
    """Median model-based decision time in ms with ``total_bins`` bins."""
    n_types = 3
    n_lat_bins = max(1, (total_bins - 8) // n_types)
    snapshot = _synthetic_snapshot(n_types, 8, n_lat_bins)
    params = ModelParams(n_iat_bins=8, n_lat_bins=n_lat_bins, delta_iat=0.5, delta_lp=0.5)
    queued = {"T0": 3, "T1": 2, "T2": 1}
    times = []
    for i in range(calls):
        t0 = time.perf_counter()
        predict(snapshot, theta_hat=4 + i % 4, params=params, queued_counts=queued, theta_bar_rep=1.5)
        times.append(time.perf_counter() - t0)
    return statistics.median(times) * 1000.0


def bench_stats_update_s(entries: int, n_bins: int = 32, seed: int = 11) -> float:
    """Seconds to feed ``entries`` monitoring observations and freeze."""
    rng = random.Random(seed)
    gaps = [rng.randint(1, 40) for _ in range(entries)]
    lats = [rng.uniform(1.0, 10.0) for _ in range(entries)]
    stats = StreamStats(n_iat_bins=n_bins // 2, n_lat_bins=n_bins // 2, mtime_ms=1e15)
    t0 = time.perf_counter()
    ts = 0
    prev = None
    for i in range(entries):
        ts += gaps[i]
        stats.observe_event(Event(i, ts, "T0"), prev)
        prev = ts
        stats.observe_latency("T0", lats[i])
    stats.end_monitoring_window(float(ts))
    return time.perf_counter() - t0


def cmd_bench(args: argparse.Namespace) -> int:
    dec = bench_decision_ms(total_bins=args.bins)
    print(f"model-based decision, {args.bins} bins: median {dec:.4f} ms")
    small = bench_stats_update_s(args.entries // 10)
    large = bench_stats_update_s(args.entries)
    ratio = large / small if small > 0 else float("inf")
    print(
        f"statistics update: {args.entries // 10} entries {small * 1000:.1f} ms, "
        f"{args.entries} entries {large * 1000:.1f} ms (ratio {ratio:.1f})"
    )
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cepsim",
        description="Window-based data-parallel CEP simulator with batch-scheduling controllers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the sweep defined in a config file")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_self = sub.add_parser("selftest-fig45", help="check the worked gains example")
    p_self.set_defaults(func=cmd_selftest_fig45)

    p_bench = sub.add_parser("bench-scheduling-latency", help="measure decision and statistics-update cost")
    p_bench.add_argument("--bins", type=int, default=32)
    p_bench.add_argument("--entries", type=int, default=1_000_000)
    p_bench.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
