"""Layer-sweep benchmark harness and CSV/JSON report emitter."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import platform
import statistics
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .convops import (
    ConvSpec,
    GroupingStrategy,
    conv_depthwise_cbyc,
    conv_depthwise_diag,
    conv_depthwise_direct,
    conv_standard,
    plan_diagonalwise,
)
from .grad import backward_depthwise, backward_diag, backward_standard
from .lowering import DEFAULT_BLOCK
from .models import (
    DEPTHWISE_STRATEGIES,
    STRATEGIES,
    LayerConfig,
    ModelVariant,
    depthwise_layers,
    layer_cost,
    mobilenet_layers,
)
from .tensor import fill_random, resolve_dtype

log = logging.getLogger(__name__)

CSV_COLUMNS = [
    "layer_index", "layer_config", "strategy", "grouping",
    "fwd_mean_ms", "fwd_median_ms", "fwd_std_ms",
    "bwd_input_mean_ms", "bwd_weights_mean_ms", "total_mean_ms",
    "mult_adds", "params", "workspace_bytes",
]
SEED_ENV = "BENCH_SEED"


@dataclass
class BenchConfig:
    variant: ModelVariant = field(default_factory=ModelVariant)
    layers: list[LayerConfig] | None = None
    strategies: list[str] = field(default_factory=lambda: ["cbyc", "direct", "diag-compact"])
    groupings: list[GroupingStrategy] = field(default_factory=lambda: [GroupingStrategy.none()])
    batch_size: int = 64
    warmup_iters: int = 5
    measured_iters: int = 30
    precision: str = "single"
    seed: int = 0
    skip_weight_grad: bool = False
    output: str = "csv"
    gemm: str = "blocked"
    block: int = DEFAULT_BLOCK
    threads: int = 1

    def validate(self):
        if self.measured_iters < 1:
            raise ValueError("measured_iters must be >= 1")
        if self.warmup_iters < 0:
            raise ValueError("warmup_iters must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not self.strategies:
            raise ValueError("at least one strategy is required")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}; choose from {STRATEGIES}")
        if self.output not in ("csv", "json"):
            raise ValueError(f"unknown output format {self.output!r}")
        if self.gemm not in ("naive", "blocked"):
            raise ValueError(f"unknown gemm variant {self.gemm!r}")
        resolve_dtype(self.precision)

    def sweep_layers(self) -> list[LayerConfig]:
        if self.layers is not None:
            return list(self.layers)
        return depthwise_layers(mobilenet_layers(self.variant))


@dataclass
class TimingStats:
    mean: float
    median: float
    std: float
    min: float
    samples: list[float] = field(default_factory=list, repr=False)

    @classmethod
    def of(cls, samples) -> "TimingStats":
        samples = [float(s) for s in samples]
        std = statistics.stdev(samples) if len(samples) > 1 else 0.0
        return cls(statistics.fmean(samples), statistics.median(samples), std,
                   min(samples), samples)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "median": self.median, "std": self.std, "min": self.min}


@dataclass
class BenchRow:
    layer_index: int | str
    layer_config: str
    strategy: str
    grouping: str
    status: str = "ok"  # ok | n/a | error
    error: str | None = None
    forward: TimingStats | None = None
    backward_input: TimingStats | None = None
    backward_weights: TimingStats | None = None
    total: TimingStats | None = None
    mult_adds: int | None = None
    params: int | None = None
    workspace_bytes: int | None = None

    def flat(self) -> dict:
        """The report fields keyed by CSV column; missing values are None."""
        def stat(s, attr):
            return None if s is None else getattr(s, attr)

        return {
            "layer_index": self.layer_index,
            "layer_config": self.layer_config,
            "strategy": self.strategy,
            "grouping": self.grouping,
            "fwd_mean_ms": stat(self.forward, "mean"),
            "fwd_median_ms": stat(self.forward, "median"),
            "fwd_std_ms": stat(self.forward, "std"),
            "bwd_input_mean_ms": stat(self.backward_input, "mean"),
            "bwd_weights_mean_ms": stat(self.backward_weights, "mean"),
            "total_mean_ms": stat(self.total, "mean"),
            "mult_adds": self.mult_adds,
            "params": self.params,
            "workspace_bytes": self.workspace_bytes,
        }


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    totals: list[BenchRow] = field(default_factory=list)
    environment: dict = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return any(r.status == "error" for r in self.rows)

    def data_rows(self) -> list[BenchRow]:
        return [r for r in self.rows if r.status == "ok"]


class BenchCase:
    """Inputs and bound callables for one (layer, strategy, grouping) cell."""

    def __init__(self, layer: LayerConfig, strategy: str, grouping: GroupingStrategy,
                 config: BenchConfig, seed: int):
        self.layer = layer
        self.strategy = strategy
        dtype = resolve_dtype(config.precision)
        B, F = config.batch_size, layer.in_size
        M, N = layer.in_channels, layer.out_channels
        base = seed + 7919 * layer.index
        g, blk = config.gemm, config.block
        self.x = fill_random((B, M, F, F), base + 1, dtype)
        kind = "dense"
        if layer.is_depthwise and strategy != "standard":
            spec = layer.conv_spec()
            w = fill_random((M, spec.patch_size), base + 2, dtype)
            kind = strategy
        else:
            spec = layer.conv_spec()
            if layer.is_depthwise:  # standard baseline: dense M -> M conv of the same shape
                spec = ConvSpec.dense(M, M, layer.kernel, layer.stride, layer.padding)
            w = fill_random(spec.weight_shape, base + 2, dtype)
        self.spec = spec
        self.w = w
        self.d_output = fill_random(spec.output_shape(self.x.shape), base + 3, dtype)
        x, d = self.x, self.d_output

        if kind == "dense":
            self.forward = lambda: conv_standard(x, w, spec, g, blk)
            self.back_in = lambda: backward_standard(x, w, spec, d, g, blk, need_weights=False)
            self.back_w = lambda: backward_standard(x, w, spec, d, g, blk, need_input=False)
        elif kind in ("cbyc", "direct"):
            if kind == "cbyc":
                self.forward = lambda: conv_depthwise_cbyc(x, w, spec, g, blk)
            else:
                self.forward = lambda: conv_depthwise_direct(x, w, spec)
            self.back_in = lambda: backward_depthwise(x, w, spec, d, kind, True, g, blk)
            self.back_w = lambda: backward_depthwise(x, w, spec, d, kind, False, g, blk,
                                                     need_input=False)
        else:
            mode = "literal" if kind == "diag-literal" else "compact"
            plan = plan_diagonalwise(w, spec, grouping, mode)
            self.forward = lambda: conv_depthwise_diag(x, plan, spec, g, blk)
            self.back_in = lambda: backward_diag(x, plan, spec, d, g, blk, need_weights=False)
            self.back_w = lambda: backward_diag(x, plan, spec, d, g, blk, need_input=False)


def _time_ms(fn) -> float:
    t0 = time.perf_counter_ns()
    fn()
    return (time.perf_counter_ns() - t0) / 1e6


def _measure(case: BenchCase, config: BenchConfig):
    for _ in range(config.warmup_iters):
        case.forward()
        case.back_in()
        if not config.skip_weight_grad:
            case.back_w()
    fwd, bin_, bw, tot = [], [], [], []
    for _ in range(config.measured_iters):
        f = _time_ms(case.forward)
        i = _time_ms(case.back_in)
        w = 0.0 if config.skip_weight_grad else _time_ms(case.back_w)
        fwd.append(f)
        bin_.append(i)
        bw.append(w)
        tot.append(f + i + w)
    return (TimingStats.of(fwd), TimingStats.of(bin_),
            None if config.skip_weight_grad else TimingStats.of(bw), TimingStats.of(tot))


def effective_seed(config: BenchConfig) -> int:
    env = os.environ.get(SEED_ENV)
    return int(env) if env not in (None, "") else config.seed


def _cells(layer: LayerConfig, config: BenchConfig):
    for strategy in config.strategies:
        if strategy.startswith("diag"):
            for grouping in config.groupings:
                yield strategy, grouping
        else:
            yield strategy, GroupingStrategy.none()


def run_bench(config: BenchConfig) -> BenchReport:
    """Time every (layer, strategy, grouping) cell of the sweep.

    Depthwise strategies on dense layers give ``n/a`` rows; a grouping that
    does not fit a layer gives an ``error`` row and the sweep continues.
    """
    config.validate()
    seed = effective_seed(config)
    itemsize = resolve_dtype(config.precision).itemsize
    report = BenchReport()
    with threadpool_limits(limits=config.threads):
        for layer in config.sweep_layers():
            for strategy, grouping in _cells(layer, config):
                row = BenchRow(layer.index, layer.label(), strategy, str(grouping))
                report.rows.append(row)
                if strategy in DEPTHWISE_STRATEGIES and not layer.is_depthwise:
                    row.status = "n/a"
                    continue
                try:
                    cost = layer_cost(layer, strategy, grouping, itemsize)
                    case = BenchCase(layer, strategy, grouping, config, seed)
                except ValueError as exc:
                    row.status, row.error = "error", str(exc)
                    log.warning("layer %s %s %s: %s", layer.index, strategy, grouping, exc)
                    continue
                row.mult_adds = cost.mult_adds
                row.params = cost.parameters
                row.workspace_bytes = cost.workspace_bytes
                row.forward, row.backward_input, row.backward_weights, row.total = \
                    _measure(case, config)
                log.info("layer %s %s %s fwd %.3f ms", layer.index, strategy, grouping,
                         row.forward.mean)
    report.totals = _totals(report.rows)
    report.environment = {
        "precision": config.precision,
        "gemm": config.gemm,
        "block": config.block,
        "threads": config.threads,
        "batch_size": config.batch_size,
        "warmup_iters": config.warmup_iters,
        "measured_iters": config.measured_iters,
        "seed": seed,
        "skip_weight_grad": config.skip_weight_grad,
        "variant": config.variant.describe(),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "machine": platform.machine(),
    }
    return report


def _sum_stat(rows, attr):
    stats = [getattr(r, attr) for r in rows]
    if not stats or any(s is None for s in stats):
        return None
    mean = math.fsum(s.mean for s in stats)
    return TimingStats(mean, math.nan, math.nan, math.nan)


def _totals(rows) -> list[BenchRow]:
    keys = []
    for r in rows:
        if r.status == "ok" and (r.strategy, r.grouping) not in keys:
            keys.append((r.strategy, r.grouping))
    totals = []
    for strategy, grouping in keys:
        sel = [r for r in rows if r.status == "ok" and r.strategy == strategy
               and r.grouping == grouping]
        t = BenchRow("total", f"{len(sel)} layers", strategy, grouping)
        t.forward = _sum_stat(sel, "forward")
        t.backward_input = _sum_stat(sel, "backward_input")
        t.backward_weights = _sum_stat(sel, "backward_weights")
        t.total = _sum_stat(sel, "total")
        t.mult_adds = sum(r.mult_adds for r in sel)
        t.params = sum(r.params for r in sel)
        t.workspace_bytes = sum(r.workspace_bytes for r in sel)
        totals.append(t)
    return totals


def _csv_cell(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


def _json_value(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def report_to_csv(report: BenchReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.rows + report.totals:
        flat = row.flat()
        writer.writerow([_csv_cell(flat[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _row_json(row: BenchRow) -> dict:
    d = {k: _json_value(v) for k, v in row.flat().items()
         if k not in ("layer_index", "layer_config")}
    d["status"] = row.status
    d["error"] = row.error
    for name in ("forward", "backward_input", "backward_weights", "total"):
        s = getattr(row, name)
        d[f"{name}_ms"] = None if s is None else {k: _json_value(v)
                                                  for k, v in s.to_dict().items()}
    return d


def report_to_dict(report: BenchReport) -> dict:
    layers = []
    by_index = {}
    for row in report.rows:
        if row.layer_index not in by_index:
            entry = {"layer_index": row.layer_index, "layer_config": row.layer_config,
                     "rows": []}
            by_index[row.layer_index] = entry
            layers.append(entry)
        by_index[row.layer_index]["rows"].append(_row_json(row))
    totals = []
    for t in report.totals:
        d = _row_json(t)
        d["layer_index"] = "total"
        d["layer_config"] = t.layer_config
        totals.append(d)
    return {"columns": CSV_COLUMNS, "environment": report.environment,
            "layers": layers, "totals": totals}


def emit_report(report: BenchReport, fmt: str = "csv", path=None) -> str:
    """Render ``report`` as CSV or JSON; write it to ``path`` when given."""
    if fmt == "csv":
        text = report_to_csv(report)
    elif fmt == "json":
        text = json.dumps(report_to_dict(report), indent=2) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        path = Path(path)
        try:
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc}") from exc
    return text
