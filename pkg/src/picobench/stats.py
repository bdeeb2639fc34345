"""Summaries, prediction stability and two-run comparison."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional

from .errors import EmptySeries, MissingMetric, NonFiniteValue

log = logging.getLogger(__name__)

PERCENTILES = (50, 90, 95, 99)

# metric name -> accessor on an IterationRecord; None values are skipped
METRICS = {
    "latency_ms": lambda r: r.latency_ms,
    "cpu_pct": lambda r: r.cpu_pct,
    "mem_pct": lambda r: r.mem_pct_after,
    "confidence": lambda r: r.confidence,
}


@dataclass(frozen=True)
class MetricSummary:
    count: int
    mean: float
    std: float
    min: float
    max: float
    p50: float
    p90: float
    p95: float
    p99: float

    def to_dict(self) -> dict:
        return asdict(self)


def percentile_sorted(s, p) -> float:
    """Linear interpolation at rank ``p/100 * (n-1)`` over already sorted values."""
    rank = p * (len(s) - 1) / 100
    lo = math.floor(rank)
    hi = math.ceil(rank)
    v = s[lo] + (rank - lo) * (s[hi] - s[lo])
    return min(max(v, s[lo]), s[hi])


def summarize(values) -> MetricSummary:
    values = [float(v) for v in values]
    if not values:
        raise EmptySeries("cannot summarize an empty series")
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteValue("series contains NaN or infinity")
    s = sorted(values)
    n = len(s)
    if s[0] == s[-1]:
        mean, std = s[0], 0.0
    else:
        try:
            mean = math.fsum(s) / n
            std = math.sqrt(math.fsum((v - mean) ** 2 for v in s) / (n - 1))
        except OverflowError:
            raise NonFiniteValue("series statistics overflow the double range") from None
    return MetricSummary(n, mean, std, s[0], s[-1],
                         *(percentile_sorted(s, p) for p in PERCENTILES))


def metric_values(records, metric: str) -> list:
    try:
        get = METRICS[metric]
    except KeyError:
        raise MissingMetric(f"unknown metric {metric!r}") from None
    return [v for v in map(get, records) if v is not None]


def summarize_records(records) -> dict:
    """Summaries for every metric that has at least one value, in METRICS order."""
    out = {}
    for name in METRICS:
        values = metric_values(records, name)
        if values:
            out[name] = summarize(values)
    return out


@dataclass(frozen=True)
class StabilityReport:
    confidence_mean: float
    confidence_std: float
    label_histogram: dict
    distinct_labels: int


def stability(records) -> StabilityReport:
    records = list(records)
    if not records:
        raise EmptySeries("stability needs at least one record")
    conf = summarize(r.confidence for r in records)
    hist = Counter(r.predicted_label for r in records)
    return StabilityReport(conf.mean, conf.std, dict(sorted(hist.items())), len(hist))


@dataclass(frozen=True)
class MetricComparison:
    value_a: float
    value_b: float
    ratio: Optional[float]  # None when value_b == 0
    delta: float


@dataclass
class ComparisonReport:
    model_a: str
    model_b: str
    platform_a: dict
    platform_b: dict
    metrics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model_a": self.model_a,
            "model_b": self.model_b,
            "platform_a": self.platform_a,
            "platform_b": self.platform_b,
            "metrics": {k: asdict(v) for k, v in self.metrics.items()},
            "warnings": list(self.warnings),
        }

    def format_table(self, label_a="A", label_b="B") -> str:
        rows = [("metric", label_a, label_b, "ratio", "delta")]
        for name, m in self.metrics.items():
            ratio = "n/a" if m.ratio is None else f"{m.ratio:.2f}"
            rows.append((name, f"{m.value_a:.2f}", f"{m.value_b:.2f}", ratio, f"{m.delta:.2f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        lines = []
        for row in rows:
            cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
            lines.append("  ".join(cells))
        return "\n".join(lines)


def _metric_value(result, metric: str, cpu_source: str):
    if metric == "cpu_pct" and cpu_source == "run":
        return result.cpu_pct_run
    s = result.summaries.get(metric)
    return None if s is None else s.mean


def compare(a, b, cpu_source: str = "iterations") -> ComparisonReport:
    """Compare summary means of two runs: ratio a/b and delta a-b per metric.

    ``cpu_source="run"`` swaps the per-iteration CPU mean for the whole-phase
    window value ``cpu_pct_run``.
    """
    if cpu_source not in ("iterations", "run"):
        raise ValueError(f"cpu_source must be 'iterations' or 'run', got {cpu_source!r}")
    for which, r in (("A", a), ("B", b)):
        if "latency_ms" not in r.summaries:
            raise MissingMetric(f"run {which} has no latency_ms summary")
    report = ComparisonReport(a.model_id, b.model_id,
                              a.platform.to_dict(), b.platform.to_dict())
    if a.model_id != b.model_id:
        msg = f"model ids differ: {a.model_id!r} vs {b.model_id!r}"
        log.warning(msg)
        report.warnings.append(msg)
    for metric in METRICS:
        va = _metric_value(a, metric, cpu_source)
        vb = _metric_value(b, metric, cpu_source)
        if va is None and vb is None:
            continue
        if va is None or vb is None:
            msg = f"{metric} present in only one run; omitted"
            log.warning(msg)
            report.warnings.append(msg)
            continue
        ratio = va / vb if vb != 0 else None
        report.metrics[metric] = MetricComparison(va, vb, ratio, va - vb)
    return report
