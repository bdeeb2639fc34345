"""Result persistence (JSON, CSV) and standalone SVG charts.

Result JSON is written with a fixed key order and every float printed with 17
significant digits, so reading a file back reproduces each value bit for bit.
Charts are plain SVG text with fixed two-decimal coordinates: identical
results give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import MissingMetric, ParseError, ResultIOError, SchemaVersionMismatch
from .records import IterationRecord, PlatformInfo, RunResult
from .stats import MetricSummary, metric_values, stability

SCHEMA_VERSION = 1

CSV_HEADER = ("index", "sample_id", "latency_ms", "cpu_pct", "mem_pct_before",
              "mem_pct_after", "predicted_label", "confidence")

_RECORD_FLOATS = ("latency_ms", "mem_pct_before", "mem_pct_after", "confidence")
_SUMMARY_FIELDS = ("count", "mean", "std", "min", "max", "p50", "p90", "p95", "p99")


# -- JSON ------------------------------------------------------------------------

def _format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    s = f"{x:.17g}"
    if not any(c in s for c in ".e"):
        s += ".0"  # keep it a float on the way back in, including -0.0
    return s


def _dump(obj, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_dump(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_dump(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _dump(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_canonical(obj) -> str:
    return _dump(obj) + "\n"


def _record_dict(r: IterationRecord) -> dict:
    d = {
        "index": r.index,
        "sample_id": r.sample_id,
        "latency_ms": float(r.latency_ms),
        "cpu_pct": None if r.cpu_pct is None else float(r.cpu_pct),
        "mem_pct_before": float(r.mem_pct_before),
        "mem_pct_after": float(r.mem_pct_after),
        "predicted_label": r.predicted_label,
        "confidence": float(r.confidence),
    }
    if r.latency_floored:
        d["latency_floored"] = True
    return d


def result_to_dict(r: RunResult) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "model_id": r.model_id,
        "platform": r.platform.to_dict(),
        "config": r.config,
        "started_at_unix_ms": r.started_at_unix_ms,
        "cpu_pct_run": None if r.cpu_pct_run is None else float(r.cpu_pct_run),
        "records": [_record_dict(rec) for rec in r.records],
        "summaries": {k: {f: getattr(s, f) for f in _SUMMARY_FIELDS}
                      for k, s in r.summaries.items()},
    }


def _write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise ResultIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_result_json(r: RunResult, path) -> None:
    _write_text(path, dumps_canonical(result_to_dict(r)))


class _Reader:
    """Typed field access that reports failures as JSON pointers."""

    def __init__(self, source: str):
        self.source = source

    def fail(self, pointer: str, msg: str):
        raise ParseError(f"{self.source}: {pointer or '/'}: {msg}")

    def get(self, obj, key, pointer, kind, optional=False):
        here = f"{pointer}/{key}"
        if not isinstance(obj, dict):
            self.fail(pointer, "expected an object")
        if key not in obj:
            if optional:
                return None
            self.fail(here, "missing")
        return self.check(obj[key], here, kind, optional)

    def check(self, value, pointer, kind, optional=False):
        if value is None and optional:
            return None
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.fail(pointer, f"expected a number, got {type(value).__name__}")
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.fail(pointer, f"expected an integer, got {type(value).__name__}")
            return value
        if not isinstance(value, kind):
            self.fail(pointer, f"expected {kind.__name__}, got {type(value).__name__}")
        return value


def result_from_dict(doc, source: str = "<result>") -> RunResult:
    rd = _Reader(source)
    if not isinstance(doc, dict):
        rd.fail("", "expected an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"{source}: schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")
    p = rd.get(doc, "platform", "", dict)
    platform = PlatformInfo(
        label=rd.get(p, "label", "/platform", str),
        os=rd.get(p, "os", "/platform", str),
        cpu_model=rd.get(p, "cpu_model", "/platform", str),
        cores=rd.get(p, "cores", "/platform", int),
        total_memory_kb=rd.get(p, "total_memory_kb", "/platform", int),
    )
    records = []
    for i, raw in enumerate(rd.get(doc, "records", "", list)):
        ptr = f"/records/{i}"
        records.append(IterationRecord(
            index=rd.get(raw, "index", ptr, int),
            sample_id=rd.get(raw, "sample_id", ptr, str),
            cpu_pct=rd.get(raw, "cpu_pct", ptr, float, optional=True),
            predicted_label=rd.get(raw, "predicted_label", ptr, str),
            latency_floored=bool(rd.get(raw, "latency_floored", ptr, bool, optional=True)),
            **{k: rd.get(raw, k, ptr, float) for k in _RECORD_FLOATS},
        ))
    summaries = {}
    for name, raw in rd.get(doc, "summaries", "", dict).items():
        ptr = f"/summaries/{name}"
        vals = {f: rd.get(raw, f, ptr, int if f == "count" else float) for f in _SUMMARY_FIELDS}
        summaries[name] = MetricSummary(**vals)
    return RunResult(
        model_id=rd.get(doc, "model_id", "", str),
        platform=platform,
        config=rd.get(doc, "config", "", dict),
        started_at_unix_ms=rd.get(doc, "started_at_unix_ms", "", int),
        cpu_pct_run=rd.get(doc, "cpu_pct_run", "", float, optional=True),
        records=records,
        summaries=summaries,
    )


def read_result_json(path) -> RunResult:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ResultIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return result_from_dict(doc, str(path))


# -- CSV -----------------------------------------------------------------------

def result_csv(r: RunResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_HEADER)
    for rec in r.records:
        w.writerow([rec.index, rec.sample_id, repr(float(rec.latency_ms)),
                    "" if rec.cpu_pct is None else repr(float(rec.cpu_pct)),
                    repr(float(rec.mem_pct_before)), repr(float(rec.mem_pct_after)),
                    rec.predicted_label, repr(float(rec.confidence))])
    return buf.getvalue()


def write_result_csv(r: RunResult, path) -> None:
    _write_text(path, result_csv(r))


# -- SVG charts ------------------------------------------------------------------

CHART_KINDS = ("latency_histogram", "metric_trend", "confidence_trend", "prediction_bar")

MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 20, 40, 50
BAR_FILL = "#4c72b0"
LINE_COLORS = ("#c44e52", "#55a868", "#4c72b0")


@dataclass(frozen=True)
class ChartSpec:
    kind: str
    title: str = ""
    width: int = 800
    height: int = 500
    bins: int = 20

    def __post_init__(self):
        if self.kind not in CHART_KINDS:
            raise ValueError(f"unknown chart kind {self.kind!r}")
        if self.width < 100 or self.height < 100:
            raise ValueError("chart width and height must be >= 100 px")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")


def _f(x: float) -> str:
    return f"{x:.2f}"


def _attr(s) -> str:
    return escape(str(s), {'"': "&quot;"})


def histogram_counts(values, bins: int):
    """Uniform bins over [min, max]; a single-valued series gets one bin."""
    lo, hi = min(values), max(values)
    if lo == hi:
        return [(lo, hi)], [len(values)]
    width = (hi - lo) / bins
    counts = [0] * bins
    for v in values:
        counts[min(int((v - lo) / width), bins - 1)] += 1
    edges = [(lo + i * width, hi if i == bins - 1 else lo + (i + 1) * width)
             for i in range(bins)]
    return edges, counts


class _Canvas:
    def __init__(self, spec: ChartSpec):
        self.spec = spec
        self.x0 = MARGIN_LEFT
        self.x1 = spec.width - MARGIN_RIGHT
        self.y0 = spec.height - MARGIN_BOTTOM  # baseline (SVG y grows downward)
        self.y1 = MARGIN_TOP
        self.parts = []

    @property
    def plot_w(self):
        return self.x1 - self.x0

    @property
    def plot_h(self):
        return self.y0 - self.y1

    def text(self, x, y, s, anchor="middle", size=12, cls="label"):
        self.parts.append(f'<text class="{cls}" x="{_f(x)}" y="{_f(y)}" font-size="{size}" '
                          f'text-anchor="{anchor}">{escape(str(s))}</text>')

    def axes(self, x_label, y_label, y_ticks=()):
        self.parts.append(f'<line class="axis" x1="{_f(self.x0)}" y1="{_f(self.y0)}" '
                          f'x2="{_f(self.x1)}" y2="{_f(self.y0)}" stroke="#000"/>')
        self.parts.append(f'<line class="axis" x1="{_f(self.x0)}" y1="{_f(self.y0)}" '
                          f'x2="{_f(self.x0)}" y2="{_f(self.y1)}" stroke="#000"/>')
        for y, label in y_ticks:
            self.text(self.x0 - 6, y + 4, label, anchor="end", size=10, cls="tick")
        self.text((self.x0 + self.x1) / 2, self.spec.height - 12, x_label)
        self.text(16, (self.y0 + self.y1) / 2, y_label, cls="axis-label")

    def render(self, title: str) -> str:
        s = self.spec
        head = (f'<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" width="{s.width}" height="{s.height}" '
                f'viewBox="0 0 {s.width} {s.height}" font-family="sans-serif">\n'
                f'<title>{escape(title)}</title>\n'
                f'<text class="title" x="{_f(s.width / 2)}" y="24" font-size="16" '
                f'text-anchor="middle">{escape(title)}</text>\n')
        return head + "\n".join(self.parts) + "\n</svg>\n"


def _linear(lo, hi, out_lo, out_hi):
    if hi == lo:
        mid = (out_lo + out_hi) / 2
        return lambda v: mid
    return lambda v: out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)


def _histogram_svg(r: RunResult, spec: ChartSpec) -> str:
    values = metric_values(r.records, "latency_ms")
    if not values:
        raise MissingMetric("latency_ms has no values")
    edges, counts = histogram_counts(values, spec.bins)
    c = _Canvas(spec)
    top = max(counts)
    bar_w = c.plot_w / len(counts)
    for i, ((lo, hi), n) in enumerate(zip(edges, counts)):
        h = n / top * c.plot_h
        c.parts.append(f'<rect class="bar" data-count="{n}" data-lo="{lo!r}" data-hi="{hi!r}" '
                       f'x="{_f(c.x0 + i * bar_w)}" y="{_f(c.y0 - h)}" width="{_f(bar_w)}" '
                       f'height="{_f(h)}" fill="{BAR_FILL}" stroke="#fff"/>')
    c.axes("latency (ms)", "iterations", [(c.y0, "0"), (c.y1, str(top))])
    c.text(c.x0, c.y0 + 16, f"{edges[0][0]:.3f}", size=10, cls="tick")
    c.text(c.x1, c.y0 + 16, f"{edges[-1][1]:.3f}", size=10, cls="tick")
    return c.render(spec.title or "Latency distribution")


def _trend_svg(r: RunResult, spec: ChartSpec, series, y_range, y_label, default_title) -> str:
    c = _Canvas(spec)
    n = len(r.records)
    sx = _linear(0, max(n - 1, 0), c.x0, c.x1)
    lo, hi = y_range
    sy = _linear(lo, hi, c.y0, c.y1)
    for k, (name, values) in enumerate(series):
        pts = " ".join(f"{_f(sx(i))},{_f(sy(v))}" for i, v in values)
        color = LINE_COLORS[k % len(LINE_COLORS)]
        c.parts.append(f'<polyline class="series" data-metric="{_attr(name)}" fill="none" '
                       f'stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        c.text(c.x1 - 4, c.y1 + 14 * (k + 1), name, anchor="end", size=11, cls="legend")
    ticks = [(c.y0, f"{lo:.2f}"), (c.y1, f"{hi:.2f}")] if hi != lo else [
        ((c.y0 + c.y1) / 2, f"{lo:.2f}")]
    c.axes("iteration", y_label, ticks)
    return c.render(spec.title or default_title)


def _metric_trend_svg(r: RunResult, spec: ChartSpec) -> str:
    cpu = [(rec.index, rec.cpu_pct) for rec in r.records if rec.cpu_pct is not None]
    if not cpu:
        raise MissingMetric("cpu_pct has no values")
    mem = [(rec.index, rec.mem_pct_after) for rec in r.records]
    return _trend_svg(r, spec, [("cpu_pct", cpu), ("mem_pct", mem)], (0.0, 100.0),
                      "utilization (%)", "CPU and memory utilization")


def _confidence_trend_svg(r: RunResult, spec: ChartSpec) -> str:
    conf = [(rec.index, rec.confidence) for rec in r.records]
    if not conf:
        raise MissingMetric("confidence has no values")
    values = [v for _, v in conf]
    return _trend_svg(r, spec, [("confidence", conf)], (min(values), max(values)),
                      "confidence", "Confidence over iterations")


def _prediction_bar_svg(r: RunResult, spec: ChartSpec) -> str:
    if not r.records:
        raise MissingMetric("no predictions recorded")
    hist = stability(r.records).label_histogram
    c = _Canvas(spec)
    top = max(hist.values())
    slot = c.plot_w / len(hist)
    bar_w = slot * 0.7
    for i, (label, n) in enumerate(hist.items()):
        h = n / top * c.plot_h
        x = c.x0 + i * slot + (slot - bar_w) / 2
        c.parts.append(f'<rect class="bar" data-label="{_attr(label)}" data-count="{n}" '
                       f'x="{_f(x)}" y="{_f(c.y0 - h)}" width="{_f(bar_w)}" height="{_f(h)}" '
                       f'fill="{BAR_FILL}"/>')
        c.text(x + bar_w / 2, c.y0 + 16, label, size=10, cls="tick")
    c.axes("predicted label", "count", [(c.y0, "0"), (c.y1, str(top))])
    return c.render(spec.title or "Prediction distribution")


_RENDERERS = {
    "latency_histogram": _histogram_svg,
    "metric_trend": _metric_trend_svg,
    "confidence_trend": _confidence_trend_svg,
    "prediction_bar": _prediction_bar_svg,
}


def chart_svg(r: RunResult, spec: ChartSpec) -> str:
    return _RENDERERS[spec.kind](r, spec)


def render_chart(r: RunResult, spec: ChartSpec, path) -> None:
    _write_text(path, chart_svg(r, spec))
