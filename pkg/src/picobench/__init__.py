"""Latency, CPU, memory and confidence benchmarking for TinyML-style inference."""

from .backends import BackendSpec, InferenceOutput, load_backend
from .records import IterationRecord, PlatformInfo, RunResult
from .report import ChartSpec, read_result_json, render_chart, write_result_csv, write_result_json
from .runner import BenchmarkConfig, load_config, load_manifest, run_benchmark
from .stats import MetricSummary, compare, stability, summarize

__version__ = "0.1.0"
