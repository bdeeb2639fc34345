"""Builders shared by the test modules."""

import json
import sys

import numpy as np

from picobench.backends import BackendSpec
from picobench.preprocess import PreprocessParams, write_tensor_file
from picobench.records import IterationRecord, PlatformInfo, RunResult
from picobench.runner import BenchmarkConfig
from picobench.stats import summarize_records

ECHO_RUNNER = [sys.executable, "-m", "picobench.echo_runner"]


def echo_spec(*args, timeout_ms=5000, handshake_timeout_ms=20000):
    return BackendSpec("subprocess", {"command": ECHO_RUNNER, "args": list(args),
                                      "timeout_ms": timeout_ms,
                                      "handshake_timeout_ms": handshake_timeout_ms})


def write_manifest(root, n=3, shape=(8,), kind="tensor", prefix="s"):
    """Write ``n`` tensor samples plus a manifest; returns the manifest path."""
    samples = []
    for i in range(n):
        name = f"{prefix}{i}.pten"
        write_tensor_file(root / name, np.full(shape, i + 1, dtype=np.float32))
        samples.append({"id": f"{prefix}{i}", "type": kind, "path": name})
    path = root / "manifest.json"
    path.write_text(json.dumps({"name": "t", "samples": samples}))
    return path


def synthetic_config(manifest, iterations=10, warmup=0, busy_ms=0.0, seed=7, input_len=8,
                     **kw):
    spec = BackendSpec("synthetic", {"n_classes": 4, "input_len": input_len,
                                     "busy_ms": busy_ms})
    return BenchmarkConfig("model", spec, str(manifest), iterations=iterations, warmup=warmup,
                           seed=seed, **kw)


def make_result(latencies, cpu=None, mem=None, conf=None, labels=None, model_id="gesture",
                platform="rpi4", cpu_pct_run=None):
    """Hand-built RunResult with the given per-iteration series."""
    n = len(latencies)
    cpu = cpu if cpu is not None else [None] * n
    mem = mem if mem is not None else [10.0] * n
    conf = conf if conf is not None else [0.98] * n
    labels = labels if labels is not None else ["class_1"] * n
    records = [IterationRecord(i, f"s{i}", latencies[i], cpu[i], mem[i], mem[i], labels[i],
                               conf[i]) for i in range(n)]
    return RunResult(model_id, PlatformInfo(label=platform), {"model_id": model_id}, 0,
                     cpu_pct_run, records, summarize_records(records))


def default_params():
    return PreprocessParams()
