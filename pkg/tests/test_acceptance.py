"""Exit criteria for the harness, one check per criterion.

Each check prints a single ``PASS``/``FAIL`` line. Under pytest the lines are
also repeated in the terminal summary; ``python tests/test_acceptance.py``
runs the checks without pytest.
"""

import csv
import io
import json
import math
import random
import struct
import sys
import tempfile
import time
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from helpers import make_result, synthetic_config, write_manifest
from picobench import cli
from picobench.backends import BackendSpec, InferenceOutput, write_replay_trace
from picobench.errors import NoDelta
from picobench.preprocess import fft
from picobench.records import IterationRecord, PlatformInfo, RunResult
from picobench.report import (
    dumps_canonical,
    read_result_json,
    result_csv,
    write_result_json,
)
from picobench.runner import BenchmarkConfig, run_benchmark
from picobench.stats import compare, stability, summarize, summarize_records
from picobench.sysmon import CpuSnapshot, cpu_utilization

pytestmark = pytest.mark.acceptance

RESULTS: list[str] = []

# Published per-model figures for the two boards: latency ms, cpu %, mem %.
BOARD_FIGURES = {
    "gesture": {"bbai64": (9.49, 40.38, 15.10), "rpi4": (1.76, 8.88, 11.00)},
    "kws": {"bbai64": (0.74, 18.50, 18.96), "rpi4": (0.16, 5.00, 11.00)},
    "mobilenet_v2": {"bbai64": (2125.04, 51.80, 19.75), "rpi4": (513.60, 28.59, 11.81)},
}
EXPECTED_RATIO = {"gesture": 5.39, "kws": 4.63, "mobilenet_v2": 4.14}
EXPECTED_CPU_DELTA = {"gesture": 31.50, "kws": 13.50, "mobilenet_v2": 23.21}


def verdict(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {title} ({detail})"
    print(line)
    RESULTS.append(line)
    assert ok, line


def board_result(model, board):
    lat, cpu, mem = BOARD_FIGURES[model][board]
    return make_result([lat] * 100, cpu=[cpu] * 100, mem=[mem] * 100,
                       model_id=model, platform=board)


# 1 -------------------------------------------------------------------------------------

def test_comparison_fixture(tmp_path):
    t0 = time.perf_counter()
    worst = 0.0
    for model in BOARD_FIGURES:
        a, b = tmp_path / f"{model}_bbai64.json", tmp_path / f"{model}_rpi4.json"
        write_result_json(board_result(model, "bbai64"), a)
        write_result_json(board_result(model, "rpi4"), b)
        rep = compare(read_result_json(a), read_result_json(b))
        worst = max(worst,
                    abs(rep.metrics["latency_ms"].ratio - EXPECTED_RATIO[model]),
                    abs(rep.metrics["cpu_pct"].delta - EXPECTED_CPU_DELTA[model]))
    elapsed = time.perf_counter() - t0
    verdict(1, "comparison ratios and CPU deltas", worst <= 0.01 and elapsed < 1.0,
            f"max abs error {worst:.4f} <= 0.01, {elapsed:.3f}s < 1s")


# 2 -------------------------------------------------------------------------------------

def naive_dft(x):
    n = len(x)
    jt = np.outer(np.arange(n), np.arange(n)) % n  # reduce before scaling the angle
    return np.exp(-2j * np.pi * jt / n) @ x


def test_fft_oracle():
    rng = np.random.default_rng(20240501)
    t0 = time.perf_counter()
    worst_dft = worst_parseval = 0.0
    for k in range(11):
        n = 2 ** k
        xs = rng.standard_normal((50, n)) + 1j * rng.standard_normal((50, n))
        for x in xs:
            X = fft(x)
            ref = naive_dft(x)
            worst_dft = max(worst_dft, np.max(np.abs(X - ref)) / np.max(np.abs(ref)))
            e_time = np.sum(np.abs(x) ** 2)
            e_freq = np.sum(np.abs(X) ** 2) / n
            worst_parseval = max(worst_parseval, abs(e_time - e_freq) / e_time)
    elapsed = time.perf_counter() - t0
    ok = worst_dft <= 1e-9 and worst_parseval <= 1e-9 and elapsed < 10.0
    verdict(2, "fft vs naive DFT, n=1..1024, 50 inputs each", ok,
            f"dft rel err {worst_dft:.2e}, parseval rel err {worst_parseval:.2e}, "
            f"{elapsed:.2f}s < 10s")


# 3 -------------------------------------------------------------------------------------

def oracle_percentile(values, p):
    s = sorted(values)
    rank = p * (len(s) - 1) / 100
    below = int(rank)
    above = below if rank == below else below + 1
    return s[below] + (rank - below) * (s[above] - s[below])


def test_percentile_oracle():
    rng = random.Random(7)
    mismatches = order_violations = 0
    for _ in range(1000):
        values = [rng.uniform(-1e3, 1e3) for _ in range(rng.randint(1, 500))]
        s = summarize(values)
        got = (s.p50, s.p90, s.p95, s.p99)
        mismatches += got != tuple(oracle_percentile(values, p) for p in (50, 90, 95, 99))
        order_violations += not (s.min <= s.p50 <= s.p90 <= s.p95 <= s.p99 <= s.max)
    verdict(3, "percentiles equal sort-plus-formula oracle on 1000 series",
            mismatches == 0 and order_violations == 0,
            f"{mismatches} mismatches, {order_violations} ordering violations")


# 4 -------------------------------------------------------------------------------------

def test_synthetic_latency_floor(tmp_path):
    cfg = synthetic_config(write_manifest(tmp_path, n=10), iterations=100, warmup=5, busy_ms=5)
    t0 = time.perf_counter()
    r = run_benchmark(cfg)
    elapsed = time.perf_counter() - t0
    lat = [rec.latency_ms for rec in r.records]
    mean = r.summaries["latency_ms"].mean
    ok = len(lat) == 100 and min(lat) >= 5.0 and mean <= 9.0
    verdict(4, "busy_ms=5 latency floor", ok,
            f"min {min(lat):.3f} ms >= 5.0, mean {mean:.3f} ms <= 9.0, run {elapsed:.2f}s")


# 5 -------------------------------------------------------------------------------------

def test_determinism(tmp_path):
    cfg = synthetic_config(write_manifest(tmp_path, n=5), iterations=50, seed=1234)
    blobs = []
    for _ in range(2):
        r = run_benchmark(cfg)
        pairs = [[rec.predicted_label, rec.confidence] for rec in r.records]
        blobs.append(dumps_canonical(pairs).encode())
    verdict(5, "same seed gives byte-equal (label, confidence) sequences",
            blobs[0] == blobs[1], f"{len(blobs[0])} bytes compared")


# 6 -------------------------------------------------------------------------------------

def snap(user=0, idle=0):
    return CpuSnapshot(user, 0, 0, idle, 0, 0, 0, 0)


def test_cpu_formula():
    half = cpu_utilization(snap(100, 800), snap(150, 850))
    idle = cpu_utilization(snap(), snap(idle=100))
    try:
        cpu_utilization(snap(100, 800), snap(100, 800))
        no_delta = False
    except NoDelta:
        no_delta = True
    verdict(6, "cpu utilization hand cases", half == 50.0 and idle == 0.0 and no_delta,
            f"busy half {half!r}, idle {idle!r}, identical pair raises NoDelta: {no_delta}")


# 7 -------------------------------------------------------------------------------------

def random_float(rng):
    kind = rng.randrange(4)
    if kind == 0:
        return rng.uniform(0, 100)
    if kind == 1:
        return rng.uniform(-1, 1) * 10 ** rng.randint(-300, 300)
    if kind == 2:
        return float(rng.randint(-1000, 1000))
    return struct_float(rng)


def struct_float(rng):
    while True:
        (v,) = struct.unpack("<d", rng.getrandbits(64).to_bytes(8, "little"))
        if math.isfinite(v):
            return v


def random_text(rng):
    alphabet = "abc,\"' \n\tµ猫☃"
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 8)))


def random_result(rng):
    records = [IterationRecord(
        index=i, sample_id=random_text(rng), latency_ms=rng.uniform(1e-6, 1e4),
        cpu_pct=None if rng.random() < 0.3 else rng.uniform(0, 100),
        mem_pct_before=rng.uniform(0, 100), mem_pct_after=rng.uniform(0, 100),
        predicted_label=random_text(rng), confidence=rng.uniform(-1, 1) * 10 ** rng.randint(-5, 5),
        latency_floored=rng.random() < 0.1) for i in range(rng.randint(0, 40))]
    config = {random_text(rng): random_float(rng) for _ in range(3)}
    config["nested"] = {"list": [random_float(rng), None, True, random_text(rng)]}
    return RunResult(random_text(rng),
                     PlatformInfo(random_text(rng), random_text(rng), random_text(rng),
                                  rng.randint(1, 128), rng.randint(0, 2**40)),
                     config, rng.randint(0, 2**50),
                     None if rng.random() < 0.5 else rng.uniform(0, 100),
                     records, summarize_records(records))


def test_round_trip(tmp_path):
    rng = random.Random(99)
    bad_json = bad_csv = 0
    for i in range(100):
        r = random_result(rng)
        path = tmp_path / f"r{i}.json"
        write_result_json(r, path)
        bad_json += read_result_json(path) != r
        # labels may hold quoted newlines, so count parsed rows, not raw lines
        rows = list(csv.reader(io.StringIO(result_csv(r), newline="")))
        bad_csv += len(rows) != len(r.records) + 1
    verdict(7, "JSON round trip identity and CSV row count on 100 results",
            bad_json == 0 and bad_csv == 0, f"{bad_json} JSON mismatches, {bad_csv} CSV mismatches")


# 8 -------------------------------------------------------------------------------------

def test_replay_stability(tmp_path):
    write_replay_trace(tmp_path / "trace.jsonl", [InferenceOutput("class_3", 0.98)] * 100)
    cfg = BenchmarkConfig("gesture", BackendSpec("replay", {"path": "trace.jsonl"}),
                          str(write_manifest(tmp_path, n=10)), iterations=100, warmup=0,
                          base_dir=str(tmp_path))
    rep = stability(run_benchmark(cfg).records)
    ok = rep.confidence_std == 0.0 and rep.distinct_labels == 1 and rep.confidence_mean == 0.98
    verdict(8, "replayed constant outputs are perfectly stable", ok,
            f"std {rep.confidence_std}, distinct labels {rep.distinct_labels}, "
            f"mean {rep.confidence_mean}")


# 9 -------------------------------------------------------------------------------------

def test_end_to_end_demo(tmp_path):
    out, charts = tmp_path / "demo" / "result.json", tmp_path / "charts"
    t0 = time.perf_counter()
    rc_run = cli.main(["run", "--demo", "--out", str(out)])
    rc_report = cli.main(["report", str(out), "--charts", str(charts)])
    elapsed = time.perf_counter() - t0
    n_records = len(read_result_json(out).records)
    svgs = sorted(charts.glob("*.svg"))
    well_formed = 0
    hist_total = None
    for f in svgs:
        root = ET.parse(f).getroot()
        well_formed += root.tag.endswith("svg")
        if f.name == "latency_histogram.svg":
            hist_total = sum(int(el.get("data-count")) for el in root.iter()
                             if el.get("class") == "bar")
    ok = (rc_run == 0 and rc_report == 0 and len(svgs) == 4 and well_formed == 4
          and n_records == 100 and hist_total == n_records and elapsed < 30.0)
    verdict(9, "demo run then report", ok,
            f"{well_formed}/4 SVGs, histogram sums to {hist_total} of {n_records} records, "
            f"{elapsed:.2f}s < 30s")


def main() -> int:
    failed = 0
    with tempfile.TemporaryDirectory() as tmp:
        for i, fn in enumerate((test_comparison_fixture, test_fft_oracle, test_percentile_oracle,
                                test_synthetic_latency_floor, test_determinism, test_cpu_formula,
                                test_round_trip, test_replay_stability, test_end_to_end_demo)):
            d = Path(tmp) / str(i)
            d.mkdir()
            try:
                fn(d) if fn.__code__.co_argcount else fn()
            except AssertionError:
                failed += 1
    print(json.dumps({"passed": 9 - failed, "failed": failed}))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
