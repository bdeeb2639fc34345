"""Rebuild the BeagleBone AI64 vs Raspberry Pi 4 comparison from published averages.

Writes one 100-record result file per (model, board) with constant series at the
reported latency, CPU and memory figures, then runs ``picobench compare`` on each
pair. Usage: python scripts/board_comparison.py [outdir]
"""

import sys
from pathlib import Path

from picobench import cli
from picobench.records import IterationRecord, PlatformInfo, RunResult
from picobench.report import write_result_json
from picobench.stats import summarize_records

# model -> board -> (latency ms, cpu %, mem %, confidence)
FIGURES = {
    "gesture": {"bbai64": (9.49, 40.38, 15.10, 0.98), "rpi4": (1.76, 8.88, 11.00, 0.98)},
    "kws": {"bbai64": (0.74, 18.50, 18.96, 0.99), "rpi4": (0.16, 5.00, 11.00, 0.99)},
    "mobilenet_v2": {"bbai64": (2125.04, 51.80, 19.75, 17.16),
                     "rpi4": (513.60, 28.59, 11.81, 17.16)},
}


def fixture(model, board, n=100):
    lat, cpu, mem, conf = FIGURES[model][board]
    records = [IterationRecord(i, f"s{i}", lat, cpu, mem, mem, "class_0", conf)
               for i in range(n)]
    return RunResult(model, PlatformInfo(label=board), {"model_id": model}, 0, cpu,
                     records, summarize_records(records))


def main(outdir="board_comparison") -> int:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for model in FIGURES:
        paths = []
        for board in ("bbai64", "rpi4"):
            path = out / f"{model}_{board}.json"
            write_result_json(fixture(model, board), path)
            paths.append(str(path))
        print(f"\n== {model} ==")
        rc = cli.main(["compare", *paths])
        if rc:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
