"""picobench command line: run, report, compare, validate.

Exit codes: 0 success, 1 configuration or parse error, 2 backend error
(partial results flushed next to the output), 3 I/O error. Every failure
prints one ``PICO-Exxx:`` line to stderr; stdout carries only results.
"""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

from . import sysmon
from .errors import PicoError, ResultIOError, exit_code_for
from .preprocess import PreprocessParams
from .report import (
    CHART_KINDS,
    ChartSpec,
    dumps_canonical,
    read_result_json,
    render_chart,
    write_result_csv,
    write_result_json,
)
from .runner import load_config, load_manifest, prepare_sample, run_benchmark
from .stats import compare

log = logging.getLogger("picobench")


def demo_config_path() -> Path:
    """Path of the bundled 10-sample synthetic demo config."""
    return Path(str(resources.files("picobench") / "data" / "demo" / "demo.toml"))


def _err(err: PicoError) -> int:
    print(f"PICO-{err.code}: {err}", file=sys.stderr)
    return exit_code_for(err)


def _fmt(v, spec=".3f"):
    return "-" if v is None else format(v, spec)


def _table(rows) -> str:
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    out = []
    for row in rows:
        cells = [str(row[0]).ljust(widths[0])]
        cells += [str(c).rjust(w) for c, w in zip(row[1:], widths[1:])]
        out.append("  ".join(cells).rstrip())
    return "\n".join(out)


def print_run_summary(r) -> None:
    lat = r.summaries.get("latency_ms")
    cpu = r.summaries.get("cpu_pct")
    mem = r.summaries.get("mem_pct")
    rows = [("model", "platform", "mean_ms", "p95_ms", "cpu_%", "mem_%"),
            (r.model_id, r.platform.label, _fmt(lat and lat.mean), _fmt(lat and lat.p95),
             _fmt(cpu and cpu.mean, ".2f"), _fmt(mem and mem.mean, ".2f"))]
    print(_table(rows))


def print_summaries(r) -> None:
    rows = [("metric", "count", "mean", "std", "min", "p50", "p95", "p99", "max")]
    for name, s in r.summaries.items():
        rows.append((name, s.count, *(_fmt(getattr(s, f), ".4f")
                                      for f in ("mean", "std", "min", "p50", "p95", "p99", "max"))))
    print(_table(rows))
    run_cpu = "-" if r.cpu_pct_run is None else f"{r.cpu_pct_run:.2f}"
    print(f"whole-phase cpu_pct: {run_cpu}")


def cmd_run(args) -> int:
    if args.config is None and not args.demo:
        print("PICO-E100: ConfigError: a config path or --demo is required", file=sys.stderr)
        return 1
    try:
        cfg = load_config(demo_config_path() if args.demo else args.config)
        if args.iterations is not None:
            cfg.iterations = args.iterations
        if args.warmup is not None:
            cfg.warmup = args.warmup
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.backend.params.pop("seed", None)
        cfg.__post_init__()
        out = Path(args.out)
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ResultIOError(f"cannot create {out.parent}: {exc.strerror}") from exc
        partial = out.with_name(out.name + ".partial")
        result = run_benchmark(cfg, sysmon.SystemMonitor.from_env(), partial_path=partial)
        write_result_json(result, out)
        write_result_csv(result, out.with_suffix(".csv"))
    except PicoError as err:
        return _err(err)
    print_run_summary(result)
    return 0


def cmd_report(args) -> int:
    try:
        result = read_result_json(args.result)
        charts = Path(args.charts)
        try:
            charts.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ResultIOError(f"cannot create {charts}: {exc.strerror}") from exc
        written = []
        for kind in CHART_KINDS:
            path = charts / f"{kind}.svg"
            try:
                render_chart(result, ChartSpec(kind, bins=args.bins), path)
            except KeyError as exc:  # MissingMetric
                print(f"warning: skipping {kind}: {exc}", file=sys.stderr)
                continue
            written.append(path)
    except PicoError as err:
        return _err(err)
    print_summaries(result)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_compare(args) -> int:
    try:
        a = read_result_json(args.result_a)
        b = read_result_json(args.result_b)
        rep = compare(a, b, cpu_source=args.cpu_source)
        pa = Path(args.result_a)
        out = Path(args.out) if args.out else pa.with_name(
            f"{pa.stem}_vs_{Path(args.result_b).stem}.compare.json")
        try:
            out.write_text(dumps_canonical(rep.to_dict()))
        except OSError as exc:
            raise ResultIOError(f"cannot write {out}: {exc.strerror}") from exc
    except PicoError as err:
        return _err(err)
    label_a = a.platform.label if a.platform.label != "unknown" else "A"
    label_b = b.platform.label if b.platform.label != "unknown" else "B"
    if label_a == label_b:
        label_a, label_b = "A", "B"
    print(rep.format_table(label_a, label_b))
    return 0


def cmd_validate(args) -> int:
    try:
        dataset = load_manifest(args.manifest, check_files=False)
        cfg = load_config(args.config) if args.config else None
    except PicoError as err:
        return _err(err)
    failures = 0
    for s in dataset.samples:
        try:
            if not s.path.is_file():
                raise FileNotFoundError(f"file not found: {s.path}")
            params = cfg.params_for(s.type) if cfg else PreprocessParams()
            t = prepare_sample(s, params)
        except FileNotFoundError as exc:
            failures += 1
            print(f"FAIL {s.id}: PICO-E102: MissingSampleFile: {exc}")
        except PicoError as exc:
            failures += 1
            print(f"FAIL {s.id}: PICO-{exc.code}: {exc}")
        else:
            print(f"OK   {s.id}: {s.type} -> shape {list(t.shape)} {t.dtype}")
    total = len(dataset.samples)
    print(f"{total - failures}/{total} samples OK")
    if failures:
        print(f"PICO-E110: {failures} sample(s) failed validation", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="picobench", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a benchmark run")
    p.add_argument("config", nargs="?", help="TOML run configuration")
    p.add_argument("--demo", action="store_true", help="use the bundled synthetic demo config")
    p.add_argument("--out", default="result.json", help="result JSON path (CSV goes alongside)")
    p.add_argument("--iterations", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render charts and print summaries for a result")
    p.add_argument("result")
    p.add_argument("--charts", default="charts", help="output directory for SVG charts")
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("compare", help="compare two results (ratio = A / B)")
    p.add_argument("result_a")
    p.add_argument("result_b")
    p.add_argument("--cpu-source", choices=("iterations", "run"), default="iterations",
                   help="per-iteration CPU mean or the whole-phase window value")
    p.add_argument("--out", help="comparison JSON path (default: next to A)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="check that every manifest sample decodes")
    p.add_argument("manifest")
    p.add_argument("--config", help="take preprocess settings from this run config")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
