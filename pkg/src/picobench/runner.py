"""Benchmark orchestration: manifest loading, preprocessing, warmup and the
measured loop.

Each measured iteration takes, in this order: memory snapshot, CPU snapshot,
t0, the inference call, t1, CPU snapshot, memory snapshot. Nothing else runs
in the process while the loop is active.
"""

from __future__ import annotations

import json
import logging
import os
import platform as _platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import sysmon
from .backends import Backend, BackendSpec, load_backend
from .errors import (
    BackendError,
    ConfigError,
    CounterSourceUnavailable,
    ManifestParseError,
    MissingSampleFile,
    NoDelta,
    PicoError,
    PreprocessError,
)
from .preprocess import InputTensor, PreprocessParams, load_sample
from .records import IterationRecord, PlatformInfo, RunResult
from .report import write_result_json
from .stats import summarize_records

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

SAMPLE_TYPES = ("image", "audio", "tensor")
DEFAULT_CPUINFO_PATH = "/proc/cpuinfo"


@dataclass
class BenchmarkConfig:
    model_id: str
    backend: BackendSpec
    manifest_path: str
    iterations: int = 100
    warmup: int = 5
    platform_label: str = "unknown"
    seed: int = 0
    # sample type -> PreprocessParams
    preprocess: dict = field(default_factory=dict)
    # directory relative backend paths (replay traces) resolve against
    base_dir: Optional[str] = None

    def __post_init__(self):
        if int(self.iterations) < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if int(self.warmup) < 0:
            raise ConfigError(f"warmup must be >= 0, got {self.warmup}")
        unknown = set(self.preprocess) - set(SAMPLE_TYPES)
        if unknown:
            raise ConfigError(f"unknown preprocess sections: {sorted(unknown)}")

    def params_for(self, kind: str) -> PreprocessParams:
        return self.preprocess.get(kind) or PreprocessParams()

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "backend": self.backend.to_dict(),
            "manifest_path": str(self.manifest_path),
            "iterations": int(self.iterations),
            "warmup": int(self.warmup),
            "platform_label": self.platform_label,
            "seed": int(self.seed),
            "preprocess": {k: v.to_dict() for k, v in sorted(self.preprocess.items())},
        }


def config_from_mapping(doc: dict, base_dir=None) -> BenchmarkConfig:
    """Build a config from parsed TOML; relative paths resolve against ``base_dir``."""
    for key in ("model_id", "manifest"):
        if key not in doc:
            raise ConfigError(f"missing required field '{key}'")
    manifest = Path(doc["manifest"])
    if base_dir is not None and not manifest.is_absolute():
        manifest = Path(base_dir) / manifest
    preprocess = {}
    for kind, section in doc.get("preprocess", {}).items():
        if not isinstance(section, dict):
            raise ConfigError(f"preprocess.{kind} must be a table")
        preprocess[kind] = PreprocessParams.from_mapping(section)
    extra = set(doc) - {"model_id", "manifest", "iterations", "warmup", "platform_label",
                        "seed", "backend", "preprocess"}
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    try:
        return BenchmarkConfig(
            model_id=str(doc["model_id"]),
            backend=BackendSpec.from_mapping(doc.get("backend")),
            manifest_path=str(manifest),
            iterations=int(doc.get("iterations", 100)),
            warmup=int(doc.get("warmup", 5)),
            platform_label=str(doc.get("platform_label", "unknown")),
            seed=int(doc.get("seed", 0)),
            preprocess=preprocess,
            base_dir=None if base_dir is None else str(base_dir),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PicoError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> BenchmarkConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_mapping(doc, base_dir=path.parent)


# -- dataset -------------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    id: str
    type: str
    path: Path
    preprocess: dict = field(default_factory=dict)


@dataclass
class Dataset:
    name: str
    samples: list

    def __len__(self):
        return len(self.samples)


def load_manifest(path, check_files: bool = True) -> Dataset:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestParseError(f"cannot read manifest {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(
            f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ManifestParseError(f"{path}: top level must be an object")
    entries = doc.get("samples")
    if not isinstance(entries, list):
        raise ManifestParseError(f"{path}: field 'samples' must be a list")
    if not entries:
        raise ManifestParseError(f"{path}: no samples")
    samples, seen = [], set()
    for i, e in enumerate(entries):
        where = f"{path}: samples[{i}]"
        if not isinstance(e, dict):
            raise ManifestParseError(f"{where}: must be an object")
        for key in ("id", "type", "path"):
            if not isinstance(e.get(key), str):
                raise ManifestParseError(f"{where}.{key}: missing or not a string")
        if e["type"] not in SAMPLE_TYPES:
            raise ManifestParseError(f"{where}.type: {e['type']!r} not in {SAMPLE_TYPES}")
        if e["id"] in seen:
            raise ManifestParseError(f"{where}.id: duplicate id {e['id']!r}")
        overrides = e.get("preprocess", {})
        if not isinstance(overrides, dict):
            raise ManifestParseError(f"{where}.preprocess: must be an object")
        seen.add(e["id"])
        sample_path = path.parent / e["path"]
        if check_files and not sample_path.is_file():
            raise MissingSampleFile(f"sample {e['id']!r}: file not found: {sample_path}")
        samples.append(Sample(e["id"], e["type"], sample_path, overrides))
    return Dataset(str(doc.get("name", path.stem)), samples)


def prepare_sample(sample: Sample, cfg_params: PreprocessParams) -> InputTensor:
    try:
        params = PreprocessParams.from_mapping(sample.preprocess, base=cfg_params)
        return load_sample(sample.type, sample.path, params)
    except PreprocessError as exc:
        if exc.sample_id is None:
            raise type(exc)(exc.args[0] if exc.args else "", sample_id=sample.id) from exc
        raise
    except ConfigError as exc:
        raise PreprocessError(str(exc), sample_id=sample.id) from exc


# -- platform ------------------------------------------------------------------

_CPU_MODEL_KEYS = ("model name", "Model", "Hardware", "cpu model", "Processor")


def _cpu_model_from(text: str) -> Optional[str]:
    found = {}
    for line in text.splitlines():
        key, sep, value = line.partition(":")
        key = key.strip()
        if sep and value.strip() and key not in found:
            found[key] = value.strip()
    for key in _CPU_MODEL_KEYS:
        if key in found:
            return found[key]
    return None


def detect_platform(label: str = "unknown", cpuinfo_path=DEFAULT_CPUINFO_PATH,
                    meminfo_path=sysmon.DEFAULT_MEMINFO_PATH) -> PlatformInfo:
    """Best-effort host description; anything undetectable is 'unknown' (or 0 kB)."""
    system = _platform.system()
    os_name = f"{system} {_platform.release()}".strip() if system else "unknown"
    try:
        cpu_model = _cpu_model_from(Path(cpuinfo_path).read_text()) or "unknown"
    except OSError:
        cpu_model = "unknown"
    try:
        total_kb = sysmon.read_mem_snapshot(meminfo_path).total_kb
    except CounterSourceUnavailable:
        total_kb = 0
    return PlatformInfo(label, os_name or "unknown", cpu_model, os.cpu_count() or 1, total_kb)


# -- measurement -----------------------------------------------------------------

def _clock_resolution_ns() -> int:
    return max(1, round(time.get_clock_info("perf_counter").resolution * 1e9))


def _window_cpu(a, b) -> Optional[float]:
    if a is None or b is None:
        return None
    try:
        return sysmon.cpu_utilization(a, b)
    except NoDelta:
        return None


def run_benchmark(cfg: BenchmarkConfig, monitor: Optional[sysmon.SystemMonitor] = None,
                  partial_path=None, backend: Optional[Backend] = None) -> RunResult:
    """Execute warmup plus ``cfg.iterations`` measured inferences.

    On a backend failure the records gathered so far are written to
    ``partial_path`` (when given) before the error propagates. A caller-owned
    ``backend`` is used as is and left open.
    """
    monitor = monitor or sysmon.SystemMonitor.from_env()
    dataset = load_manifest(cfg.manifest_path)
    inputs = [prepare_sample(s, cfg.params_for(s.type)) for s in dataset.samples]

    monitor.mem()  # fail before spawning anything if memory counters are missing
    try:
        monitor.cpu()
        cpu = monitor.cpu
    except CounterSourceUnavailable as exc:
        log.warning("CPU counters unavailable (%s); cpu_pct will be recorded as absent", exc)
        cpu = lambda: None  # noqa: E731

    platform = detect_platform(cfg.platform_label, meminfo_path=monitor.meminfo_path)
    config_echo = cfg.to_dict()
    resolution_ns = _clock_resolution_ns()
    clock = time.perf_counter_ns
    mem_pct = lambda: sysmon.memory_utilization(monitor.mem())  # noqa: E731

    owned = backend is None
    if owned:
        backend = load_backend(cfg.backend, seed=cfg.seed, base_dir=cfg.base_dir)
    records = []
    started_at = time.time_ns() // 1_000_000
    n = len(inputs)

    def result(cpu_pct_run=None) -> RunResult:
        return RunResult(cfg.model_id, platform, config_echo, started_at, cpu_pct_run,
                         records, summarize_records(records))

    try:
        for i in range(cfg.warmup):
            backend.infer(inputs[i % n])

        run_a = cpu()
        for i in range(cfg.iterations):
            k = i % n
            x = inputs[k]
            mem_before = mem_pct()
            cpu_a = cpu()
            t0 = clock()
            out = backend.infer(x)
            t1 = clock()
            cpu_b = cpu()
            mem_after = mem_pct()
            elapsed = t1 - t0
            floored = elapsed <= 0
            if floored:
                elapsed = resolution_ns
                log.warning("iteration %d: zero elapsed time, recorded clock resolution", i)
            records.append(IterationRecord(
                index=i,
                sample_id=dataset.samples[k].id,
                latency_ms=elapsed / 1e6,
                cpu_pct=_window_cpu(cpu_a, cpu_b),
                mem_pct_before=mem_before,
                mem_pct_after=mem_after,
                predicted_label=out.label,
                confidence=out.confidence,
                latency_floored=floored,
            ))
        run_b = cpu()
    except BackendError:
        if partial_path is not None:
            write_result_json(result(), partial_path)
            log.error("backend failed after %d records; partial results in %s",
                      len(records), partial_path)
        raise
    finally:
        if owned:
            backend.close()
    return result(_window_cpu(run_a, run_b))
