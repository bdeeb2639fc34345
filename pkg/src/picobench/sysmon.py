"""System-wide CPU and memory sampling from procfs counter files.

CPU utilization is the busy fraction of the aggregate tick counters between
two snapshots; memory utilization is ``(MemTotal - MemAvailable) / MemTotal``.
Both counter paths can be redirected (tests point them at verbatim copies of
the kernel files).
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import CounterSourceUnavailable, NoDelta

DEFAULT_CPU_STAT_PATH = "/proc/stat"
DEFAULT_MEMINFO_PATH = "/proc/meminfo"

CPU_STAT_ENV = "PICO_CPU_STAT_PATH"
MEMINFO_ENV = "PICO_MEMINFO_PATH"

TICK_FIELDS = ("user", "nice", "system", "idle", "iowait", "irq", "softirq", "steal")


@dataclass(frozen=True)
class CpuSnapshot:
    user: int
    nice: int
    system: int
    idle: int
    iowait: int
    irq: int
    softirq: int
    steal: int
    timestamp_ns: int = 0

    def ticks(self) -> tuple[int, ...]:
        return tuple(getattr(self, name) for name in TICK_FIELDS)

    @property
    def total(self) -> int:
        return sum(self.ticks())

    @property
    def idle_total(self) -> int:
        return self.idle + self.iowait


@dataclass(frozen=True)
class MemSnapshot:
    total_kb: int
    available_kb: int
    timestamp_ns: int = 0

    def __post_init__(self):
        if self.total_kb <= 0:
            raise ValueError(f"total_kb must be positive, got {self.total_kb}")
        if not 0 <= self.available_kb <= self.total_kb:
            raise ValueError(
                f"available_kb={self.available_kb} outside [0, {self.total_kb}]")


def parse_cpu_stat(text: str, timestamp_ns: int = 0) -> CpuSnapshot:
    """Parse the aggregate ``cpu`` line out of /proc/stat contents.

    Counters missing on older kernels (steal) are taken as zero; guest
    columns are already folded into user/nice by the kernel and are ignored.
    """
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0] != "cpu":
            continue
        try:
            values = [int(v) for v in parts[1:1 + len(TICK_FIELDS)]]
        except ValueError as exc:
            raise CounterSourceUnavailable(f"unparsable cpu line: {line!r}") from exc
        if len(values) < 4:
            raise CounterSourceUnavailable(f"cpu line has too few fields: {line!r}")
        if any(v < 0 for v in values):
            raise CounterSourceUnavailable(f"negative tick count in {line!r}")
        values += [0] * (len(TICK_FIELDS) - len(values))
        return CpuSnapshot(*values, timestamp_ns=timestamp_ns)
    raise CounterSourceUnavailable("no aggregate 'cpu' line found")


def format_cpu_stat(snap: CpuSnapshot) -> str:
    return "cpu  " + " ".join(str(v) for v in snap.ticks())


def parse_meminfo(text: str, timestamp_ns: int = 0) -> MemSnapshot:
    entries = {}
    for line in text.splitlines():
        key, sep, rest = line.partition(":")
        if not sep:
            continue
        try:
            entries[key.strip()] = int(rest.split()[0])
        except (IndexError, ValueError):
            continue
    if "MemTotal" not in entries:
        raise CounterSourceUnavailable("MemTotal missing from meminfo")
    total = entries["MemTotal"]
    if "MemAvailable" in entries:
        available = entries["MemAvailable"]
    else:
        # pre-3.14 kernels: approximate the reclaimable-aware estimate
        available = sum(entries.get(k, 0) for k in ("MemFree", "Buffers", "Cached"))
    available = min(max(available, 0), total)
    try:
        return MemSnapshot(total, available, timestamp_ns)
    except ValueError as exc:
        raise CounterSourceUnavailable(str(exc)) from exc


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CounterSourceUnavailable(f"cannot read {path}: {exc.strerror}") from exc


def read_cpu_snapshot(path=DEFAULT_CPU_STAT_PATH) -> CpuSnapshot:
    return parse_cpu_stat(_read_text(path), time.monotonic_ns())


def read_mem_snapshot(path=DEFAULT_MEMINFO_PATH) -> MemSnapshot:
    return parse_meminfo(_read_text(path), time.monotonic_ns())


def cpu_utilization(a: CpuSnapshot, b: CpuSnapshot) -> float:
    """Busy percentage of all ticks elapsed between snapshots ``a`` and ``b``."""
    total_delta = b.total - a.total
    idle_delta = b.idle_total - a.idle_total
    if total_delta <= 0:
        raise NoDelta(f"total tick delta is {total_delta}")
    pct = 100.0 * (total_delta - idle_delta) / total_delta
    return min(max(pct, 0.0), 100.0)


def memory_utilization(m: MemSnapshot) -> float:
    return 100.0 * (m.total_kb - m.available_kb) / m.total_kb


@dataclass
class SystemMonitor:
    """Bundles the two counter sources so the runner can be pointed at fixtures."""

    cpu_stat_path: str = DEFAULT_CPU_STAT_PATH
    meminfo_path: str = DEFAULT_MEMINFO_PATH

    @classmethod
    def from_env(cls) -> "SystemMonitor":
        return cls(
            cpu_stat_path=os.environ.get(CPU_STAT_ENV, DEFAULT_CPU_STAT_PATH),
            meminfo_path=os.environ.get(MEMINFO_ENV, DEFAULT_MEMINFO_PATH),
        )

    def cpu(self) -> CpuSnapshot:
        return read_cpu_snapshot(self.cpu_stat_path)

    def mem(self) -> MemSnapshot:
        return read_mem_snapshot(self.meminfo_path)

