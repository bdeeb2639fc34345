"""Per-iteration records and the persisted run result."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

from .stats import MetricSummary, summarize_records


@dataclass
class IterationRecord:
    index: int
    sample_id: str
    latency_ms: float
    cpu_pct: Optional[float]  # None when the tick window had no delta
    mem_pct_before: float
    mem_pct_after: float
    predicted_label: str
    confidence: float
    # t1 == t0 on the clock; latency_ms holds the clock resolution instead
    latency_floored: bool = False


@dataclass
class PlatformInfo:
    label: str = "unknown"
    os: str = "unknown"
    cpu_model: str = "unknown"
    cores: int = 1
    total_memory_kb: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    model_id: str
    platform: PlatformInfo
    config: dict
    started_at_unix_ms: int
    cpu_pct_run: Optional[float]
    records: list = field(default_factory=list)
    summaries: dict = field(default_factory=dict)  # metric -> MetricSummary

    def recompute_summaries(self) -> dict[str, MetricSummary]:
        return summarize_records(self.records)
