"""Inference backends: a seeded synthetic model, an external runner over a
newline-delimited JSON pipe, and replay of a recorded output trace.

Wire protocol for the subprocess backend (one JSON object per line)::

    parent -> child  {"type": "hello", "version": 1}
    child  -> parent {"type": "ready", "model": "<name>"}
    parent -> child  {"type": "infer", "id": 1, "shape": [..], "dtype": "f32"|"u8",
                      "data": "<base64 of little-endian packed values>"}
    child  -> parent {"type": "result", "id": 1, "label": "..", "confidence": 0.9,
                      "raw_scores": [..]}          # raw_scores optional
    parent -> child  {"type": "shutdown"}          # on close, then stdin EOF

The child's stderr is inherited, so its diagnostics land in the harness log.

Synthetic weights come from a 64-bit linear congruential generator
(state = 6364136223846793005 * state + 1442695040888963407 mod 2**64, seeded
with the configured seed). Each draw takes the top 53 bits of the new state
as u in [0, 1) and maps it to 2u - 1. The weight matrix is drawn row by row
(n_classes x input_len), then the n_classes biases.
"""

from __future__ import annotations

import base64
import json
import logging
import math
import os
import selectors
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BackendCrashed,
    BackendTimeout,
    ConfigError,
    HandshakeTimeout,
    ProtocolError,
    ReplayFileMissing,
    ShapeMismatch,
    SpawnFailure,
)
from .preprocess import InputTensor

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
CLOSE_GRACE_S = 2.0

KINDS = ("synthetic", "subprocess", "replay")
_REQUIRED = {
    "synthetic": ("n_classes", "input_len"),
    "subprocess": ("command",),
    "replay": ("path",),
}


@dataclass(frozen=True)
class InferenceOutput:
    label: str
    confidence: float
    raw_scores: Optional[tuple] = None

    @classmethod
    def from_scores(cls, scores: Sequence[float], labels: Optional[Sequence[str]] = None):
        """Label and confidence of the highest score; ties go to the lowest index."""
        scores = tuple(float(s) for s in scores)
        best = max(range(len(scores)), key=lambda i: (scores[i], -i))
        label = labels[best] if labels is not None else f"class_{best}"
        return cls(label, scores[best], scores)

    def to_dict(self) -> dict:
        d = {"label": self.label, "confidence": self.confidence}
        if self.raw_scores is not None:
            d["raw_scores"] = list(self.raw_scores)
        return d


@dataclass
class BackendSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"backend.kind must be one of {KINDS}, got {self.kind!r}")
        for key in _REQUIRED[self.kind]:
            if key not in self.params:
                raise ConfigError(f"missing required field 'backend.{key}' for kind {self.kind!r}")
        p = self.params
        if self.kind == "synthetic":
            if int(p["n_classes"]) < 1 or int(p["input_len"]) < 1:
                raise ConfigError("backend.n_classes and backend.input_len must be >= 1")
            if float(p.get("busy_ms", 0)) < 0:
                raise ConfigError("backend.busy_ms must be >= 0")
        if self.kind == "subprocess":
            for key in ("timeout_ms", "handshake_timeout_ms"):
                if float(p.get(key, 1)) <= 0:
                    raise ConfigError(f"backend.{key} must be > 0")

    @classmethod
    def from_mapping(cls, mapping) -> "BackendSpec":
        if not isinstance(mapping, dict):
            raise ConfigError("missing required table 'backend'")
        params = dict(mapping)
        kind = params.pop("kind", None)
        if kind is None:
            raise ConfigError("missing required field 'backend.kind'")
        spec = cls(str(kind), params)
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


class Backend:
    """A loaded model. One handle serves one thread at a time."""

    name = "backend"

    def infer(self, t: InputTensor) -> InferenceOutput:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class Lcg64:
    MULTIPLIER = 6364136223846793005
    INCREMENT = 1442695040888963407
    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = int(seed) & self.MASK

    def next_u64(self) -> int:
        self.state = (self.MULTIPLIER * self.state + self.INCREMENT) & self.MASK
        return self.state

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53


class SyntheticBackend(Backend):
    """Seeded dense layer ``W @ x + bias`` followed by a busy-wait of ``busy_ms``."""

    name = "synthetic"

    def __init__(self, n_classes: int, input_len: int, busy_ms: float = 0.0, seed: int = 0):
        self.n_classes = int(n_classes)
        self.input_len = int(input_len)
        self.busy_ns = int(round(float(busy_ms) * 1e6))
        rng = Lcg64(seed)
        weights = [2.0 * rng.uniform() - 1.0 for _ in range(self.n_classes * self.input_len)]
        bias = [2.0 * rng.uniform() - 1.0 for _ in range(self.n_classes)]
        self.set_weights(np.reshape(weights, (self.n_classes, self.input_len)), bias)

    def set_weights(self, weights, bias) -> None:
        """Replace the drawn parameters (test hook)."""
        w = np.asarray(weights, dtype=np.float64)
        b = np.asarray(bias, dtype=np.float64)
        if w.shape != (self.n_classes, self.input_len) or b.shape != (self.n_classes,):
            raise ShapeMismatch(f"weights {w.shape} / bias {b.shape} do not fit "
                                f"{self.n_classes} classes x {self.input_len} inputs")
        self.weights = w
        self.bias = b

    def infer(self, t: InputTensor) -> InferenceOutput:
        start = time.perf_counter_ns()
        x = np.asarray(t.data, dtype=np.float64)
        if x.size != self.input_len:
            raise ShapeMismatch(f"expected {self.input_len} input values, got {x.size} "
                                f"(shape {list(t.shape)})")
        # elementwise products are correctly rounded and fsum is exact, so
        # scores do not depend on BLAS summation order or platform
        scores = [math.fsum((row * x).tolist() + [b]) for row, b in zip(self.weights, self.bias)]
        deadline = start + self.busy_ns
        while time.perf_counter_ns() < deadline:
            pass
        return InferenceOutput.from_scores(scores)


class ReplayBackend(Backend):
    """Serves a recorded trace (JSON lines of InferenceOutput dicts), wrapping at the end."""

    name = "replay"

    def __init__(self, path):
        self.path = Path(path)
        try:
            text = self.path.read_text()
        except FileNotFoundError:
            raise ReplayFileMissing(f"replay trace not found: {self.path}") from None
        except OSError as exc:
            raise ReplayFileMissing(f"cannot read replay trace {self.path}: {exc.strerror}") from exc
        self.outputs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                self.outputs.append(_parse_output(json.loads(line)))
            except (ValueError, TypeError) as exc:
                raise ProtocolError(f"{self.path}:{lineno}: {exc}") from exc
        if not self.outputs:
            raise ProtocolError(f"replay trace {self.path} holds no outputs")
        self._next = 0

    def infer(self, t: InputTensor) -> InferenceOutput:
        out = self.outputs[self._next]
        self._next = (self._next + 1) % len(self.outputs)
        return out


def write_replay_trace(path, outputs) -> None:
    lines = [json.dumps(o.to_dict()) for o in outputs]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_output(msg) -> InferenceOutput:
    if not isinstance(msg, dict):
        raise ValueError("output must be a JSON object")
    label = msg.get("label")
    conf = msg.get("confidence")
    if not isinstance(label, str):
        raise ValueError("'label' must be a string")
    if isinstance(conf, bool) or not isinstance(conf, (int, float)):
        raise ValueError("'confidence' must be a number")
    raw = msg.get("raw_scores")
    if raw is not None:
        if not isinstance(raw, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw):
            raise ValueError("'raw_scores' must be a list of numbers")
        raw = tuple(float(v) for v in raw)
    return InferenceOutput(label, float(conf), raw)


def encode_payload(t: InputTensor) -> str:
    dtype = "u1" if t.dtype == "u8" else "<f4"
    return base64.b64encode(np.asarray(t.data).astype(dtype).tobytes()).decode("ascii")


def decode_payload(data: str, dtype: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(data), dtype="u1" if dtype == "u8" else "<f4")


class SubprocessBackend(Backend):
    name = "subprocess"

    def __init__(self, command, args=(), timeout_ms: float = 10_000,
                 handshake_timeout_ms: Optional[float] = None):
        argv = [command] if isinstance(command, str) else list(command)
        argv += [str(a) for a in args]
        self.argv = argv
        self.timeout_s = float(timeout_ms) / 1000.0
        # model loading in the child may take far longer than one inference
        self.handshake_timeout_s = (self.timeout_s if handshake_timeout_ms is None
                                    else float(handshake_timeout_ms) / 1000.0)
        self._next_id = 0
        self._buf = b""
        self._broken = False
        try:
            self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        except OSError as exc:
            raise SpawnFailure(f"cannot start {argv[0]!r}: {exc.strerror or exc}") from exc
        self._sel = selectors.DefaultSelector()
        self._sel.register(self.proc.stdout, selectors.EVENT_READ)
        try:
            self._handshake()
        except BaseException:
            self.close()
            raise

    def _handshake(self):
        try:
            self._send({"type": "hello", "version": PROTOCOL_VERSION})
            line = self._readline(HandshakeTimeout, "handshake", self.handshake_timeout_s)
        except BackendCrashed as exc:
            raise SpawnFailure(f"{self.argv[0]!r} exited before handshake ({exc})") from None
        msg = self._decode(line)
        if msg.get("type") != "ready":
            raise ProtocolError(f"expected a 'ready' message, got {msg!r}")
        self.model = str(msg.get("model", "unknown"))
        log.info("subprocess backend ready: model %s", self.model)

    def _send(self, obj) -> None:
        try:
            self.proc.stdin.write((json.dumps(obj) + "\n").encode())
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            raise BackendCrashed(self._exit_note(f"write failed: {exc}")) from None

    def _exit_note(self, what: str) -> str:
        try:
            rc = self.proc.wait(timeout=0.2)
        except subprocess.TimeoutExpired:
            rc = None
        return f"{what}; child exit code {rc}" if rc is not None else what

    def _readline(self, timeout_exc, phase: str, timeout_s: float) -> bytes:
        deadline = time.monotonic() + timeout_s
        fd = self.proc.stdout.fileno()
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0 or not self._sel.select(remaining):
                self._broken = True
                raise timeout_exc(f"no {phase} reply within {timeout_s * 1000:.0f} ms")
            chunk = os.read(fd, 65536)
            if not chunk:
                self._broken = True
                raise BackendCrashed(self._exit_note(f"child closed stdout during {phase}"))
            self._buf += chunk
        line, _, self._buf = self._buf.partition(b"\n")
        return line

    def _decode(self, line: bytes) -> dict:
        try:
            msg = json.loads(line)
        except ValueError as exc:
            raise ProtocolError(f"malformed JSON from child: {line[:200]!r}") from exc
        if not isinstance(msg, dict):
            raise ProtocolError(f"expected a JSON object from child, got {line[:200]!r}")
        return msg

    def infer(self, t: InputTensor) -> InferenceOutput:
        if self._broken:
            raise BackendCrashed("backend stream is no longer usable after an earlier failure")
        self._next_id += 1
        rid = self._next_id
        self._send({"type": "infer", "id": rid, "shape": list(t.shape), "dtype": t.dtype,
                    "data": encode_payload(t)})
        msg = self._decode(self._readline(BackendTimeout, "inference", self.timeout_s))
        if msg.get("type") != "result":
            raise ProtocolError(f"expected a 'result' message, got type {msg.get('type')!r}")
        if msg.get("id") != rid:
            self._broken = True
            raise ProtocolError(f"response id {msg.get('id')!r} does not match request id {rid}")
        try:
            return _parse_output(msg)
        except ValueError as exc:
            raise ProtocolError(str(exc)) from None

    def close(self) -> None:
        proc = getattr(self, "proc", None)
        if proc is None:
            return
        if proc.poll() is None:
            try:
                proc.stdin.write(b'{"type": "shutdown"}\n')
                proc.stdin.flush()
            except (OSError, ValueError):
                pass
        for stream in (proc.stdin, proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            proc.wait(timeout=CLOSE_GRACE_S)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
        self._sel.close()
        self.proc = None


def load_backend(spec: BackendSpec, seed: int = 0, base_dir=None) -> Backend:
    """Instantiate a backend; relative replay paths resolve against ``base_dir``."""
    spec.validate()
    p = spec.params
    if spec.kind == "synthetic":
        return SyntheticBackend(p["n_classes"], p["input_len"], p.get("busy_ms", 0.0),
                                p.get("seed", seed))
    if spec.kind == "subprocess":
        return SubprocessBackend(p["command"], p.get("args", ()), p.get("timeout_ms", 10_000),
                                 p.get("handshake_timeout_ms"))
    path = Path(p["path"])
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return ReplayBackend(path)
