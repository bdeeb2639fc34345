import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import ECHO_RUNNER, echo_spec
from picobench.backends import (
    BackendSpec,
    InferenceOutput,
    Lcg64,
    ReplayBackend,
    SubprocessBackend,
    SyntheticBackend,
    decode_payload,
    encode_payload,
    load_backend,
    write_replay_trace,
)
from picobench.errors import (
    BackendCrashed,
    BackendTimeout,
    ConfigError,
    HandshakeTimeout,
    ProtocolError,
    ReplayFileMissing,
    ShapeMismatch,
    SpawnFailure,
)
from picobench.preprocess import InputTensor, Quantization


def vec(values):
    values = np.asarray(values, dtype=np.float32)
    return InputTensor(values.shape, values)


# -- spec validation ---------------------------------------------------------------

def test_spec_requires_kind_and_params():
    with pytest.raises(ConfigError, match="backend.kind"):
        BackendSpec.from_mapping({"n_classes": 2})
    with pytest.raises(ConfigError, match="backend.input_len"):
        BackendSpec.from_mapping({"kind": "synthetic", "n_classes": 2})
    with pytest.raises(ConfigError):
        BackendSpec.from_mapping({"kind": "tflite"})
    with pytest.raises(ConfigError):
        BackendSpec("synthetic", {"n_classes": 2, "input_len": 2, "busy_ms": -1}).validate()
    with pytest.raises(ConfigError):
        BackendSpec("subprocess", {"command": "x", "timeout_ms": 0}).validate()


# -- synthetic -----------------------------------------------------------------------

def test_lcg_reference_values():
    # state_1 = a*7 + c mod 2**64, computed by hand from the published constants
    rng = Lcg64(7)
    expected = (6364136223846793005 * 7 + 1442695040888963407) % 2**64
    assert rng.next_u64() == expected
    assert 0.0 <= Lcg64(0).uniform() < 1.0


def test_synthetic_loads():
    b = load_backend(BackendSpec("synthetic", {"n_classes": 4, "input_len": 8, "busy_ms": 0,
                                               "seed": 7}))
    assert isinstance(b, SyntheticBackend)
    assert b.weights.shape == (4, 8)
    assert np.all(np.abs(b.weights) <= 1.0)


def test_synthetic_identity_weights():
    b = SyntheticBackend(4, 4)
    b.set_weights(np.eye(4), np.zeros(4))
    out = b.infer(vec([0, 0, 1, 0]))
    assert out.label == "class_2"
    assert out.confidence == 1.0
    assert out.raw_scores == (0.0, 0.0, 1.0, 0.0)


def test_synthetic_deterministic_across_calls_and_handles():
    x = vec(np.linspace(-1, 1, 8))
    b = SyntheticBackend(4, 8, seed=7)
    first = b.infer(x)
    assert all(b.infer(x) == first for _ in range(1000))
    assert SyntheticBackend(4, 8, seed=7).infer(x) == first
    assert SyntheticBackend(4, 8, seed=8).infer(x) != first


def test_synthetic_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        SyntheticBackend(2, 8).infer(vec(np.zeros(7)))


def test_synthetic_busy_wait_lower_bound():
    b = SyntheticBackend(2, 4, busy_ms=3)
    x = vec(np.zeros(4))
    for _ in range(5):
        t0 = time.perf_counter_ns()
        b.infer(x)
        assert time.perf_counter_ns() - t0 >= 3_000_000


def test_synthetic_accepts_quantized_input():
    t = InputTensor((4,), np.array([1, 2, 3, 4], dtype=np.uint8), Quantization(1.0, 0))
    out = SyntheticBackend(3, 4, seed=1).infer(t)
    assert out.label.startswith("class_")


@settings(max_examples=100)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=20))
def test_argmax_label_consistency(scores):
    out = InferenceOutput.from_scores(scores)
    best = max(scores)
    assert out.confidence == best
    assert out.label == f"class_{scores.index(best)}"  # list.index gives the lowest tie


def test_argmax_tie_lowest_index():
    assert InferenceOutput.from_scores([0.5, 0.9, 0.9]).label == "class_1"


# -- replay ----------------------------------------------------------------------------

def test_replay_serves_trace_in_order_and_wraps(tmp_path):
    outputs = [InferenceOutput(f"l{i}", i / 100) for i in range(100)]
    path = tmp_path / "trace.jsonl"
    write_replay_trace(path, outputs)
    b = load_backend(BackendSpec("replay", {"path": str(path)}))
    x = vec([0.0])
    assert [b.infer(x) for _ in range(100)] == outputs
    assert b.infer(x) == outputs[0]


def test_replay_relative_path(tmp_path):
    write_replay_trace(tmp_path / "t.jsonl", [InferenceOutput("a", 1.0, (1.0, 0.0))])
    b = load_backend(BackendSpec("replay", {"path": "t.jsonl"}), base_dir=tmp_path)
    assert b.infer(vec([0.0])).raw_scores == (1.0, 0.0)


def test_replay_missing_and_malformed(tmp_path):
    with pytest.raises(ReplayFileMissing):
        ReplayBackend(tmp_path / "absent.jsonl")
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"label": "a", "confidence": "high"}\n')
    with pytest.raises(ProtocolError, match="bad.jsonl:1"):
        ReplayBackend(bad)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("\n")
    with pytest.raises(ProtocolError):
        ReplayBackend(empty)


# -- subprocess ----------------------------------------------------------------------

def test_payload_encoding_round_trip():
    f = vec([1.5, -2.0, 0.25])
    assert decode_payload(encode_payload(f), "f32").tolist() == [1.5, -2.0, 0.25]
    u = InputTensor((2,), np.array([3, 250], dtype=np.uint8))
    assert decode_payload(encode_payload(u), "u8").tolist() == [3, 250]


def test_subprocess_echo_runner():
    with load_backend(echo_spec("--label", "yes", "--confidence", "0.99")) as b:
        assert b.model == "echo"
        out = b.infer(vec(np.zeros(16)))
        assert out == InferenceOutput("yes", 0.99)
        assert b.infer(vec(np.zeros(3))) == out


def test_subprocess_raw_scores_pass_through():
    with load_backend(echo_spec("--label", "dog", "--confidence", "17.16",
                                "--raw-scores", "1.0,17.16,3.5")) as b:
        out = b.infer(vec([1.0]))
    assert out.confidence == 17.16
    assert out.raw_scores == (1.0, 17.16, 3.5)


def test_subprocess_spawn_failure():
    with pytest.raises(SpawnFailure):
        load_backend(BackendSpec("subprocess", {"command": "/nonexistent/runner-binary"}))


def test_subprocess_child_exits_before_handshake():
    spec = BackendSpec("subprocess", {"command": ECHO_RUNNER[0], "args": ["-c", "pass"]})
    with pytest.raises(SpawnFailure):
        load_backend(spec)


def test_subprocess_handshake_timeout():
    start = time.monotonic()
    with pytest.raises(HandshakeTimeout):
        load_backend(echo_spec("--no-ready", handshake_timeout_ms=300))
    assert time.monotonic() - start < 5


def test_handshake_budget_defaults_to_timeout():
    spec = echo_spec("--no-ready", timeout_ms=300)
    del spec.params["handshake_timeout_ms"]
    with pytest.raises(HandshakeTimeout, match="300 ms"):
        load_backend(spec)
    with pytest.raises(ConfigError, match="handshake_timeout_ms"):
        echo_spec(handshake_timeout_ms=0).validate()


def test_subprocess_infer_timeout():
    with load_backend(echo_spec("--delay-ms", "1000", timeout_ms=200)) as b:
        with pytest.raises(BackendTimeout):
            b.infer(vec([0.0]))
        with pytest.raises(BackendCrashed):
            b.infer(vec([0.0]))


def test_subprocess_bad_id_is_protocol_error():
    with load_backend(echo_spec("--bad-id")) as b:
        with pytest.raises(ProtocolError, match="does not match"):
            b.infer(vec([0.0]))


def test_subprocess_garbage_is_protocol_error():
    with load_backend(echo_spec("--garbage")) as b:
        with pytest.raises(ProtocolError):
            b.infer(vec([0.0]))


def test_subprocess_crash_mid_run():
    with load_backend(echo_spec("--die-after", "2")) as b:
        b.infer(vec([0.0]))
        b.infer(vec([0.0]))
        with pytest.raises(BackendCrashed):
            b.infer(vec([0.0]))


def test_subprocess_request_ids_increase():
    b = SubprocessBackend(ECHO_RUNNER)
    try:
        for expected in range(1, 6):
            b.infer(vec([0.0]))
            assert b._next_id == expected
    finally:
        b.close()


def test_close_terminates_child_and_is_idempotent():
    b = SubprocessBackend(ECHO_RUNNER)
    proc = b.proc
    assert proc.poll() is None
    b.close()
    assert proc.poll() is not None
    b.close()
    s = SyntheticBackend(2, 2)
    s.close()
    s.close()


def test_close_kills_unresponsive_child():
    # a child that ignores shutdown and stdin EOF
    code = ("import sys, json, time\n"
            "sys.stdin.readline()\n"
            "print(json.dumps({'type': 'ready', 'model': 'stubborn'}), flush=True)\n"
            "time.sleep(60)\n")
    b = SubprocessBackend([ECHO_RUNNER[0], "-c", code])
    proc = b.proc
    start = time.monotonic()
    b.close()
    assert proc.poll() is not None
    assert time.monotonic() - start < 5
