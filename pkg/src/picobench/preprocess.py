"""Input preparation: image resize/normalize, log-power spectrograms, quantization.

Everything here is a pure function of its inputs so preprocessed payloads are
bit-identical between runs on one machine. Samples arrive either as raw tensor
files (the ``PTEN`` container below) or as 16-bit mono PCM WAV clips.

PTEN layout, all little-endian::

    b"PTEN" | version u16 (=1) | dtype u8 (0=f32, 1=u8, 2=i16) | ndim u8
    | dims u32 * ndim | packed data
"""

from __future__ import annotations

import io
import math
import struct
import wave
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ClipTooShort,
    ConfigError,
    MalformedHeader,
    NonPositiveScale,
    NotPowerOfTwo,
    PreprocessError,
    UnsupportedFormat,
    ZeroStd,
)

LOG_FLOOR = 1e-10

PTEN_MAGIC = b"PTEN"
PTEN_VERSION = 1
_PTEN_HEADER = struct.Struct("<4sHBB")
_PTEN_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1"), 2: np.dtype("<i2")}
_PTEN_CODES = {v: k for k, v in _PTEN_DTYPES.items()}


@dataclass(frozen=True)
class ImageTensor:
    """Image as an ``(height, width, channels)`` float64 array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise PreprocessError(f"image must be HxWxC with positive dims, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise PreprocessError("image contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class AudioClip:
    sample_rate_hz: int
    samples: np.ndarray

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise PreprocessError(f"sample rate must be positive, got {self.sample_rate_hz}")
        s = np.asarray(self.samples, dtype=np.float64).ravel()
        if s.size == 0:
            raise PreprocessError("audio clip is empty")
        if not np.all(np.isfinite(s)) or np.any(np.abs(s) > 1.0):
            raise PreprocessError("audio samples must be finite and within [-1, 1]")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class Spectrogram:
    values: np.ndarray  # (n_frames, n_bins), log10 power
    frame_len: int
    hop_len: int

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Quantization:
    scale: float
    zero_point: int


@dataclass(frozen=True)
class InputTensor:
    """The flat payload handed to a backend."""

    shape: tuple
    data: np.ndarray
    quantization: Optional[Quantization] = None

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        data = np.asarray(self.data).ravel()
        if math.prod(shape) != data.size:
            raise PreprocessError(f"shape {shape} does not match {data.size} values")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data)

    @property
    def dtype(self) -> str:
        return "u8" if self.data.dtype == np.uint8 else "f32"


# -- images ------------------------------------------------------------------

def _source_coords(out_size: int, in_size: int):
    scale = in_size / out_size
    src = (np.arange(out_size) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    return lo, hi, src - lo


def _lerp(a, b, frac):
    # a + f*(b-a) keeps a == b exact; the clip absorbs rounding past the endpoints
    out = a + frac * (b - a)
    return np.clip(out, np.minimum(a, b), np.maximum(a, b))


def resize_bilinear(img: ImageTensor, out_h: int, out_w: int) -> ImageTensor:
    """Bilinear resize with half-pixel centers and edge clamping."""
    if out_h < 1 or out_w < 1:
        raise PreprocessError(f"output size must be positive, got {out_h}x{out_w}")
    data = img.data
    y0, y1, fy = _source_coords(out_h, img.height)
    x0, x1, fx = _source_coords(out_w, img.width)
    rows = _lerp(data[y0], data[y1], fy[:, None, None])
    out = _lerp(rows[:, x0], rows[:, x1], fx[None, :, None])
    return ImageTensor(out)


def normalize(img: ImageTensor, mean: Sequence[float], std: Sequence[float]) -> ImageTensor:
    mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), (img.channels,))
    std = np.broadcast_to(np.asarray(std, dtype=np.float64), (img.channels,))
    if np.any(std == 0):
        raise ZeroStd(f"std has a zero entry: {std.tolist()}")
    return ImageTensor((img.data - mean) / std)


# -- FFT / spectrogram ---------------------------------------------------------

def _is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def _bit_reverse_permutation(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def fft(x) -> np.ndarray:
    """Iterative radix-2 decimation-in-time DFT along the last axis.

    Computes ``X[j] = sum_t x[t] exp(-2 pi i j t / n)``; ``n`` must be a power
    of two. Leading axes are treated as a batch.
    """
    a = np.asarray(x, dtype=np.complex128)
    if a.ndim == 0:
        a = a.reshape(1)
    n = a.shape[-1]
    if not _is_power_of_two(n):
        raise NotPowerOfTwo(f"fft length must be a power of two, got {n}")
    batch = a.shape[:-1]
    a = a[..., _bit_reverse_permutation(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(batch + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(batch + (n,))
        size *= 2
    return a


def ifft(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.complex128)
    return np.conj(fft(np.conj(X))) / X.shape[-1]


def hann_window(n: int) -> np.ndarray:
    if n == 1:
        return np.ones(1)
    t = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * t / (n - 1)))


def frame_count(length: int, frame_len: int, hop_len: int) -> int:
    return 1 + (length - frame_len) // hop_len


def stft_log_power(clip: AudioClip, frame_len: int = 512, hop_len: int = 256,
                   floor: float = LOG_FLOOR) -> Spectrogram:
    if not _is_power_of_two(frame_len):
        raise NotPowerOfTwo(f"frame_len must be a power of two, got {frame_len}")
    if hop_len < 1:
        raise PreprocessError(f"hop_len must be >= 1, got {hop_len}")
    x = clip.samples
    if x.size < frame_len:
        raise ClipTooShort(f"clip has {x.size} samples, frame_len is {frame_len}")
    n_frames = frame_count(x.size, frame_len, hop_len)
    starts = np.arange(n_frames) * hop_len
    frames = x[starts[:, None] + np.arange(frame_len)] * hann_window(frame_len)
    spectrum = fft(frames)[:, : frame_len // 2 + 1]
    power = spectrum.real ** 2 + spectrum.imag ** 2
    return Spectrogram(np.log10(np.maximum(power, floor)), frame_len, hop_len)


# -- audio ---------------------------------------------------------------------

def decode_wav_pcm16(data: bytes) -> AudioClip:
    """Decode a mono 16-bit PCM RIFF/WAVE file; samples are scaled by 1/32768."""
    if not data.startswith(b"RIFF"):
        raise MalformedHeader("data does not start with 'RIFF'")
    try:
        with wave.open(io.BytesIO(data), "rb") as wav:
            channels = wav.getnchannels()
            width = wav.getsampwidth()
            rate = wav.getframerate()
            frames = wav.readframes(wav.getnframes())
    except wave.Error as exc:
        if "unknown format" in str(exc):
            raise UnsupportedFormat(f"not PCM: {exc}") from exc
        raise MalformedHeader(str(exc)) from exc
    except (EOFError, struct.error) as exc:
        raise MalformedHeader(f"truncated header: {exc}") from exc
    if channels != 1:
        raise UnsupportedFormat(f"expected mono, got {channels} channels")
    if width != 2:
        raise UnsupportedFormat(f"expected 16-bit samples, got {8 * width}-bit")
    samples = np.frombuffer(frames[: len(frames) // 2 * 2], dtype="<i2") / 32768.0
    return AudioClip(rate, samples)


def encode_wav_pcm16(samples, sample_rate_hz: int) -> bytes:
    pcm = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32768.0), -32768, 32767)
    buf = io.BytesIO()
    with wave.open(buf, "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(sample_rate_hz)
        wav.writeframes(pcm.astype("<i2").tobytes())
    return buf.getvalue()


# -- quantization ----------------------------------------------------------------

def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(t: InputTensor) -> InputTensor:
    """Affine uint8 quantization: ``clamp(round(v / scale) + zero_point, 0, 255)``."""
    if t.quantization is None:
        raise PreprocessError("tensor carries no quantization parameters")
    q = t.quantization
    if not q.scale > 0:
        raise NonPositiveScale(f"scale must be > 0, got {q.scale}")
    values = _round_half_away(np.asarray(t.data, dtype=np.float64) / q.scale) + q.zero_point
    return InputTensor(t.shape, np.clip(values, 0, 255).astype(np.uint8), q)


def dequantize(t: InputTensor) -> np.ndarray:
    q = t.quantization
    return (t.data.astype(np.float64) - q.zero_point) * q.scale


# -- PTEN container ------------------------------------------------------------

def encode_tensor(array) -> bytes:
    arr = np.asarray(array)
    dtype = arr.dtype.newbyteorder("<") if arr.dtype.itemsize > 1 else arr.dtype
    if dtype not in _PTEN_CODES:
        raise PreprocessError(f"unsupported tensor dtype {arr.dtype}")
    header = _PTEN_HEADER.pack(PTEN_MAGIC, PTEN_VERSION, _PTEN_CODES[dtype], arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + dims + arr.astype(dtype).tobytes(order="C")


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < _PTEN_HEADER.size:
        raise MalformedHeader("tensor file shorter than its header")
    magic, version, code, ndim = _PTEN_HEADER.unpack_from(data)
    if magic != PTEN_MAGIC:
        raise MalformedHeader(f"bad tensor magic {magic!r}")
    if version != PTEN_VERSION:
        raise UnsupportedFormat(f"tensor container version {version}")
    if code not in _PTEN_DTYPES:
        raise UnsupportedFormat(f"tensor dtype code {code}")
    offset = _PTEN_HEADER.size
    if len(data) < offset + 4 * ndim:
        raise MalformedHeader("tensor header truncated in dims")
    dims = struct.unpack_from(f"<{ndim}I", data, offset)
    offset += 4 * ndim
    dtype = _PTEN_DTYPES[code]
    expected = math.prod(dims) * dtype.itemsize
    if len(data) - offset != expected:
        raise MalformedHeader(f"tensor payload is {len(data) - offset} bytes, expected {expected}")
    return np.frombuffer(data, dtype=dtype, offset=offset).reshape(dims)


def write_tensor_file(path, array) -> None:
    Path(path).write_bytes(encode_tensor(array))


def read_tensor_file(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


# -- per-sample pipeline ---------------------------------------------------------

@dataclass(frozen=True)
class PreprocessParams:
    """Settings for one sample type; any field left as None skips that step."""

    height: Optional[int] = None
    width: Optional[int] = None
    mean: Optional[tuple] = None
    std: Optional[tuple] = None
    frame_len: int = 512
    hop_len: int = 256
    log_floor: float = LOG_FLOOR
    quant_scale: Optional[float] = None
    quant_zero_point: int = 0

    @classmethod
    def from_mapping(cls, mapping, base: "PreprocessParams | None" = None) -> "PreprocessParams":
        base = base or cls()
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown preprocess keys: {sorted(unknown)}")
        updates = {}
        for key, value in mapping.items():
            if key in ("mean", "std") and value is not None:
                value = tuple(float(v) for v in (value if isinstance(value, (list, tuple)) else [value]))
            updates[key] = value
        return replace(base, **updates)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def _finish(shape, data, params: PreprocessParams) -> InputTensor:
    if params.quant_scale is None:
        return InputTensor(shape, np.asarray(data, dtype=np.float32))
    q = Quantization(float(params.quant_scale), int(params.quant_zero_point))
    return quantize(InputTensor(shape, np.asarray(data, dtype=np.float64), q))


def prepare_image(array, params: PreprocessParams) -> InputTensor:
    img = ImageTensor(array)
    if params.height is not None or params.width is not None:
        img = resize_bilinear(img, params.height or img.height, params.width or img.width)
    if params.mean is not None or params.std is not None:
        img = normalize(img, params.mean or (0.0,), params.std or (1.0,))
    return _finish(img.data.shape, img.data, params)


def prepare_audio(clip: AudioClip, params: PreprocessParams) -> InputTensor:
    spec = stft_log_power(clip, params.frame_len, params.hop_len, params.log_floor)
    return _finish(spec.values.shape, spec.values, params)


def prepare_tensor(array, params: PreprocessParams) -> InputTensor:
    arr = np.asarray(array)
    if arr.dtype == np.uint8 and params.quant_scale is None:
        return InputTensor(arr.shape, arr)
    return _finish(arr.shape, arr.astype(np.float64), params)


def load_sample(kind: str, path, params: PreprocessParams) -> InputTensor:
    """Decode a sample file and run the preprocessing chain for its type."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise PreprocessError(f"cannot read {path}: {exc.strerror}") from exc
    if kind == "audio":
        return prepare_audio(decode_wav_pcm16(raw), params)
    if kind == "image":
        return prepare_image(decode_tensor(raw), params)
    if kind == "tensor":
        return prepare_tensor(decode_tensor(raw), params)
    raise PreprocessError(f"unknown sample type {kind!r}")
