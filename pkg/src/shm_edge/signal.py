"""Trace ingestion, windowing and per-window front-ends (energy, RSNR, FFT, Haar DWT).

Trace file formats
------------------
CSV: one sample per line (units of g). Comment lines start with ``#``; a
``# sample_rate_hz=<v>`` comment declares the rate. Other ``# key=value``
comments understood: ``start_time``, ``axis``.

Binary: a 16-byte little-endian header followed by int16 samples::

    offset  size  field
    0       4     magic b"SHM1"
    4       4     u32 sample_rate_hz
    8       4     f32 lsb_to_g   (scale applied to every int16 sample)
    12      4     u32 start_time (epoch seconds)
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Sequence, Union

import numpy as np

from .errors import (
    EmptyOutputError,
    ParameterError,
    ParseError,
    UndefinedInputError,
    ValidationError,
)

BINARY_MAGIC = b"SHM1"
BINARY_HEADER = struct.Struct("<4sIfI")
DEFAULT_LSB_TO_G = 1e-5


@dataclass(frozen=True)
class AccelTrace:
    sample_rate_hz: float
    samples: np.ndarray
    start_time: float = 0.0
    axis_label: str = "z"

    def __post_init__(self) -> None:
        if not self.sample_rate_hz > 0:
            raise ValidationError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValidationError("samples must be one-dimensional")
        bad = np.flatnonzero(~np.isfinite(samples))
        if bad.size:
            raise ValidationError(f"non-finite sample at index {int(bad[0])}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def time_of(self, index: int) -> float:
        return self.start_time + index / self.sample_rate_hz

    def slice_seconds(self, start_s: float, stop_s: float) -> "AccelTrace":
        i0 = int(round(start_s * self.sample_rate_hz))
        i1 = int(round(stop_s * self.sample_rate_hz))
        return AccelTrace(self.sample_rate_hz, self.samples[i0:i1], self.time_of(i0), self.axis_label)


@dataclass(frozen=True)
class Window:
    values: np.ndarray
    origin_index: int = 0
    duration_s: float = 0.0
    start_time: float = 0.0

    def __len__(self) -> int:
        return self.values.size

    @property
    def sample_rate_hz(self) -> float:
        return self.values.size / self.duration_s

    @property
    def origin_time(self) -> float:
        """Absolute time of the first sample."""
        return self.start_time + self.origin_index / self.sample_rate_hz

    def with_values(self, values: np.ndarray) -> "Window":
        return Window(np.asarray(values, dtype=np.float64), self.origin_index, self.duration_s, self.start_time)


@dataclass(frozen=True)
class SpectralFrame:
    bins: np.ndarray
    bin_resolution_hz: float
    domain_tag: str

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.bins.size) * self.bin_resolution_hz


WindowsLike = Union[Sequence[Window], np.ndarray]


def as_matrix(windows: WindowsLike) -> np.ndarray:
    """Stack windows into an (N, M) float64 matrix; ndarrays pass through."""
    if isinstance(windows, np.ndarray):
        X = np.asarray(windows, dtype=np.float64)
        return X[None, :] if X.ndim == 1 else X
    if len(windows) == 0:
        return np.empty((0, 0))
    return np.stack([w.values for w in windows]).astype(np.float64, copy=False)


# -- ingestion -----------------------------------------------------------------


def _read_bytes(source: Union[bytes, bytearray, BinaryIO, str, Path]) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    return source.read()


def _parse_csv(data: bytes, sample_rate_hz: float | None) -> AccelTrace:
    meta: dict[str, str] = {}
    values: list[float] = []
    for lineno, raw in enumerate(data.decode("utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, val = body.partition("=")
                meta[key.strip()] = val.strip()
            continue
        try:
            values.append(float(line.split(",")[0]))
        except ValueError:
            raise ParseError(f"cannot parse sample {line!r}", location=lineno) from None
    rate = _resolve_rate(meta.get("sample_rate_hz"), sample_rate_hz)
    start = float(meta.get("start_time", 0.0))
    return AccelTrace(rate, np.asarray(values, dtype=np.float64), start, meta.get("axis", "z"))


def _resolve_rate(declared: str | float | None, given: float | None) -> float:
    if declared is None and given is None:
        raise ParameterError("sample rate neither declared in the file nor given")
    if declared is None:
        return float(given)  # type: ignore[arg-type]
    declared = float(declared)
    if given is not None and not math.isclose(declared, given):
        raise ParameterError(f"file declares {declared} Hz but {given} Hz was requested")
    return declared


def _parse_int16(data: bytes, sample_rate_hz: float | None) -> AccelTrace:
    if len(data) < BINARY_HEADER.size:
        raise ParseError("truncated header", location=len(data))
    magic, rate, lsb, start = BINARY_HEADER.unpack_from(data, 0)
    if magic != BINARY_MAGIC:
        raise ParseError(f"bad magic {magic!r}", location=0)
    payload = data[BINARY_HEADER.size:]
    if len(payload) % 2:
        raise ParseError("odd payload length", location=len(data) - 1)
    if not (math.isfinite(lsb) and lsb > 0):
        raise ValidationError(f"invalid lsb_to_g {lsb}")
    raw = np.frombuffer(payload, dtype="<i2")
    rate = _resolve_rate(rate, sample_rate_hz)
    return AccelTrace(rate, raw.astype(np.float64) * float(lsb), float(start))


def ingest_trace(source, format: str = "int16", sample_rate_hz: float | None = None) -> AccelTrace:
    """Parse a trace from bytes, a binary file object or a path.

    ``format`` is ``"csv"`` or ``"int16"``. For CSV without a rate header
    ``sample_rate_hz`` is required.
    """
    if sample_rate_hz is not None and not sample_rate_hz > 0:
        raise ParameterError("sample_rate_hz must be positive")
    data = _read_bytes(source)
    if format == "csv":
        return _parse_csv(data, sample_rate_hz)
    if format in ("int16", "bin", "binary"):
        return _parse_int16(data, sample_rate_hz)
    raise ParameterError(f"unknown trace format {format!r}")


def guess_format(path: Union[str, Path]) -> str:
    return "csv" if str(path).endswith((".csv", ".txt")) else "int16"


def write_trace(trace: AccelTrace, format: str = "int16", lsb_to_g: float = DEFAULT_LSB_TO_G) -> bytes:
    """Serialise a trace. int16 output is quantised and saturates at the int16 range."""
    if format == "csv":
        buf = io.StringIO()
        buf.write(f"# sample_rate_hz={trace.sample_rate_hz!r}\n")
        buf.write(f"# start_time={trace.start_time!r}\n")
        buf.write(f"# axis={trace.axis_label}\n")
        for v in trace.samples:
            buf.write(f"{float(v)!r}\n")
        return buf.getvalue().encode("utf-8")
    if format != "int16":
        raise ParameterError(f"unknown trace format {format!r}")
    if float(trace.sample_rate_hz) != int(trace.sample_rate_hz):
        raise ParameterError("binary format stores an integer sample rate")
    lsb32 = float(np.float32(lsb_to_g))
    q = np.clip(np.rint(trace.samples / lsb32), -32768, 32767).astype("<i2")
    header = BINARY_HEADER.pack(BINARY_MAGIC, int(trace.sample_rate_hz), lsb32, int(trace.start_time))
    return header + q.tobytes()


# -- windows -------------------------------------------------------------------


def window_length(duration_s: float, sample_rate_hz: float) -> int:
    return int(round(duration_s * sample_rate_hz))


def windowize(trace: AccelTrace, duration_s: float) -> list[Window]:
    """Split into contiguous, non-overlapping windows; the trailing remainder is dropped."""
    M = window_length(duration_s, trace.sample_rate_hz)
    if M < 1:
        raise ParameterError(f"window of {duration_s} s is shorter than one sample")
    n = len(trace) // M
    if n == 0:
        raise EmptyOutputError(f"trace of {len(trace)} samples is shorter than one {M}-sample window")
    block = trace.samples[: n * M].reshape(n, M)
    dur = M / trace.sample_rate_hz
    return [Window(block[i], i * M, dur, trace.start_time) for i in range(n)]


def window_energy(w: Union[Window, np.ndarray]) -> float:
    v = w.values if isinstance(w, Window) else np.asarray(w, dtype=np.float64)
    return float(np.dot(v, v))


def energies(windows: WindowsLike) -> np.ndarray:
    X = as_matrix(windows)
    return np.einsum("ij,ij->i", X, X)


def rsnr_db(x: Union[Window, np.ndarray], x_hat: Union[Window, np.ndarray]) -> float:
    """Reconstructed signal-to-noise ratio, 20*log10(|x| / |x - x_hat|). Exact match gives +inf."""
    a = x.values if isinstance(x, Window) else np.asarray(x, dtype=np.float64)
    b = x_hat.values if isinstance(x_hat, Window) else np.asarray(x_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"length mismatch {a.shape} vs {b.shape}")
    num = float(np.linalg.norm(a))
    if num == 0.0:
        raise UndefinedInputError("RSNR undefined for an all-zero reference window")
    den = float(np.linalg.norm(a - b))
    if den == 0.0:
        return math.inf
    return 20.0 * math.log10(num / den)


def rsnr_db_rows(X: np.ndarray, X_hat: np.ndarray) -> np.ndarray:
    """Row-wise RSNR for matrices; rows of zeros in ``X`` must be filtered beforehand."""
    num = np.linalg.norm(X, axis=1)
    den = np.linalg.norm(X - X_hat, axis=1)
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(num / den)


# -- spectral front-ends -------------------------------------------------------


def _fft_bin_count(M: int, sample_rate_hz: float, cutoff_hz: float) -> tuple[int, float]:
    nyquist = sample_rate_hz / 2.0
    if cutoff_hz > nyquist or cutoff_hz <= 0:
        raise ParameterError(f"cutoff {cutoff_hz} Hz outside (0, {nyquist}] Hz")
    res = sample_rate_hz / M
    n = min(int(math.floor(cutoff_hz / res + 1e-9)), M // 2 + 1)
    return n, res


def fft_frame(w: Window, cutoff_hz: float = 25.0) -> SpectralFrame:
    """One-sided magnitude spectrum, |X_k| * 2 / M, keeping bins below ``cutoff_hz``."""
    M = len(w)
    n, res = _fft_bin_count(M, w.sample_rate_hz, cutoff_hz)
    mag = np.abs(np.fft.rfft(w.values)) * (2.0 / M)
    return SpectralFrame(mag[:n], res, "fft")


def fft_matrix(X: np.ndarray, sample_rate_hz: float, cutoff_hz: float = 25.0) -> np.ndarray:
    M = X.shape[1]
    n, _ = _fft_bin_count(M, sample_rate_hz, cutoff_hz)
    return np.abs(np.fft.rfft(X, axis=1))[:, :n] * (2.0 / M)


_SQRT_HALF = math.sqrt(0.5)


def haar_dwt(x: np.ndarray, levels: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Orthonormal Haar analysis along the last axis. Returns (approximation, details fine→coarse)."""
    a = np.asarray(x, dtype=np.float64)
    M = a.shape[-1]
    if levels < 0 or M % (1 << levels):
        raise ParameterError(f"window length {M} not divisible by 2**{levels}")
    details = []
    for _ in range(levels):
        even, odd = a[..., 0::2], a[..., 1::2]
        details.append((even - odd) * _SQRT_HALF)
        a = (even + odd) * _SQRT_HALF
    return a, details


def dwt_frame(w: Window, levels: int = 2, wavelet: str = "haar") -> SpectralFrame:
    """Approximation coefficients at ``levels``.

    ``bin_resolution_hz`` holds the coefficient rate (sample_rate / 2**levels).
    """
    if wavelet != "haar":
        raise ParameterError(f"unsupported wavelet {wavelet!r}; only 'haar' is implemented")
    approx, _ = haar_dwt(w.values, levels)
    return SpectralFrame(approx, w.sample_rate_hz / (1 << levels), "dwt")


# -- feature front-end used by the reconstructors ------------------------------

DOMAINS = ("time", "fft", "dwt")
NORMALIZATIONS = ("rms", "none")


@dataclass(frozen=True)
class Frontend:
    """Maps raw windows to the feature vectors fed to a reconstructor.

    ``normalize="rms"`` scales every feature vector to unit RMS, so the
    reconstruction MSE becomes a scale-free relative error.
    """

    domain: str = "time"
    normalize: str = "rms"
    sample_rate_hz: float = 100.0
    cutoff_hz: float = 25.0
    dwt_levels: int = 2

    def __post_init__(self) -> None:
        if self.domain not in DOMAINS:
            raise ParameterError(f"domain must be one of {DOMAINS}")
        if self.normalize not in NORMALIZATIONS:
            raise ParameterError(f"normalize must be one of {NORMALIZATIONS}")

    def __call__(self, windows: WindowsLike) -> np.ndarray:
        X = as_matrix(windows)
        if self.domain == "fft":
            X = fft_matrix(X, self.sample_rate_hz, self.cutoff_hz)
        elif self.domain == "dwt":
            X, _ = haar_dwt(X, self.dwt_levels)
        if self.normalize == "rms":
            rms = np.sqrt(np.mean(X * X, axis=1, keepdims=True))
            X = np.divide(X, rms, out=np.zeros_like(X), where=rms > 0)
        return X

    def feature_dim(self, M: int) -> int:
        if self.domain == "fft":
            return _fft_bin_count(M, self.sample_rate_hz, self.cutoff_hz)[0]
        if self.domain == "dwt":
            if M % (1 << self.dwt_levels):
                raise ParameterError(f"window length {M} not divisible by 2**{self.dwt_levels}")
            return M >> self.dwt_levels
        return M


@dataclass(frozen=True)
class TraceStream:
    """Header of a trace being read incrementally plus an iterator over sample chunks."""

    sample_rate_hz: float
    start_time: float
    chunks: object  # iterator of float64 arrays


def open_trace_stream(path: Union[str, Path], format: str | None = None, chunk_samples: int = 360_000,
                      sample_rate_hz: float | None = None) -> TraceStream:
    """Read a trace chunk by chunk. Binary files are never loaded whole; CSV is parsed up front."""
    fmt = format or guess_format(path)
    if fmt == "csv":
        tr = ingest_trace(path, "csv", sample_rate_hz)
        chunks = (tr.samples[i:i + chunk_samples] for i in range(0, len(tr), chunk_samples))
        return TraceStream(tr.sample_rate_hz, tr.start_time, chunks)
    fh = open(path, "rb")
    head = fh.read(BINARY_HEADER.size)
    if len(head) < BINARY_HEADER.size:
        fh.close()
        raise ParseError("truncated header", location=len(head))
    magic, rate, lsb, start = BINARY_HEADER.unpack(head)
    if magic != BINARY_MAGIC:
        fh.close()
        raise ParseError(f"bad magic {magic!r}", location=0)
    rate = _resolve_rate(rate, sample_rate_hz)

    def gen():
        offset = BINARY_HEADER.size
        with fh:
            while True:
                raw = fh.read(2 * chunk_samples)
                if not raw:
                    return
                if len(raw) % 2:
                    raise ParseError("odd payload length", location=offset + len(raw) - 1)
                offset += len(raw)
                yield np.frombuffer(raw, dtype="<i2").astype(np.float64) * float(lsb)

    return TraceStream(rate, float(start), gen())
