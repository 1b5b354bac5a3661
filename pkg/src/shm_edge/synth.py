"""Synthetic bridge accelerations and severity-controlled anomaly injection.

A trace is white sensor noise plus one transient per passing vehicle. Each
transient is a damped sinusoid at the structure's first modal frequency,
shaped by a smooth onset so that loading builds up over a couple of seconds
rather than as an impulse. A degraded structure is modelled by a lower modal
frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, ParameterError, ValidationError
from .signal import AccelTrace, Window, as_matrix

STATES = ("normal", "anomalous")


@dataclass(frozen=True)
class BridgeSimConfig:
    natural_freq_hz: float = 3.0
    anomaly_freq_hz: float = 2.6
    damping_ratio: float = 0.01
    vehicle_rate_per_min: float = 6.0
    excitation_amplitude: float = 0.05
    noise_sigma: float = 0.0002
    seed: int = 0
    # log-normal spread of per-vehicle amplitude (0 gives identical vehicles)
    amplitude_spread: float = 0.4
    rise_time_s: float = 2.5
    sample_rate_hz: float = 100.0

    def __post_init__(self) -> None:
        for name in ("natural_freq_hz", "anomaly_freq_hz"):
            f = getattr(self, name)
            if not 0 < f < 25:
                raise ValidationError(f"{name} must lie in (0, 25) Hz, got {f}")
        if not 0 < self.damping_ratio < 1:
            raise ValidationError("damping_ratio must lie in (0, 1)")
        if self.noise_sigma < 0 or self.amplitude_spread < 0 or self.rise_time_s < 0:
            raise ValidationError("noise_sigma, amplitude_spread and rise_time_s must be non-negative")
        if self.vehicle_rate_per_min < 0:
            raise ValidationError("vehicle_rate_per_min must be non-negative")
        if not self.sample_rate_hz > 0:
            raise ValidationError("sample_rate_hz must be positive")

    def freq_for(self, state: str) -> float:
        if state not in STATES:
            raise ParameterError(f"state must be one of {STATES}")
        return self.natural_freq_hz if state == "normal" else self.anomaly_freq_hz

    def with_seed(self, seed: int) -> "BridgeSimConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class SeverityLevel:
    """Multiplier on the normal-to-anomaly peak distance; 1.0 is the original anomaly."""

    fraction: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.fraction <= 2.0:
            raise ValidationError(f"severity fraction must lie in [0, 2], got {self.fraction}")


def _draw_events(cfg: BridgeSimConfig, duration_s: float, rng: np.random.Generator):
    n = rng.poisson(cfg.vehicle_rate_per_min * duration_s / 60.0)
    times = np.sort(rng.uniform(0.0, duration_s, n))
    amps = cfg.excitation_amplitude * np.exp(rng.normal(0.0, cfg.amplitude_spread, n))
    return times, amps


def vehicle_events(cfg: BridgeSimConfig, duration_s: float) -> tuple[np.ndarray, np.ndarray]:
    """Arrival times (s) and peak amplitudes (g) used by ``generate_trace`` for the same config."""
    return _draw_events(cfg, duration_s, np.random.default_rng(cfg.seed))


def event_kernel(cfg: BridgeSimConfig, freq_hz: float) -> np.ndarray:
    """Response to a single vehicle, truncated after eight decay time constants."""
    fs = cfg.sample_rate_hz
    decay = cfg.damping_ratio * 2 * math.pi * freq_hz
    wd = 2 * math.pi * freq_hz * math.sqrt(1 - cfg.damping_ratio**2)
    t = np.arange(int(8.0 / decay * fs)) / fs
    k = np.exp(-decay * t) * np.sin(wd * t)
    if cfg.rise_time_s > 0:
        k *= 1.0 - np.exp(-t / cfg.rise_time_s)
    return k


def generate_trace(
    cfg: BridgeSimConfig,
    duration_s: float,
    state: str = "normal",
    event_times: Sequence[float] | None = None,
    start_time: float = 0.0,
) -> AccelTrace:
    """Seed-deterministic synthetic trace.

    ``event_times`` overrides the Poisson arrivals; forced events use the
    nominal ``excitation_amplitude``.
    """
    if not duration_s > 0:
        raise ParameterError("duration_s must be positive")
    freq = cfg.freq_for(state)
    fs = cfg.sample_rate_hz
    n = int(round(duration_s * fs))
    rng = np.random.default_rng(cfg.seed)
    times, amps = _draw_events(cfg, duration_s, rng)
    if event_times is not None:
        times = np.asarray(event_times, dtype=np.float64)
        amps = np.full(times.size, cfg.excitation_amplitude)
    x = rng.normal(0.0, cfg.noise_sigma, n) if cfg.noise_sigma > 0 else np.zeros(n)

    kernel = event_kernel(cfg, freq)
    for t0, a in zip(times, amps):
        i0 = int(math.ceil(t0 * fs - 1e-9))
        if i0 >= n:
            continue
        m = min(kernel.size, n - i0)
        x[i0:i0 + m] += a * kernel[:m]
    return AccelTrace(fs, x, start_time)


def generate_stationary_windows(
    n: int,
    M: int = 500,
    n_tones: int = 8,
    noise_sigma: float = 0.01,
    sample_rate_hz: float = 100.0,
    seed: int = 0,
) -> np.ndarray:
    """(n, M) matrix of random-phase tones plus white noise.

    Each tone contributes a rank-2 (sine, cosine) pair, so the signal
    subspace has dimension ``2 * n_tones`` with a clear eigengap above the
    noise floor. Tones sit on exact window bins between 1 and 10 Hz.
    """
    rng = np.random.default_rng(seed)
    res = sample_rate_hz / M
    bins = np.linspace(round(1.0 / res), round(10.0 / res), n_tones).round().astype(int)
    amps = np.linspace(1.0, 0.4, n_tones)
    t = np.arange(M) / sample_rate_hz
    X = noise_sigma * rng.normal(size=(n, M))
    for b, a in zip(bins, amps):
        phase = rng.uniform(0, 2 * math.pi, (n, 1))
        gain = a * (1.0 + 0.1 * rng.normal(size=(n, 1)))
        X += gain * np.sin(2 * math.pi * b * res * t + phase)
    return X


# -- severity injection --------------------------------------------------------


def _dominant_peak_hz(X: np.ndarray, sample_rate_hz: float) -> float:
    mag = np.abs(np.fft.rfft(X, axis=1)).mean(axis=0)
    mag[0] = 0.0
    return float(np.argmax(mag)) * sample_rate_hz / X.shape[1]


def peak_frequency(windows: Sequence[Window]) -> float:
    """Frequency of the largest non-DC bin of the mean window magnitude spectrum."""
    return _dominant_peak_hz(as_matrix(windows), windows[0].sample_rate_hz)


def inject_severity(
    normal: Sequence[Window],
    anomaly: Sequence[Window],
    level: SeverityLevel | float,
    segment_s: float = 900.0,
    band_bins: int = 3,
) -> list[Window]:
    """Move the anomaly peak so its distance from the normal peak scales by ``level``.

    Anomaly windows are concatenated into ``segment_s`` segments. In each
    segment the complex spectrum within ``band_bins`` window bins of the
    anomaly peak is cut out and re-added at the shifted location, then the
    segment is transformed back and split into windows again.
    """
    if not isinstance(level, SeverityLevel):
        level = SeverityLevel(float(level))
    if not normal or not anomaly:
        raise ParameterError("both window sets must be non-empty")
    M = len(anomaly[0])
    fs = anomaly[0].sample_rate_hz
    if len(normal[0]) != M or not math.isclose(normal[0].sample_rate_hz, fs):
        raise ParameterError("normal and anomaly windows differ in length or sample rate")
    f_n = peak_frequency(normal)
    f_a = peak_frequency(anomaly)
    if abs(f_a - f_n) < fs / M:
        raise DegenerateInputError(f"peaks at {f_n} Hz and {f_a} Hz are within one bin")
    shift_hz = (level.fraction - 1.0) * (f_a - f_n)
    half_band = band_bins * fs / M

    per_seg = max(1, int(round(segment_s * fs / M)))
    out: list[Window] = []
    for s in range(0, len(anomaly), per_seg):
        group = anomaly[s:s + per_seg]
        x = as_matrix(group).ravel()
        L = x.size
        res = fs / L
        X = np.fft.rfft(x)
        f = np.arange(X.size) * res
        src = np.flatnonzero(np.abs(f - f_a) <= half_band + 1e-12)
        shift = int(round(shift_hz / res))
        if shift:
            dst = src + shift
            ok = (dst > 0) & (dst < X.size - 1)
            band = X[src].copy()
            X[src] = 0.0
            np.add.at(X, dst[ok], band[ok])
            x = np.fft.irfft(X, n=L)
        out.extend(w.with_values(x[i * M:(i + 1) * M]) for i, w in enumerate(group))
    return out


@dataclass(frozen=True)
class Campaign:
    """Normal training/validation traces plus normal and anomalous test traces."""

    train: AccelTrace
    val: AccelTrace
    test_normal: AccelTrace
    test_anomalous: AccelTrace


def generate_campaign(
    cfg: BridgeSimConfig = BridgeSimConfig(),
    train_h: float = 10.0,
    val_h: float = 5.0,
    test_h: float = 5.0,
) -> Campaign:
    """Four independent traces seeded ``cfg.seed + 1`` to ``cfg.seed + 4``."""
    parts = []
    for i, (hours, state) in enumerate(
        ((train_h, "normal"), (val_h, "normal"), (test_h, "normal"), (test_h, "anomalous")), start=1
    ):
        parts.append(generate_trace(cfg.with_seed(cfg.seed + i), hours * 3600.0, state))
    return Campaign(*parts)
