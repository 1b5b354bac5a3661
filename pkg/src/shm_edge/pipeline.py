"""End-to-end detector: energy filter, front-end, reconstructor and calibrated threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .detector import (
    ClassificationReport,
    DetectorProfile,
    IntervalScore,
    ScorePoint,
    Verdict,
    average_scores,
    calibrate_threshold,
    classify,
    evaluate,
    score_matrix,
)
from .energy_filter import EnergyFilterProfile, apply_energy_filter, calibrate_energy_threshold
from .errors import DimensionError, ParameterError
from .persistence import ModelBundle, load_model, save_model
from .reconstruct import (
    ReconModel,
    fit_autoencoder,
    fit_pca_batch,
    fit_pca_streaming,
    iter_blocks,
    reconstruction_mse,
)
from .signal import AccelTrace, Frontend, Window, as_matrix, window_length, windowize

DETECTORS = ("pca", "hpca", "ae")


def resolve_components(M: int, components: int | None = None, cf: float | None = None) -> int:
    """Latent size from either an explicit ``components`` or a compression factor M/k."""
    if components is not None and cf is not None:
        k_cf = int(round(M / cf))
        if k_cf != components:
            raise ParameterError(f"components={components} disagrees with cf={cf} (k={k_cf}) at M={M}")
    if components is None and cf is None:
        raise ParameterError("either components or cf is required")
    k = int(components) if components is not None else int(round(M / float(cf)))
    if not 1 <= k <= M:
        raise ParameterError(f"resolved k={k} outside [1, {M}]")
    return k


@dataclass(frozen=True)
class PipelineConfig:
    input_dim_s: float = 5.0
    output_dim_min: float = 60
    components: int | None = 16
    cf: float | None = None
    detector: str = "pca"
    domain: str = "time"
    normalize: str = "rms"
    energy_filter: bool = True
    qos_rsnr_db: float = 16.0
    energy_step: float = 2.0**-8
    step_mode: str = "additive"
    cutoff_hz: float = 25.0
    dwt_levels: int = 2
    hpca_block: int = 250
    hpca_passes: int = 10
    ae_epochs: int = 80
    ae_lr: float = 1e-3
    ae_activation: str = "relu"
    min_scores: int = 30
    seed: int = 0

    def __post_init__(self) -> None:
        if self.detector not in DETECTORS:
            raise ParameterError(f"detector must be one of {DETECTORS}")

    def frontend(self, sample_rate_hz: float) -> Frontend:
        return Frontend(self.domain, self.normalize, sample_rate_hz, self.cutoff_hz, self.dwt_levels)

    def k_for(self, M: int) -> int:
        """Latent size at window length M; cf is applied to the raw window length."""
        if self.cf is not None:
            return resolve_components(M, None, self.cf)
        return resolve_components(M, self.components, None)


def _fit(cfg: PipelineConfig, F: np.ndarray, k: int) -> ReconModel:
    if cfg.detector == "pca":
        return fit_pca_batch(F, k)
    if cfg.detector == "hpca":
        block = max(cfg.hpca_block, k, 2)
        return fit_pca_streaming(iter_blocks(F, block), k, passes=cfg.hpca_passes, rng_seed=cfg.seed)
    return fit_autoencoder(F, k, epochs=cfg.ae_epochs, lr=cfg.ae_lr, seed=cfg.seed,
                           activation=cfg.ae_activation)


@dataclass
class TrainedPipeline:
    model: ReconModel
    frontend: Frontend
    energy: EnergyFilterProfile | None
    profile: DetectorProfile
    window_length: int
    config: PipelineConfig = field(default_factory=PipelineConfig)

    @property
    def input_dim_s(self) -> float:
        return self.window_length / self.frontend.sample_rate_hz

    def scores(self, windows: Sequence[Window] | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X = as_matrix(windows)
        if X.shape[0] and X.shape[1] != self.window_length:
            raise DimensionError(f"window length {X.shape[1]} differs from trained length {self.window_length}")
        return score_matrix(self.model, X, self.frontend, self.energy)

    def score(self, windows: Sequence[Window]) -> list[ScorePoint]:
        mse, kept = self.scores(windows)
        return [ScorePoint(w.origin_time, float(m) if k else None, bool(k))
                for w, m, k in zip(windows, mse, kept)]

    def detect(self, windows: Sequence[Window], horizon_min: float | None = None,
               t0: float | None = None) -> tuple[list[IntervalScore], list[Verdict]]:
        horizon = self.profile.output_dim_minutes if horizon_min is None else horizon_min
        intervals = average_scores(self.score(windows), horizon, t0)
        return intervals, classify(intervals, self.profile)

    def to_bytes(self, precision: int = 8) -> bytes:
        meta = {"window_length": self.window_length, "config": _config_dict(self.config)}
        return save_model(self.model, self.energy, self.profile, self.frontend, precision, meta)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TrainedPipeline":
        b: ModelBundle = load_model(data)
        cfg = PipelineConfig(**b.meta.get("config", {}))
        if b.frontend is None or b.detector_profile is None:
            raise ParameterError("model file lacks a front-end or detector profile")
        return cls(b.model, b.frontend, b.energy_profile, b.detector_profile, int(b.meta["window_length"]), cfg)


def _config_dict(cfg: PipelineConfig) -> dict:
    from dataclasses import asdict
    return asdict(cfg)


def train_pipeline(
    train: Sequence[Window],
    val: Sequence[Window],
    cfg: PipelineConfig = PipelineConfig(),
) -> TrainedPipeline:
    """Calibrate the energy filter, fit the reconstructor and set the MSE threshold.

    Uses normal data only: ``train`` fits the model, ``val`` drives both the
    energy calibration and the mu + 3 sigma threshold.
    """
    if not train or not val:
        raise ParameterError("train and val must be non-empty")
    M = len(train[0])
    fs = train[0].sample_rate_hz
    frontend = cfg.frontend(fs)
    Xt, Xv = as_matrix(train), as_matrix(val)
    k = cfg.k_for(M)
    k_feat = min(k, frontend.feature_dim(M))

    energy = None
    if cfg.energy_filter:
        energy = calibrate_energy_threshold(Xt, Xv, cfg.qos_rsnr_db, min(k, M - 1), cfg.energy_step,
                                            cfg.step_mode)
        Xt, _ = apply_energy_filter(Xt, energy)
        Xv, _ = apply_energy_filter(Xv, energy)
    model = _fit(cfg, frontend(Xt), k_feat)
    val_mse = reconstruction_mse(model, frontend(Xv))
    profile = calibrate_threshold(val_mse, cfg.output_dim_min, M / fs, cfg.min_scores)
    return TrainedPipeline(model, frontend, energy, profile, M, cfg)


class StreamingDetector:
    """Incremental detector: push samples, receive (interval, verdict) pairs as intervals close.

    Produces the same intervals as windowing the whole trace and calling
    ``average_scores`` with ``t0`` at the trace start.
    """

    def __init__(self, pipeline: TrainedPipeline, start_time: float = 0.0, horizon_min: float | None = None):
        self.pipeline = pipeline
        self.start_time = float(start_time)
        self.horizon_s = 60.0 * (pipeline.profile.output_dim_minutes if horizon_min is None else horizon_min)
        self.window_s = pipeline.input_dim_s
        self._buf = np.empty(0)
        self._windows_seen = 0
        self._current = 0
        self._sum = 0.0
        self._kept = 0
        self._total = 0

    def _interval_of(self, window_index: int) -> int:
        return int(math.floor(window_index * self.window_s / self.horizon_s + 1e-9))

    def _close(self) -> tuple[IntervalScore, Verdict]:
        i = self._current
        mean = self._sum / self._kept if self._kept else math.nan
        iv = IntervalScore(i, self.start_time + i * self.horizon_s, self.start_time + (i + 1) * self.horizon_s,
                           mean, self._kept, self._total)
        self._current += 1
        self._sum, self._kept, self._total = 0.0, 0, 0
        return iv, classify([iv], self.pipeline.profile)[0]

    def push(self, samples: np.ndarray) -> list[tuple[IntervalScore, Verdict]]:
        self._buf = np.concatenate([self._buf, np.asarray(samples, dtype=np.float64)])
        M = self.pipeline.window_length
        n = self._buf.size // M
        out: list[tuple[IntervalScore, Verdict]] = []
        if n == 0:
            return out
        X = self._buf[: n * M].reshape(n, M)
        self._buf = self._buf[n * M:]
        mse, kept = self.pipeline.scores(X)
        for m, kp in zip(mse, kept):
            idx = self._interval_of(self._windows_seen)
            while self._current < idx:
                out.append(self._close())
            self._total += 1
            if kp:
                self._sum += float(m)
                self._kept += 1
            self._windows_seen += 1
        return out

    def flush(self) -> list[tuple[IntervalScore, Verdict]]:
        """Close the interval holding the last complete window; trailing samples are dropped."""
        if self._total == 0:
            return []
        return [self._close()]


# -- synthetic campaign helpers ------------------------------------------------


def windows_of(traces: AccelTrace | Iterable[AccelTrace], duration_s: float) -> list[Window]:
    if isinstance(traces, AccelTrace):
        return windowize(traces, duration_s)
    out: list[Window] = []
    for t in traces:
        out.extend(windowize(t, duration_s))
    return out


@dataclass(frozen=True)
class IntervalEvaluation:
    report: ClassificationReport
    intervals: tuple[IntervalScore, ...]
    labels: tuple[bool, ...]
    verdicts: tuple[Verdict, ...]


def evaluate_split(
    pipeline: TrainedPipeline,
    normal: Sequence[Window],
    anomalous: Sequence[Window],
    horizon_min: float,
) -> IntervalEvaluation:
    """Average normal and anomalous traces separately so every interval has a pure label."""
    ivs: list[IntervalScore] = []
    labels: list[bool] = []
    for wins, lab in ((normal, False), (anomalous, True)):
        if not wins:
            continue
        iv, _ = pipeline.detect(wins, horizon_min)
        ivs += iv
        labels += [lab] * len(iv)
    verdicts = classify(ivs, pipeline.profile)
    scores = [iv.mean_mse if not iv.no_verdict else math.nan for iv in ivs]
    report = evaluate(verdicts, labels, scores)
    return IntervalEvaluation(report, tuple(ivs), tuple(labels), tuple(verdicts))
