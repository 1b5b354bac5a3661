"""MSE scoring, mu + 3 sigma thresholding, interval averaging and evaluation metrics."""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .energy_filter import EnergyFilterProfile, energy_mask
from .errors import DimensionError, InsufficientDataError, ParameterError
from .reconstruct import ReconModel, reconstruction_mse
from .signal import Frontend, Window, as_matrix


@dataclass(frozen=True)
class ScorePoint:
    window_origin: float
    mse: float | None
    kept: bool = True

    def __post_init__(self) -> None:
        if self.kept and (self.mse is None or not math.isfinite(self.mse) or self.mse < 0):
            raise ParameterError(f"kept score must carry a finite non-negative mse, got {self.mse}")


@dataclass(frozen=True)
class DetectorProfile:
    mse_threshold: float
    mu: float
    sigma: float
    output_dim_minutes: float = 60
    input_dim_s: float = 5.0
    n_scores: int = 0
    provenance: str = ""

    def __post_init__(self) -> None:
        if self.output_dim_minutes * 60 < self.input_dim_s:
            raise ParameterError("averaging horizon is shorter than one input window")

    def with_horizon(self, output_dim_minutes: float) -> "DetectorProfile":
        return DetectorProfile(self.mse_threshold, self.mu, self.sigma, output_dim_minutes,
                               self.input_dim_s, self.n_scores, self.provenance)


@dataclass(frozen=True)
class IntervalScore:
    index: int
    start: float
    end: float
    mean_mse: float  # NaN when no window survived the filter
    window_count: int
    total_windows: int = 0

    @property
    def no_verdict(self) -> bool:
        return self.window_count == 0


class Verdict(str, enum.Enum):
    NORMAL = "normal"
    ANOMALY = "anomaly"
    NO_VERDICT = "NV"


@dataclass(frozen=True)
class ClassificationReport:
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    sensitivity: float
    specificity: float
    auc: float
    roc_points: tuple[tuple[float, float], ...] = field(repr=False, default=())
    no_verdict: int = 0

    @property
    def undefined(self) -> tuple[str, ...]:
        """Names of metrics whose denominator was zero (reported as NaN)."""
        return tuple(n for n in ("accuracy", "sensitivity", "specificity", "auc")
                     if math.isnan(getattr(self, n)))

    def summary(self) -> str:
        def fmt(v: float) -> str:
            return "undefined" if math.isnan(v) else f"{v:.4f}"
        return "\n".join([
            f"tp={self.tp} tn={self.tn} fp={self.fp} fn={self.fn} no_verdict={self.no_verdict}",
            f"accuracy={fmt(self.accuracy)} sensitivity={fmt(self.sensitivity)} "
            f"specificity={fmt(self.specificity)} auc={fmt(self.auc)}",
        ])

    def roc_csv(self) -> str:
        return "fpr,tpr\n" + "".join(f"{f!r},{t!r}\n" for f, t in self.roc_points)


# -- scoring -------------------------------------------------------------------


def score_matrix(
    model: ReconModel,
    windows: Sequence[Window] | np.ndarray,
    frontend: Frontend | None = None,
    energy: EnergyFilterProfile | float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised scoring: (mse array with NaN for dropped windows, kept mask)."""
    X = as_matrix(windows)
    if X.shape[0] == 0:
        return np.empty(0), np.empty(0, dtype=bool)
    kept = energy_mask(X, energy) if energy is not None else np.ones(X.shape[0], dtype=bool)
    F = (frontend or Frontend(normalize="none"))(X[kept])
    if F.shape[1] != model.M:
        raise DimensionError(f"feature dimension {F.shape[1]} does not match model dimension {model.M}")
    mse = np.full(X.shape[0], np.nan)
    if F.shape[0]:
        mse[kept] = reconstruction_mse(model, F)
    return mse, kept


def score_windows(
    model: ReconModel,
    windows: Sequence[Window],
    frontend: Frontend | None = None,
    energy: EnergyFilterProfile | float | None = None,
) -> list[ScorePoint]:
    """MSE per window; windows dropped by the energy filter carry ``kept=False`` and no mse."""
    mse, kept = score_matrix(model, windows, frontend, energy)
    out = []
    for i, w in enumerate(windows):
        origin = w.origin_time if isinstance(w, Window) else float(i)
        out.append(ScorePoint(origin, float(mse[i]) if kept[i] else None, bool(kept[i])))
    return out


def _provenance(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype="<f8").tobytes()).hexdigest()[:16]


def calibrate_threshold(
    scores: Sequence[ScorePoint] | np.ndarray,
    output_dim_minutes: float = 60,
    input_dim_s: float = 5.0,
    min_scores: int = 30,
) -> DetectorProfile:
    """mu + 3 sigma over kept validation scores, with the sample (N-1) standard deviation."""
    if isinstance(scores, np.ndarray):
        v = scores[np.isfinite(scores)].astype(np.float64)
    else:
        v = np.array([s.mse for s in scores if s.kept], dtype=np.float64)
    if v.size < max(min_scores, 2):
        raise InsufficientDataError(f"threshold calibration needs {max(min_scores, 2)} kept scores, got {v.size}")
    mu = float(np.mean(v))
    sigma = float(np.std(v, ddof=1))
    return DetectorProfile(mu + 3.0 * sigma, mu, sigma, output_dim_minutes, input_dim_s, int(v.size),
                           _provenance(v))


# -- temporal averaging and classification -------------------------------------


def average_scores(
    scores: Sequence[ScorePoint],
    horizon_minutes: float,
    t0: float | None = None,
    t_end: float | None = None,
) -> list[IntervalScore]:
    """Tumbling-interval means over kept windows.

    Intervals start at ``t0`` (default: first window origin) and every
    interval up to the last window (or ``t_end``) is emitted, including
    those without kept windows.
    """
    H = float(horizon_minutes) * 60.0
    if not H > 0:
        raise ParameterError("horizon must be positive")
    if not scores:
        return []
    origins = np.array([s.window_origin for s in scores], dtype=np.float64)
    kept = np.array([s.kept for s in scores], dtype=bool)
    mse = np.array([s.mse if s.kept else 0.0 for s in scores], dtype=np.float64)
    start = float(origins.min()) if t0 is None else float(t0)
    idx = np.floor((origins - start) / H + 1e-9).astype(np.int64)
    if np.any(idx < 0):
        raise ParameterError("window precedes the first interval")
    n_int = int(idx.max()) + 1
    if t_end is not None:
        n_int = max(n_int, int(math.ceil((t_end - start) / H - 1e-9)))
    total = np.bincount(idx, minlength=n_int)
    count = np.bincount(idx, weights=kept, minlength=n_int).astype(np.int64)
    sums = np.bincount(idx, weights=np.where(kept, mse, 0.0), minlength=n_int)
    out = []
    for i in range(n_int):
        mean = float(sums[i] / count[i]) if count[i] else math.nan
        out.append(IntervalScore(i, start + i * H, start + (i + 1) * H, mean, int(count[i]), int(total[i])))
    return out


def classify(averaged: Sequence[IntervalScore], profile: DetectorProfile | float) -> list[Verdict]:
    """Anomaly iff the interval mean strictly exceeds the threshold."""
    th = profile.mse_threshold if isinstance(profile, DetectorProfile) else float(profile)
    out = []
    for a in averaged:
        if a.no_verdict:
            out.append(Verdict.NO_VERDICT)
        else:
            out.append(Verdict.ANOMALY if a.mean_mse > th else Verdict.NORMAL)
    return out


# -- evaluation ----------------------------------------------------------------


def _as_label(v) -> bool:
    if isinstance(v, Verdict):
        return v is Verdict.ANOMALY
    if isinstance(v, str):
        return v.lower() in ("anomaly", "anomalous", "1", "true")
    return bool(v)


def roc_curve(scores: Sequence[float], labels: Sequence[bool]) -> tuple[tuple[float, float], ...]:
    """ROC points from (0, 0) to (1, 1), sweeping the threshold down through the distinct scores."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray([_as_label(v) for v in labels], dtype=bool)
    P, N = int(y.sum()), int((~y).sum())
    if P == 0 or N == 0:
        return ()
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    pts = [(0.0, 0.0)] + [(float(f / N), float(t / P)) for f, t in zip(fps, tps)]
    return tuple(pts)


def auc_trapezoid(points: Sequence[tuple[float, float]]) -> float:
    if len(points) < 2:
        return math.nan
    p = np.asarray(points)
    return float(np.sum(np.diff(p[:, 0]) * (p[1:, 1] + p[:-1, 1]) / 2.0))


def _ratio(num: int, den: int) -> float:
    return num / den if den else math.nan


def evaluate(
    verdicts: Sequence[Verdict],
    labels: Sequence,
    scores: Sequence[float] | None = None,
) -> ClassificationReport:
    """Confusion counts over verdict-bearing intervals plus ROC/AUC on ``scores``.

    No-verdict intervals are excluded from the counts and reported separately.
    Without scores the ROC is built from the binary verdicts.
    """
    if len(verdicts) != len(labels) or (scores is not None and len(scores) != len(labels)):
        raise ParameterError("verdicts, labels and scores must have equal length")
    valid = [i for i, v in enumerate(verdicts) if v is not Verdict.NO_VERDICT]
    pred = np.array([verdicts[i] is Verdict.ANOMALY for i in valid], dtype=bool)
    truth = np.array([_as_label(labels[i]) for i in valid], dtype=bool)
    tp = int(np.sum(pred & truth))
    tn = int(np.sum(~pred & ~truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    roc_scores = [float(scores[i]) for i in valid] if scores is not None else pred.astype(float)
    roc = roc_curve(roc_scores, truth)
    return ClassificationReport(
        tp, tn, fp, fn,
        _ratio(tp + tn, tp + tn + fp + fn),
        _ratio(tp, tp + fn),
        _ratio(tn, tn + fp),
        auc_trapezoid(roc),
        roc,
        len(verdicts) - len(valid),
    )
