"""Energy-threshold calibration and filtering of noise-only windows.

The threshold is raised step by step from a tiny initial value. At each
step both training and validation windows below the threshold are dropped,
PCA is fitted on the surviving training windows and the validation windows
are reconstructed as X W W^T. The search stops at the first threshold whose
mean validation RSNR reaches the QoS bound.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CalibrationError, ParameterError
from .reconstruct import RankDeficiencyWarning, fit_pca_batch
from .signal import Window, WindowsLike, as_matrix, energies, rsnr_db_rows

INITIAL_THRESHOLD = 1e-10
DEFAULT_STEP = 2.0**-8
STEP_MODES = ("additive", "multiplicative")


@dataclass(frozen=True)
class CalibrationStep:
    iteration: int
    threshold: float
    kept_train: int
    kept_val: int
    mean_rsnr_db: float


@dataclass(frozen=True)
class EnergyFilterProfile:
    threshold: float
    qos_rsnr_db: float = 16.0
    step: float = DEFAULT_STEP
    retained_fraction: float = 1.0
    step_mode: str = "additive"
    iterations: int = 0
    mean_rsnr_db: float = math.nan
    trajectory: tuple[CalibrationStep, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self) -> None:
        if not math.isfinite(self.qos_rsnr_db):
            raise ParameterError("qos_rsnr_db must be finite")
        if self.threshold < 0:
            raise ParameterError("threshold must be non-negative")
        if self.step_mode not in STEP_MODES:
            raise ParameterError(f"step_mode must be one of {STEP_MODES}")


def threshold_at(n: int, initial: float, step: float, mode: str) -> float:
    return initial + n * step if mode == "additive" else initial * (1.0 + step) ** n


def _next_changing_iteration(n: int, e_min: float, initial: float, step: float, mode: str) -> int:
    """Smallest iteration m > n whose threshold exceeds ``e_min`` (the lowest kept energy)."""
    if mode == "additive":
        m = math.floor((e_min - initial) / step) + 1
    else:
        m = math.floor(math.log(e_min / initial) / math.log1p(step)) + 1 if e_min > initial else 0
    m = max(m, n + 1)
    # guard against rounding at the boundary
    while m > n + 1 and threshold_at(m - 1, initial, step, mode) > e_min:
        m -= 1
    while threshold_at(m, initial, step, mode) <= e_min:
        m += 1
    return m


def calibrate_energy_threshold(
    train: WindowsLike,
    val: WindowsLike,
    qos_rsnr_db: float = 16.0,
    pca_components: int = 16,
    step: float = DEFAULT_STEP,
    step_mode: str = "additive",
    initial: float = INITIAL_THRESHOLD,
    max_iterations: int = 10**6,
) -> EnergyFilterProfile:
    """Raise the energy threshold until mean validation RSNR >= ``qos_rsnr_db``.

    Iterations whose threshold leaves both kept sets unchanged would repeat
    the same PCA fit, so they are skipped; the reported iteration count and
    threshold are those the plain loop would reach.
    """
    Xt, Xv = as_matrix(train), as_matrix(val)
    if Xt.shape[0] == 0 or Xv.shape[0] == 0:
        raise ParameterError("train and val must be non-empty")
    M = Xt.shape[1]
    if Xv.shape[1] != M:
        raise ParameterError("train and val windows differ in length")
    if not 1 <= pca_components < M:
        raise ParameterError(f"pca_components must lie in [1, {M})")
    if step_mode not in STEP_MODES or not step > 0:
        raise ParameterError("invalid step or step_mode")
    Et, Ev = energies(Xt), energies(Xv)
    trajectory: list[CalibrationStep] = []

    n = 1
    while n <= max_iterations:
        th = threshold_at(n, initial, step, step_mode)
        kt, kv = Et >= th, Ev >= th
        nt, nv = int(kt.sum()), int(kv.sum())
        if nt < 2 or nv == 0:
            raise CalibrationError(
                f"threshold {th:.6g} leaves {nt} training and {nv} validation windows before QoS was met",
                trajectory)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficiencyWarning)
            W = fit_pca_batch(Xt[kt], min(pca_components, M)).components
        V = Xv[kv]
        s = float(np.mean(rsnr_db_rows(V, (V @ W) @ W.T)))
        trajectory.append(CalibrationStep(n, th, nt, nv, s))
        if s >= qos_rsnr_db:
            return EnergyFilterProfile(th, qos_rsnr_db, step, nv / Xv.shape[0], step_mode, n, s,
                                       tuple(trajectory))
        e_min = min(Et[kt].min(), Ev[kv].min())
        n = _next_changing_iteration(n, e_min, initial, step, step_mode)
    raise CalibrationError(f"no convergence within {max_iterations} iterations", trajectory)


def energy_mask(windows: WindowsLike, profile: EnergyFilterProfile | float) -> np.ndarray:
    th = profile.threshold if isinstance(profile, EnergyFilterProfile) else float(profile)
    return energies(windows) >= th


def apply_energy_filter(windows: Sequence[Window], profile: EnergyFilterProfile | float):
    """Keep windows with energy >= threshold, in order. Returns (kept, dropped_count)."""
    if len(windows) == 0:
        return ([] if not isinstance(windows, np.ndarray) else windows), 0
    mask = energy_mask(windows, profile)
    if isinstance(windows, np.ndarray):
        kept = windows[mask] if windows.ndim == 2 else (windows if mask[0] else windows[:0])
    else:
        kept = [w for w, m in zip(windows, mask) if m]
    return kept, int(mask.size - mask.sum())
