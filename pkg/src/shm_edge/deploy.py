"""MCU footprint/latency/energy estimates and NB-IoT traffic and energy ledgers.

Reference measurements for a PCA detector at compression factor 16 on the
target MCU (96 KB SRAM, 1 MB flash) are kept in ``REFERENCE_ROWS``. The
fixed overheads and per-operation constants of the default budget are
fitted to those rows at import time, see ``fit_footprint_overheads`` and
``fit_inference_constants``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError, PayloadError

KB = 1024


@dataclass(frozen=True)
class ReferenceRow:
    input_dim_s: float
    M: int
    k: int
    flash_kb: float
    ram_kb: float | None  # None: did not fit in RAM
    latency_ms: float | None
    energy_uj: float | None


# PCA at CF = 16 (k = M/16 rounded), 100 Hz, 32-bit weights.
REFERENCE_ROWS: tuple[ReferenceRow, ...] = (
    ReferenceRow(1, 100, 6, 32.82, 11.12, 0.754, 3.35),
    ReferenceRow(2, 200, 13, 40.63, 19.95, 1.568, 12.9295),
    ReferenceRow(5, 500, 31, 91.04, 77.55, 6.428, 73.96),
    ReferenceRow(10, 1000, 63, 276.54, None, None, None),
)


def k_for_cf(M: int, cf: float) -> int:
    """Latent size at compression factor ``cf``, rounding halves up."""
    return max(1, int(math.floor(M / cf + 0.5)))


def inference_macs(M: int, k: int) -> int:
    """Encode and decode products (2*M*k) plus energy, centering and MSE passes (M each)."""
    return 2 * M * k + 3 * M


def _ram_buffers(M: int, k: int, precision: int) -> int:
    return precision * (2 * M + k)


def fit_footprint_overheads(rows: Sequence[ReferenceRow] = REFERENCE_ROWS, precision: int = 4):
    """Return (flash_overhead, ram_overhead, ram_bytes_per_weight) in bytes.

    Flash: mean residual of flash - precision*M*k over all rows. RAM:
    relative least squares of ram - buffers = R0 + b*M*k over rows that fit.
    """
    fl = [r.flash_kb * KB - precision * r.M * r.k for r in rows]
    f0 = float(np.mean(fl))
    fit = [r for r in rows if r.ram_kb is not None]
    y = np.array([r.ram_kb * KB for r in fit])
    A = np.array([[1.0, r.M * r.k] for r in fit])
    rhs = y - np.array([_ram_buffers(r.M, r.k, precision) for r in fit])
    w = 1.0 / y
    (r0, b), *_ = np.linalg.lstsq(A * w[:, None], rhs * w, rcond=None)
    return f0, float(r0), float(b)


def fit_inference_constants(rows: Sequence[ReferenceRow] = REFERENCE_ROWS, anchor_M: int = 500):
    """Return (energy_per_mac_j, fixed_latency_s, macs_per_second).

    Energy per MAC is anchored on the ``anchor_M`` row; latency is a least
    squares line in MACs over all measured rows.
    """
    meas = [r for r in rows if r.latency_ms is not None]
    anchor = next(r for r in meas if r.M == anchor_M)
    e_mac = anchor.energy_uj * 1e-6 / inference_macs(anchor.M, anchor.k)
    macs = np.array([inference_macs(r.M, r.k) for r in meas], dtype=np.float64)
    t = np.array([r.latency_ms * 1e-3 for r in meas])
    slope, intercept = np.polyfit(macs, t, 1)
    return float(e_mac), float(intercept), float(1.0 / slope)


_F0, _R0, _B = fit_footprint_overheads()
_EMAC, _TLAT, _RATE = fit_inference_constants()


@dataclass(frozen=True)
class McuBudget:
    flash_bytes: int = 1024 * KB
    ram_bytes: int = 96 * KB
    energy_per_mac_j: float = _EMAC
    fixed_overhead_flash: int = int(round(_F0))
    fixed_overhead_ram: int = int(round(_R0))
    # bytes of RAM per matrix weight when the matrix executes from RAM
    ram_bytes_per_weight: float = _B
    matrix_placement: str = "ram"
    macs_per_second: float = _RATE
    fixed_latency_s: float = _TLAT

    def __post_init__(self) -> None:
        if self.flash_bytes <= 0 or self.ram_bytes <= 0:
            raise ParameterError("capacities must be positive")
        if self.matrix_placement not in ("ram", "flash"):
            raise ParameterError("matrix_placement must be 'ram' or 'flash'")


@dataclass(frozen=True)
class Footprint:
    flash_bytes: int
    ram_bytes: int
    fits_flash: bool
    fits_ram: bool

    @property
    def fits(self) -> bool:
        return self.fits_flash and self.fits_ram


@dataclass(frozen=True)
class InferenceCost:
    macs: int
    energy_j: float
    latency_s: float


def estimate_footprint(M: int, k: int, precision_bytes: int = 4, budget: McuBudget = McuBudget()) -> Footprint:
    if M <= 0 or k <= 0:
        raise ParameterError("M and k must be positive")
    flash = budget.fixed_overhead_flash + M * k * precision_bytes
    ram = budget.fixed_overhead_ram + _ram_buffers(M, k, precision_bytes)
    if budget.matrix_placement == "ram":
        ram += int(round(budget.ram_bytes_per_weight * precision_bytes / 4 * M * k))
    return Footprint(int(flash), int(ram), flash <= budget.flash_bytes, ram <= budget.ram_bytes)


def estimate_inference_cost(M: int, k: int, budget: McuBudget = McuBudget()) -> InferenceCost:
    if M <= 0 or k <= 0:
        raise ParameterError("M and k must be positive")
    macs = inference_macs(M, k)
    return InferenceCost(macs, macs * budget.energy_per_mac_j, budget.fixed_latency_s + macs / budget.macs_per_second)


# -- radio ---------------------------------------------------------------------

HOURLY_RAW_BYTES = 720_000
CLOUD_RADIO_J_PER_H = 248.85
SMALL_PACKET_RADIO_J = 0.7130
SMALL_PACKET_BYTES = 3

# per-byte slope and per-session wake-up cost that reproduce both hourly anchors
_BETA = (CLOUD_RADIO_J_PER_H - SMALL_PACKET_RADIO_J) / (HOURLY_RAW_BYTES - SMALL_PACKET_BYTES)
_SESSION = SMALL_PACKET_RADIO_J - SMALL_PACKET_BYTES * _BETA


@dataclass(frozen=True)
class RadioModel:
    """Piecewise-linear packet energy plus a fixed cost per transmission session."""

    table: tuple[tuple[int, float], ...] = ((0, 0.0), (1600, 1600 * _BETA))
    max_payload_bytes: int = 1600
    e_sleep_per_hour_j: float = 0.390
    session_energy_j: float = _SESSION

    def __post_init__(self) -> None:
        p = np.array([r[0] for r in self.table], dtype=np.float64)
        e = np.array([r[1] for r in self.table], dtype=np.float64)
        if p.size < 2 or np.any(np.diff(p) <= 0):
            raise ParameterError("radio table needs at least two rows with increasing payloads")
        if np.any(np.diff(e) < 0):
            raise ParameterError("packet energy must be non-decreasing in payload")

    def energy_per_packet_j(self, payload_bytes: int | np.ndarray):
        p = np.asarray(payload_bytes, dtype=np.float64)
        if np.any(p < 0) or np.any(p > self.max_payload_bytes):
            raise PayloadError(f"payload outside [0, {self.max_payload_bytes}] bytes")
        xs = [r[0] for r in self.table]
        ys = [r[1] for r in self.table]
        out = np.interp(p, xs, ys)
        return float(out) if out.ndim == 0 else out

    def session_energy(self, packet_payloads: Sequence[int]) -> float:
        """Energy of one wake-up that sends the given packets; zero when nothing is sent."""
        if len(packet_payloads) == 0:
            return 0.0
        return self.session_energy_j + float(np.sum(self.energy_per_packet_j(np.asarray(packet_payloads))))

    @classmethod
    def from_table(cls, text: str, **kw) -> "RadioModel":
        """Parse CSV text with columns ``payload_bytes,energy_j`` (``#`` comments allowed)."""
        rows = []
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        for rec in csv.DictReader(lines):
            rows.append((int(rec["payload_bytes"]), float(rec["energy_j"])))
        kw.setdefault("max_payload_bytes", max(r[0] for r in rows))
        return cls(tuple(rows), **kw)


def packetize(traffic_bytes: int, payload_bytes: int) -> list[int]:
    """Split traffic into full packets plus one remainder packet."""
    if payload_bytes <= 0:
        raise PayloadError("payload must be positive")
    full, rem = divmod(int(traffic_bytes), payload_bytes)
    return [payload_bytes] * full + ([rem] if rem else [])


# -- scenario ledgers ----------------------------------------------------------

SCENARIOS = ("cloud", "hybrid", "edge")


@dataclass(frozen=True)
class ScenarioCosts:
    """Hourly node-side constants per deployment role (J/h)."""

    compute_cloud_j: float = 1.208
    compute_edge_inference_j: float = 0.005
    compute_edge_train_j: float = 0.00162
    gathering_j: float = 62.4
    storage_cloud_j: float = 1.0
    e_acq_j_per_s: float = 0.052596  # reported per-second figure; not used by default


@dataclass(frozen=True)
class CostLedger:
    scenario: str
    hours: int
    traffic_bytes: int
    packets: int
    radio_energy_j: float
    sleep_energy_j: float
    compute_energy_j: float
    gathering_energy_j: float
    storage_energy_j: float

    @property
    def total_energy_j(self) -> float:
        return (self.radio_energy_j + self.sleep_energy_j + self.compute_energy_j
                + self.gathering_energy_j + self.storage_energy_j)

    @property
    def traffic_bytes_per_h(self) -> float:
        return self.traffic_bytes / self.hours

    @property
    def packets_per_h(self) -> float:
        return self.packets / self.hours

    @property
    def energy_per_h(self) -> float:
        return self.total_energy_j / self.hours

    def __add__(self, other: "CostLedger") -> "CostLedger":
        if other.scenario != self.scenario:
            raise ParameterError("cannot add ledgers of different scenarios")
        return CostLedger(self.scenario, self.hours + other.hours,
                          *(getattr(self, f) + getattr(other, f) for f in _SUMMED))


_SUMMED = ("traffic_bytes", "packets", "radio_energy_j", "sleep_energy_j", "compute_energy_j",
           "gathering_energy_j", "storage_energy_j")
LEDGER_COLUMNS = ("scenario", "hours") + _SUMMED + ("total_energy_j",)


def empty_ledger(scenario: str) -> CostLedger:
    return CostLedger(scenario, 0, 0, 0, 0.0, 0.0, 0.0, 0.0, 0.0)


def ledgers_to_csv(ledgers: Iterable[CostLedger], label: str | None = None) -> str:
    buf = io.StringIO()
    cols = ((label,) if label else ()) + LEDGER_COLUMNS
    buf.write(",".join(cols) + "\n")
    for i, lg in enumerate(ledgers):
        vals = ([str(i)] if label else []) + [lg.scenario, str(lg.hours)]
        vals += [repr(getattr(lg, f)) for f in _SUMMED] + [repr(lg.total_energy_j)]
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


def hour_ledger(
    role: str,
    radio: RadioModel = RadioModel(),
    payload_bytes: int = 1300,
    bytes_per_s_raw: int = 200,
    verdict_bytes: int = 3,
    costs: ScenarioCosts = ScenarioCosts(),
    header_overhead: float = 1.0,
    scenario: str | None = None,
) -> CostLedger:
    """One node-hour in a given role.

    Roles: ``stream`` (raw upload, cloud-side processing), ``infer`` (on-node
    inference, verdict upload), ``train_local`` (on-node training, no upload).
    """
    if payload_bytes > radio.max_payload_bytes:
        raise PayloadError(f"payload {payload_bytes} exceeds radio maximum {radio.max_payload_bytes}")
    scen = scenario or {"stream": "cloud", "infer": "edge", "train_local": "edge"}[role]
    if role == "stream":
        traffic = int(round(bytes_per_s_raw * 3600 * header_overhead))
        compute, storage = costs.compute_cloud_j, costs.storage_cloud_j
    elif role == "infer":
        traffic, compute, storage = verdict_bytes, costs.compute_edge_inference_j, 0.0
    elif role == "train_local":
        traffic, compute, storage = 0, costs.compute_edge_train_j, 0.0
    else:
        raise ParameterError(f"unknown role {role!r}")
    pk = packetize(traffic, payload_bytes)
    return CostLedger(scen, 1, traffic, len(pk), radio.session_energy(pk), radio.e_sleep_per_hour_j,
                      compute, costs.gathering_j, storage)


def scenario_ledger(
    scenario: str,
    hours: int = 1,
    radio: RadioModel = RadioModel(),
    payload_bytes: int = 1300,
    bytes_per_s_raw: int = 200,
    verdict_bytes: int = 3,
    retrain_hours: int = 0,
    costs: ScenarioCosts = ScenarioCosts(),
    header_overhead: float = 1.0,
) -> CostLedger:
    """Closed-form ledger for ``hours`` node-hours, ``retrain_hours`` of which are re-training.

    Cloud hours always stream raw data. Hybrid re-training streams raw data
    to the cloud; edge re-training runs on the node and sends nothing.
    """
    if scenario not in SCENARIOS:
        raise ParameterError(f"scenario must be one of {SCENARIOS}")
    if hours < 1 or not 0 <= retrain_hours <= hours:
        raise ParameterError("need hours >= 1 and 0 <= retrain_hours <= hours")
    kw = dict(radio=radio, payload_bytes=payload_bytes, bytes_per_s_raw=bytes_per_s_raw,
              verdict_bytes=verdict_bytes, costs=costs, header_overhead=header_overhead, scenario=scenario)
    if scenario == "cloud":
        plan = [("stream", hours)]
    elif scenario == "hybrid":
        plan = [("infer", hours - retrain_hours), ("stream", retrain_hours)]
    else:
        plan = [("infer", hours - retrain_hours), ("train_local", retrain_hours)]
    total = empty_ledger(scenario)
    for role, n in plan:
        if n:
            h = hour_ledger(role, **kw)
            total = total + CostLedger(scenario, n, *(getattr(h, f) * n for f in _SUMMED))
    return total


def traffic_ratio(cloud: CostLedger, edge: CostLedger) -> float:
    return cloud.traffic_bytes_per_h / edge.traffic_bytes_per_h
