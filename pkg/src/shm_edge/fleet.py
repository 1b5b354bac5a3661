"""Deterministic discrete-event replay of a sensor fleet under a deployment scenario.

Each node scores its own trace with the detector stack; interval verdicts
are collected hourly into one report per node. Re-training events follow a
policy and occupy the hour after they are triggered. Energy and traffic are
booked per node-hour with the same per-hour roles as ``scenario_ledger``,
so runs with static policies reconcile with the closed form.
"""

from __future__ import annotations

import heapq
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .deploy import (
    SCENARIOS,
    CostLedger,
    RadioModel,
    ScenarioCosts,
    empty_ledger,
    hour_ledger,
    ledgers_to_csv,
)
from .detector import IntervalScore, Verdict, classify
from .errors import ParameterError, TraceTooShortError
from .pipeline import TrainedPipeline
from .signal import AccelTrace, windowize


@dataclass(frozen=True)
class RetrainPolicy:
    """``never``, ``scheduled`` every ``period_h`` hours, or ``drift``.

    Drift fires when at least ``drift_fraction`` of the verdict-bearing
    intervals ending within the last ``drift_window_h`` hours are anomalous,
    at most once per ``cooldown_h`` hours.
    """

    kind: str = "never"
    period_h: int = 24
    drift_fraction: float = 0.5
    drift_window_h: int = 6
    cooldown_h: int = 24

    def __post_init__(self) -> None:
        if self.kind not in ("never", "scheduled", "drift"):
            raise ParameterError(f"unknown retrain policy {self.kind!r}")
        if self.period_h < 1 or self.drift_window_h < 1 or self.cooldown_h < 0:
            raise ParameterError("policy periods must be positive")


@dataclass(frozen=True)
class SimConfig:
    node_count: int = 1
    scenario: str = "edge"
    hours: int = 1
    retrain_policy: RetrainPolicy = RetrainPolicy()
    seed: int = 0
    horizon_min: float | None = None  # None: the detector profile's horizon
    payload_bytes: int = 1300
    bytes_per_s_raw: int = 200
    verdict_bytes: int = 3
    header_overhead: float = 1.0

    def __post_init__(self) -> None:
        if self.node_count < 1:
            raise ParameterError("node_count must be >= 1")
        if self.scenario not in SCENARIOS:
            raise ParameterError(f"scenario must be one of {SCENARIOS}")
        if self.hours < 1:
            raise ParameterError("hours must be >= 1")


@dataclass(frozen=True)
class Alarm:
    node: int
    interval_index: int
    start_s: float
    end_s: float
    mean_mse: float


@dataclass(frozen=True)
class RetrainEvent:
    node: int
    hour: int
    reason: str


@dataclass(frozen=True)
class GatewayRecord:
    hour: int
    reports: int
    anomalous_nodes: int
    bytes_received: int


@dataclass
class FleetResult:
    ledgers: list[CostLedger]
    alarms: list[Alarm]
    retrains: list[RetrainEvent]
    gateway: list[GatewayRecord]

    @property
    def total(self) -> CostLedger:
        out = empty_ledger(self.ledgers[0].scenario)
        for lg in self.ledgers:
            out = out + lg
        return out

    def ledgers_csv(self) -> str:
        return ledgers_to_csv(self.ledgers, label="node")

    def alarms_csv(self) -> str:
        buf = io.StringIO()
        buf.write("node,interval,start_s,end_s,mean_mse\n")
        for a in self.alarms:
            buf.write(f"{a.node},{a.interval_index},{a.start_s!r},{a.end_s!r},{a.mean_mse!r}\n")
        return buf.getvalue()

    def events_csv(self) -> str:
        buf = io.StringIO()
        buf.write("kind,node,hour,detail\n")
        for r in self.retrains:
            buf.write(f"retrain,{r.node},{r.hour},{r.reason}\n")
        for g in self.gateway:
            buf.write(f"gateway,,{g.hour},reports={g.reports};anomalous={g.anomalous_nodes};bytes={g.bytes_received}\n")
        return buf.getvalue()


# event priorities at equal timestamps: intervals close before the hourly report
_INTERVAL, _REPORT, _RETRAIN = 0, 1, 2

RetrainFn = Callable[[int, int, AccelTrace], TrainedPipeline | None]


def _node_intervals(pipeline: TrainedPipeline, trace: AccelTrace, hours: int, horizon_min: float):
    horizon = trace.slice_seconds(0.0, hours * 3600.0)
    wins = windowize(horizon, pipeline.input_dim_s)
    ivs, _ = pipeline.detect(wins, horizon_min, t0=trace.start_time)
    return ivs


def simulate_fleet(
    cfg: SimConfig,
    pipeline: TrainedPipeline,
    traces: Sequence[AccelTrace],
    radio: RadioModel = RadioModel(),
    costs: ScenarioCosts = ScenarioCosts(),
    retrain_fn: RetrainFn | None = None,
) -> FleetResult:
    """Replay ``cfg.hours`` of every node's trace through an event queue.

    ``retrain_fn(node, hour, trace)`` may return a replacement pipeline that
    scores the node's intervals after the re-training hour; by default
    re-training is accounted for but the model is unchanged.
    """
    if len(traces) != cfg.node_count:
        raise ParameterError(f"expected {cfg.node_count} traces, got {len(traces)}")
    for i, tr in enumerate(traces):
        if tr.duration_s + 1e-9 < cfg.hours * 3600.0:
            raise TraceTooShortError(f"trace of node {i} covers {tr.duration_s:.0f} s < {cfg.hours} h")
    horizon_min = pipeline.profile.output_dim_minutes if cfg.horizon_min is None else cfg.horizon_min
    H = horizon_min * 60.0
    policy = cfg.retrain_policy
    role_kw = dict(radio=radio, payload_bytes=cfg.payload_bytes, bytes_per_s_raw=cfg.bytes_per_s_raw,
                   costs=costs, header_overhead=cfg.header_overhead, scenario=cfg.scenario)

    pipes = [pipeline] * cfg.node_count
    intervals = [_node_intervals(pipeline, tr, cfg.hours, horizon_min) for tr in traces]
    ledgers = [empty_ledger(cfg.scenario) for _ in range(cfg.node_count)]
    alarms: list[Alarm] = []
    retrains: list[RetrainEvent] = []
    gateway: list[GatewayRecord] = []
    closed: list[list[tuple[float, Verdict]]] = [[] for _ in range(cfg.node_count)]
    pending_verdicts = [0] * cfg.node_count
    retrain_hours: list[set[int]] = [set() for _ in range(cfg.node_count)]
    last_retrain = [-math.inf] * cfg.node_count

    queue: list[tuple[float, int, int, int, int]] = []
    seq = 0
    for n in range(cfg.node_count):
        for j, iv in enumerate(intervals[n]):
            t_end = iv.end - traces[n].start_time
            if t_end <= cfg.hours * 3600.0 + 1e-9:
                heapq.heappush(queue, (t_end, _INTERVAL, n, seq, j)); seq += 1
        for h in range(1, cfg.hours + 1):
            heapq.heappush(queue, (h * 3600.0, _REPORT, n, seq, h - 1)); seq += 1
        if policy.kind == "scheduled":
            for h in range(policy.period_h, cfg.hours, policy.period_h):
                heapq.heappush(queue, (h * 3600.0, _RETRAIN, n, seq, h)); seq += 1

    hour_reports: dict[int, list[tuple[int, bool, int]]] = {}
    while queue:
        t, kind, n, _, arg = heapq.heappop(queue)
        if kind == _INTERVAL:
            iv = intervals[n][arg]
            verdict = classify([iv], pipes[n].profile)[0]
            if verdict is Verdict.NO_VERDICT:
                continue
            closed[n].append((t, verdict))
            pending_verdicts[n] += 1
            if verdict is Verdict.ANOMALY:
                alarms.append(Alarm(n, iv.index, iv.start, iv.end, iv.mean_mse))
        elif kind == _REPORT:
            hour = arg
            if cfg.scenario == "cloud":
                role = "stream"
            elif hour in retrain_hours[n]:
                role = "stream" if cfg.scenario == "hybrid" else "train_local"
            else:
                role = "infer"
            # an inference hour without closed verdicts sends nothing
            lg = hour_ledger(role, verdict_bytes=cfg.verdict_bytes * pending_verdicts[n], **role_kw)
            ledgers[n] = ledgers[n] + lg
            anomalous = any(v is Verdict.ANOMALY for tt, v in closed[n] if tt > t - 3600.0)
            hour_reports.setdefault(hour, []).append((n, anomalous, lg.traffic_bytes))
            pending_verdicts[n] = 0
            if policy.kind == "drift" and hour + 1 < cfg.hours:
                recent = [v for tt, v in closed[n] if tt > t - policy.drift_window_h * 3600.0]
                frac = sum(v is Verdict.ANOMALY for v in recent) / len(recent) if recent else 0.0
                if recent and frac >= policy.drift_fraction and t - last_retrain[n] >= policy.cooldown_h * 3600.0:
                    heapq.heappush(queue, (t, _RETRAIN, n, seq, hour + 1)); seq += 1
                    last_retrain[n] = t
        else:
            hour = arg
            retrain_hours[n].add(hour)
            retrains.append(RetrainEvent(n, hour, policy.kind))
            if retrain_fn is not None:
                new = retrain_fn(n, hour, traces[n])
                if new is not None:
                    pipes[n] = new
                    fresh = _node_intervals(new, traces[n], cfg.hours, horizon_min)
                    intervals[n] = fresh
                    # re-queue intervals that close after the re-training hour
                    cutoff = (hour + 1) * 3600.0
                    queue = [e for e in queue if not (e[1] == _INTERVAL and e[2] == n)]
                    heapq.heapify(queue)
                    for j, iv in enumerate(fresh):
                        t_end = iv.end - traces[n].start_time
                        if cutoff < t_end <= cfg.hours * 3600.0 + 1e-9:
                            heapq.heappush(queue, (t_end, _INTERVAL, n, seq, j)); seq += 1
                    # intervals closing inside the re-training hour are lost
                    # together with the old model
            last_retrain[n] = max(last_retrain[n], t)

    for hour in sorted(hour_reports):
        reps = hour_reports[hour]
        gateway.append(GatewayRecord(hour, sum(1 for _, _, b in reps if b > 0),
                                     sum(1 for _, a, _ in reps if a), sum(b for _, _, b in reps)))
    alarms.sort(key=lambda a: (a.start_s, a.node))
    retrains.sort(key=lambda r: (r.hour, r.node))
    return FleetResult(ledgers, alarms, retrains, gateway)
