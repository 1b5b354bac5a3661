"""``shm-edge`` command line: gen, train, detect, sweep, inject, cost, simulate.

Exit codes
----------
0  success (``detect``: no anomaly verdict)
1  ``detect`` emitted at least one anomaly verdict
2  parse, format or input error (including an empty trace directory)
3  calibration failure or insufficient data
4  training failure
5  model/config dimension mismatch
"""

from __future__ import annotations

import argparse
import io
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import deploy, fleet
from .config import RunConfig, config_from_dict, dump_config, load_config
from .detector import Verdict, classify, evaluate
from .errors import DimensionError, ParameterError, ShmError, ValidationError
from .pipeline import StreamingDetector, TrainedPipeline, evaluate_split, train_pipeline
from .signal import AccelTrace, guess_format, ingest_trace, open_trace_stream, windowize, write_trace
from .synth import generate_campaign, generate_trace, inject_severity

TRACE_SUFFIXES = (".bin", ".csv")


def list_traces(directory: str | Path) -> list[Path]:
    d = Path(directory)
    if d.is_file():
        return [d]
    if not d.is_dir():
        raise ValidationError(f"trace directory {d} does not exist")
    files = sorted(p for p in d.iterdir() if p.suffix in TRACE_SUFFIXES)
    if not files:
        raise ValidationError(f"no trace files in {d}")
    return files


def read_trace(path: str | Path, sample_rate_hz: float | None = None) -> AccelTrace:
    return ingest_trace(path, guess_format(path), sample_rate_hz)


def _write_trace_file(trace: AccelTrace, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(write_trace(trace, guess_format(path)))


def _out(text: str, path: str | None) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# -- subcommands ---------------------------------------------------------------


def cmd_gen(cfg: RunConfig, args) -> int:
    sim = replace(cfg.sim, seed=cfg.seed)
    ext = ".csv" if args.format == "csv" else ".bin"
    if args.campaign:
        c = generate_campaign(sim, cfg.train_hours, cfg.val_hours, cfg.test_hours)
        root = Path(args.campaign)
        _write_trace_file(c.train, root / "train" / f"part0{ext}")
        _write_trace_file(c.val, root / "train" / f"part1{ext}")
        _write_trace_file(c.test_normal, root / "test" / f"normal{ext}")
        _write_trace_file(c.test_anomalous, root / "test" / f"anomalous{ext}")
        print(f"campaign written to {root}")
        return 0
    if not args.out:
        raise ParameterError("gen needs --out or --campaign")
    tr = generate_trace(sim, args.hours * 3600.0, args.state)
    _write_trace_file(tr, Path(args.out))
    print(f"{args.state} trace of {len(tr)} samples written to {args.out}")
    return 0


def _split_windows(cfg: RunConfig, traces: Sequence[AccelTrace]):
    wins = []
    for tr in traces:
        if not math.isclose(tr.sample_rate_hz, cfg.sample_rate_hz):
            raise DimensionError(f"trace rate {tr.sample_rate_hz} Hz differs from configured {cfg.sample_rate_hz} Hz")
        wins.extend(windowize(tr, cfg.input_dim_s))
    n_val = int(round(len(wins) * cfg.val_fraction))
    if n_val < 1 or n_val >= len(wins):
        raise ValidationError("not enough windows to split into train and validation")
    return wins[:-n_val], wins[-n_val:]


def train_from_config(cfg: RunConfig, traces: Sequence[AccelTrace]) -> TrainedPipeline:
    train, val = _split_windows(cfg, traces)
    return train_pipeline(train, val, cfg.pipeline())


def cmd_train(cfg: RunConfig, args) -> int:
    traces = [read_trace(p, cfg.sample_rate_hz) for p in list_traces(cfg.traces)]
    pipe = train_from_config(cfg, traces)
    Path(cfg.model).parent.mkdir(parents=True, exist_ok=True)
    Path(cfg.model).write_bytes(pipe.to_bytes())
    e, p = pipe.energy, pipe.profile
    print(f"model={cfg.model} detector={cfg.detector} M={pipe.window_length} k={pipe.model.k}")
    if e is not None:
        print(f"energy_threshold={e.threshold!r} retained_fraction={e.retained_fraction:.4f} "
              f"iterations={e.iterations} mean_rsnr_db={e.mean_rsnr_db:.3f}")
    print(f"mu={p.mu!r} sigma={p.sigma!r} threshold={p.mse_threshold!r}")
    return 0


def _load_pipeline(cfg: RunConfig, args) -> TrainedPipeline:
    pipe = TrainedPipeline.from_bytes(Path(cfg.model).read_bytes())
    if args.input_dim is not None and int(round(args.input_dim * pipe.frontend.sample_rate_hz)) != pipe.window_length:
        raise DimensionError(f"--input-dim {args.input_dim} s does not match the model window of "
                             f"{pipe.window_length} samples")
    return pipe


def cmd_detect(cfg: RunConfig, args) -> int:
    pipe = _load_pipeline(cfg, args)
    labels = args.evaluate.split(",") if args.evaluate else None
    if labels is not None and len(labels) != len(args.traces):
        raise ParameterError("--evaluate needs one label per trace")
    horizon = args.output_dim if args.output_dim is not None else pipe.profile.output_dim_minutes
    lines = ["trace,interval,start_s,end_s,mean_mse,windows,verdict"]
    all_iv, all_lab = [], []
    any_anomaly = False
    for ti, path in enumerate(args.traces):
        stream = open_trace_stream(path, sample_rate_hz=None)
        if not math.isclose(stream.sample_rate_hz, pipe.frontend.sample_rate_hz):
            raise DimensionError(f"trace rate {stream.sample_rate_hz} Hz differs from model rate "
                                 f"{pipe.frontend.sample_rate_hz} Hz")
        det = StreamingDetector(pipe, stream.start_time, horizon)
        emitted = []
        for chunk in stream.chunks:
            emitted += det.push(chunk)
        emitted += det.flush()
        for iv, v in emitted:
            mean = "" if iv.no_verdict else repr(iv.mean_mse)
            lines.append(f"{ti},{iv.index},{iv.start!r},{iv.end!r},{mean},{iv.window_count},{v.value}")
            any_anomaly |= v is Verdict.ANOMALY
            all_iv.append(iv)
            if labels is not None:
                all_lab.append(labels[ti].strip().lower() in ("anomaly", "anomalous", "1", "true"))
    _out("\n".join(lines) + "\n", args.out)
    if labels is not None:
        verdicts = classify(all_iv, pipe.profile)
        rep = evaluate(verdicts, all_lab, [iv.mean_mse for iv in all_iv])
        print(rep.summary(), file=sys.stderr if not args.out else sys.stdout)
        if args.roc:
            _out(rep.roc_csv(), args.roc)
    return 1 if any_anomaly else 0


def _campaign_windows(cfg: RunConfig, args, dim: float):
    if args.campaign:
        root = Path(args.campaign)
        train = [read_trace(p) for p in list_traces(root / "train")]
        normal = read_trace(next(p for p in list_traces(root / "test") if p.stem == "normal"))
        anomalous = read_trace(next(p for p in list_traces(root / "test") if p.stem == "anomalous"))
    else:
        c = generate_campaign(replace(cfg.sim, seed=cfg.seed), cfg.train_hours, cfg.val_hours, cfg.test_hours)
        train, normal, anomalous = [c.train, c.val], c.test_normal, c.test_anomalous
    cfg_d = replace(cfg, input_dim_s=dim)
    tr, va = _split_windows(cfg_d, train)
    return tr, va, windowize(normal, dim), windowize(anomalous, dim)


SWEEP_COLUMNS = ("input_dim_s", "output_dim_min", "k", "accuracy", "sensitivity", "specificity", "auc",
                 "flash_bytes", "ram_bytes", "energy_j", "latency_s", "fits")


def run_sweep(cfg: RunConfig, args) -> str:
    rows = [",".join(SWEEP_COLUMNS)]
    for dim in cfg.sweep_input_dims:
        tr, va, tn, ta = _campaign_windows(cfg, args, dim)
        pcfg = cfg.pipeline(dim)
        pipe = train_pipeline(tr, va, pcfg)
        M, k = pipe.window_length, pcfg.components
        fp = deploy.estimate_footprint(M, k)
        cost = deploy.estimate_inference_cost(M, k)
        for out_dim in cfg.sweep_output_dims:
            rep = evaluate_split(pipe, tn, ta, out_dim).report
            rows.append(",".join([
                repr(float(dim)), repr(float(out_dim)), str(k), repr(rep.accuracy), repr(rep.sensitivity),
                repr(rep.specificity), repr(rep.auc), str(fp.flash_bytes), str(fp.ram_bytes),
                repr(cost.energy_j), repr(cost.latency_s), str(fp.fits).lower(),
            ]))
    return "\n".join(rows) + "\n"


def cmd_sweep(cfg: RunConfig, args) -> int:
    _out(run_sweep(cfg, args), args.out)
    return 0


def cmd_inject(cfg: RunConfig, args) -> int:
    normal = read_trace(args.normal)
    anomalous = read_trace(args.anomalous)
    injected = inject_severity(windowize(normal, cfg.input_dim_s), windowize(anomalous, cfg.input_dim_s),
                               args.level, segment_s=args.segment_s)
    samples = np.concatenate([w.values for w in injected])
    _write_trace_file(AccelTrace(anomalous.sample_rate_hz, samples, anomalous.start_time), Path(args.out))
    print(f"severity {args.level} trace of {samples.size} samples written to {args.out}")
    return 0


def _radio(cfg: RunConfig) -> deploy.RadioModel:
    if cfg.radio_table:
        return deploy.RadioModel.from_table(Path(cfg.radio_table).read_text())
    return deploy.RadioModel()


def cmd_cost(cfg: RunConfig, args) -> int:
    radio = _radio(cfg)
    scenarios = deploy.SCENARIOS if args.scenario == "all" else (args.scenario,)
    ledgers = [deploy.scenario_ledger(s, args.hours, radio, cfg.payload_bytes, cfg.bytes_per_s_raw,
                                      cfg.verdict_bytes, args.retrain_hours if s != "cloud" else 0,
                                      header_overhead=cfg.header_overhead) for s in scenarios]
    _out(deploy.ledgers_to_csv(ledgers), args.out)
    by = {lg.scenario: lg for lg in ledgers}
    if "cloud" in by and "edge" in by:
        print(f"traffic ratio cloud/edge = {deploy.traffic_ratio(by['cloud'], by['edge']):.6g}",
              file=sys.stderr if not args.out else sys.stdout)
    return 0


def cmd_simulate(cfg: RunConfig, args) -> int:
    pipe = _load_pipeline(cfg, args)
    if args.traces:
        traces = [read_trace(p) for p in list_traces(args.traces)][: args.nodes]
    else:
        traces = []
        sim = replace(cfg.sim, seed=cfg.seed)
        onset = args.anomaly_hour if args.anomaly_hour is not None else args.hours
        for n in range(args.nodes):
            parts = []
            if onset > 0:
                parts.append(generate_trace(sim.with_seed(sim.seed + 1000 + n), onset * 3600.0).samples)
            if args.hours > onset:
                parts.append(generate_trace(sim.with_seed(sim.seed + 2000 + n), (args.hours - onset) * 3600.0,
                                            "anomalous").samples)
            traces.append(AccelTrace(sim.sample_rate_hz, np.concatenate(parts)))
    policy = fleet.RetrainPolicy(args.policy, args.period)
    scfg = fleet.SimConfig(args.nodes, args.scenario, args.hours, policy, cfg.seed, args.output_dim,
                           cfg.payload_bytes, cfg.bytes_per_s_raw, cfg.verdict_bytes, cfg.header_overhead)
    res = fleet.simulate_fleet(scfg, pipe, traces, _radio(cfg))
    out = Path(args.out or cfg.reports)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ledgers.csv").write_text(res.ledgers_csv())
    (out / "alarms.csv").write_text(res.alarms_csv())
    (out / "events.csv").write_text(res.events_csv())
    first = res.alarms[0] if res.alarms else None
    print(f"nodes={args.nodes} scenario={args.scenario} hours={args.hours} alarms={len(res.alarms)} "
          f"retrains={len(res.retrains)} total_energy_j={res.total.total_energy_j:.6g}")
    if first is not None:
        print(f"first alarm: node {first.node} interval starting at {first.start_s:.0f} s")
    return 0


# -- argument parsing ----------------------------------------------------------


def _csv_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shm-edge", description="Edge anomaly detection for vibration-based SHM.")
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int, default=None)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=False):
        sp.add_argument("--input-dim", type=float, default=None, help="window length in seconds")
        sp.add_argument("--output-dim", type=float, default=None, help="averaging horizon in minutes")
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--components", type=int, default=None, help="retained latent size k")
        g.add_argument("--cf", type=float, default=None, help="compression factor M/k")
        if model:
            sp.add_argument("--model", default=None, help="model file")

    sp = sub.add_parser("gen", help="generate synthetic traces")
    sp.add_argument("--out", help="single trace output file (.bin or .csv)")
    sp.add_argument("--campaign", help="write a train/test campaign into this directory")
    sp.add_argument("--hours", type=float, default=1.0)
    sp.add_argument("--state", choices=("normal", "anomalous"), default="normal")
    sp.add_argument("--format", choices=("int16", "csv"), default="int16")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("train", help="calibrate and train on normal traces")
    common(sp, model=True)
    sp.add_argument("--traces", default=None, help="directory of normal traces")
    sp.add_argument("--detector", choices=("pca", "hpca", "ae"), default=None)
    sp.add_argument("--domain", choices=("time", "fft", "dwt"), default=None)
    sp.add_argument("--no-energy-filter", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("detect", help="stream traces through a trained model")
    common(sp, model=True)
    sp.add_argument("traces", nargs="+")
    sp.add_argument("--evaluate", help="comma-separated label per trace (normal|anomalous)")
    sp.add_argument("--roc", help="write ROC points CSV here (with --evaluate)")
    sp.add_argument("--out", help="verdict CSV (default stdout)")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("sweep", help="input/output dimension grid")
    common(sp)
    sp.add_argument("--campaign", help="campaign directory from `gen --campaign` (default: generate in memory)")
    sp.add_argument("--input-dims", type=_csv_floats, default=None)
    sp.add_argument("--output-dims", type=_csv_floats, default=None)
    sp.add_argument("--out", help="CSV output (default stdout)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("inject", help="severity injection by spectral peak shifting")
    common(sp)
    sp.add_argument("--normal", required=True)
    sp.add_argument("--anomalous", required=True)
    sp.add_argument("--level", type=float, required=True)
    sp.add_argument("--segment-s", type=float, default=900.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_inject)

    sp = sub.add_parser("cost", help="per-scenario traffic and energy ledgers")
    sp.add_argument("--scenario", choices=("all",) + deploy.SCENARIOS, default="all")
    sp.add_argument("--hours", type=int, default=1)
    sp.add_argument("--retrain-hours", type=int, default=0)
    sp.add_argument("--payload", type=int, default=None)
    sp.add_argument("--header-overhead", type=float, default=None)
    sp.add_argument("--radio-table", default=None)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_cost)

    sp = sub.add_parser("simulate", help="multi-node deployment replay")
    common(sp, model=True)
    sp.add_argument("--nodes", type=int, default=1)
    sp.add_argument("--scenario", choices=deploy.SCENARIOS, default="edge")
    sp.add_argument("--hours", type=int, default=1)
    sp.add_argument("--anomaly-hour", type=float, default=None, help="anomaly onset (synthetic traces)")
    sp.add_argument("--traces", help="directory with one trace per node (default: synthetic)")
    sp.add_argument("--policy", choices=("never", "scheduled", "drift"), default="never")
    sp.add_argument("--period", type=int, default=24)
    sp.add_argument("--out", help="report directory")
    sp.set_defaults(func=cmd_simulate)
    return p


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "input_dim", None) is not None:
        over["input_dim_s"] = args.input_dim
    if getattr(args, "output_dim", None) is not None:
        over["output_dim_min"] = args.output_dim
    if getattr(args, "components", None) is not None:
        over["components"], over["cf"] = args.components, None
    if getattr(args, "cf", None) is not None:
        over["cf"] = args.cf
    for flag, key in (("model", "model"), ("detector", "detector"), ("domain", "domain"),
                      ("payload", "payload_bytes"), ("header_overhead", "header_overhead"),
                      ("radio_table", "radio_table"), ("input_dims", "sweep_input_dims"),
                      ("output_dims", "sweep_output_dims")):
        if getattr(args, flag, None) is not None:
            over[key] = getattr(args, flag)
    if args.command == "train" and args.traces is not None:
        over["traces"] = args.traces
    if getattr(args, "no_energy_filter", False):
        over["energy_filter"] = False
    return config_from_dict(over, cfg) if over else cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        return args.func(cfg, args)
    except ShmError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
