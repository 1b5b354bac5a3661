import hashlib
from pathlib import Path

import pytest
import yaml

from shm_edge.cli import main

SMALL = {"train_hours": 2, "val_hours": 1, "test_hours": 1, "seed": 3}


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.yaml"
    cfg.write_text(yaml.safe_dump({**SMALL, "traces": str(root / "camp" / "train"),
                                   "model": str(root / "model.shm"), "reports": str(root / "reports")}))
    assert main(["--config", str(cfg), "gen", "--campaign", str(root / "camp")]) == 0
    assert main(["--config", str(cfg), "train"]) == 0
    return root, cfg


def test_campaign_layout(workdir):
    root, _ = workdir
    names = sorted(p.relative_to(root / "camp").as_posix() for p in (root / "camp").rglob("*.bin"))
    assert names == ["test/anomalous.bin", "test/normal.bin", "train/part0.bin", "train/part1.bin"]


def test_detect_exit_codes(workdir, capsys):
    root, cfg = workdir
    test = root / "camp" / "test"
    assert main(["--config", str(cfg), "detect", str(test / "normal.bin")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "trace,interval,start_s,end_s,mean_mse,windows,verdict"
    assert all(line.endswith(",normal") for line in out[1:])
    assert main(["--config", str(cfg), "detect", str(test / "anomalous.bin")]) == 1


def test_detect_evaluate_and_roc(workdir, capsys):
    root, cfg = workdir
    test = root / "camp" / "test"
    rc = main(["--config", str(cfg), "detect", str(test / "normal.bin"), str(test / "anomalous.bin"),
               "--evaluate", "normal,anomalous", "--output-dim", "15", "--roc", str(root / "roc.csv")])
    assert rc == 1
    err = capsys.readouterr().err
    assert "accuracy=1" in err
    assert (root / "roc.csv").read_text().startswith("fpr,tpr")


def test_detect_renders_no_verdict(workdir, tmp_path, capsys):
    root, cfg = workdir
    # a minute of sensor floor: every window falls below the energy threshold
    quiet = tmp_path / "quiet.csv"
    quiet.write_text("# sample_rate_hz=100\n" + "".join(f"{1e-9 * (i % 3)}\n" for i in range(6000)))
    assert main(["--config", str(cfg), "detect", str(quiet)]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert rows == ["0,0,0.0,3600.0,,0,NV"]


def test_input_dim_mismatch_exit5(workdir):
    root, cfg = workdir
    assert main(["--config", str(cfg), "detect", "--input-dim", "2", str(root / "camp" / "test" / "normal.bin")]) == 5


def test_empty_trace_dir_exit2(workdir, tmp_path):
    _, cfg = workdir
    (tmp_path / "empty").mkdir()
    assert main(["--config", str(cfg), "train", "--traces", str(tmp_path / "empty"),
                 "--model", str(tmp_path / "m.shm")]) == 2


def test_unknown_config_key_exit2(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("windowz: 5\n")
    assert main(["--config", str(p), "cost"]) == 2


def test_components_and_cf_exclusive():
    with pytest.raises(SystemExit):
        main(["train", "--components", "16", "--cf", "31.25"])


def test_cf_alias_gives_identical_model(workdir, tmp_path):
    _, cfg = workdir
    a, b = tmp_path / "a.shm", tmp_path / "b.shm"
    assert main(["--config", str(cfg), "train", "--components", "16", "--model", str(a)]) == 0
    assert main(["--config", str(cfg), "train", "--cf", "31.25", "--model", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_cost_prints_table(capsys, tmp_path):
    assert main(["cost", "--out", str(tmp_path / "c.csv")]) == 0
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == ["cloud", "hybrid", "edge"]
    assert rows[1].split(",")[2:4] == ["720000", "554"]
    assert "240000" in capsys.readouterr().out


def test_simulate_writes_reports(workdir, tmp_path, capsys):
    _, cfg = workdir
    out = tmp_path / "rep"
    assert main(["--config", str(cfg), "simulate", "--nodes", "2", "--hours", "3", "--anomaly-hour", "1",
                 "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"ledgers.csv", "alarms.csv", "events.csv"}
    assert len((out / "alarms.csv").read_text().splitlines()) > 1
    assert "first alarm" in capsys.readouterr().out


def test_inject_round_trip(workdir, tmp_path):
    root, cfg = workdir
    test = root / "camp" / "test"
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    args = ["--config", str(cfg), "inject", "--normal", str(test / "normal.bin"),
            "--anomalous", str(test / "anomalous.bin"), "--level", "0.5"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert _digest(a) == _digest(b)
