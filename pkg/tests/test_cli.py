import csv
import io
import json
import re

import pytest

from meterlink.cli import main
from meterlink.sim import preset


def cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_toa_examples(capsys):
    code, out, _ = cli(capsys, "toa", "--sf", "12", "--payload", "64")
    assert code == 0 and out.startswith("2793.472 ms, wait@1%: 276.55 s")
    code, out, _ = cli(capsys, "toa", "--sf", "7", "--payload", "0")
    assert code == 0 and out.startswith("25.856 ms")


@pytest.mark.parametrize("argv", [["toa", "--sf", "13", "--payload", "1"],
                                  ["toa", "--sf", "7"],
                                  ["toa", "--sf", "7", "--payload", "1", "--frobnicate"],
                                  ["plan", "sideways"],
                                  []])
def test_usage_errors_exit_2(capsys, argv):
    code, out, err = cli(capsys, *argv)
    assert code == 2 and out == "" and "error" in err


def test_runtime_error_exit_4(capsys):
    code, _, err = cli(capsys, "toa", "--sf", "7", "--payload", "300")
    assert code == 4 and "payload" in err
    code, _, _ = cli(capsys, "toa", "--sf", "7", "--payload", "1", "--cr", "9")
    assert code == 4


def test_plan_examples(capsys):
    _, out, _ = cli(capsys, "plan", "capacity", "--channels", "8", "--r", "240")
    assert list(csv.DictReader(io.StringIO(out)))[0]["max_nodes"] == "1440"
    _, out, _ = cli(capsys, "plan", "daily", "--duty", "0.01")
    dr5 = [r for r in csv.DictReader(io.StringIO(out)) if r["dr"] == "5"][0]
    assert abs(int(dr5["bytes_per_day"]) - 523_000) < 1_000
    _, out, _ = cli(capsys, "plan", "wait", "--duty", "1.0")
    assert {r["wait_s"] for r in csv.DictReader(io.StringIO(out))} == {"0.000"}


def test_plan_output_is_golden(capsys):
    _, first, _ = cli(capsys, "plan", "wait", "--duty", "1/100")
    _, second, _ = cli(capsys, "plan", "wait", "--duty", "0.01")
    assert first == second
    assert first.splitlines()[:3] == ["dr,payload_bytes,toa_ms,wait_s", "0,0,1155.072,114.352",
                                      "0,8,1482.752,146.792"]


def test_plan_writes_file(capsys, tmp_path):
    path = tmp_path / "daily.csv"
    code, out, _ = cli(capsys, "plan", "daily", "--out", str(path))
    assert code == 0 and out == "" and path.read_text().startswith("dr,")


def test_validate(capsys, tmp_path):
    good = tmp_path / "good.json"
    preset("saturation").save(good)
    assert cli(capsys, "validate", str(good))[0] == 0
    doc = json.loads(good.read_text())
    doc["nodes"][0]["tx_power_dbm"] = 30
    del doc["seed"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, _, err = cli(capsys, "validate", str(bad))
    assert code == 3 and "$: 'seed' is a required property" in err
    doc["seed"] = 1
    bad.write_text(json.dumps(doc))
    code, _, err = cli(capsys, "validate", str(bad))
    assert code == 3 and "$.nodes[0].tx_power_dbm" in err


def _digest(out):
    return re.search(r"sha256=([0-9a-f]{64})", out).group(1)


def test_simulate_twice_gives_identical_logs_and_basement_report(capsys, tmp_path):
    digests = []
    for d in ("a", "b"):
        code, out, _ = cli(capsys, "simulate", "--preset", "indoor-sciencepark3", "--seed", "42",
                           "--out", str(tmp_path / d))
        assert code == 0
        digests.append(_digest(out))
    assert digests[0] == digests[1]
    assert json.loads((tmp_path / "a" / "stats.json").read_text())["gateways"]
    code, out, _ = cli(capsys, "report", str(tmp_path / "a" / "packets.jsonl"), "--metric", "per")
    rows = {r["dev_eui"]: r for r in csv.DictReader(io.StringIO(out))}
    for pos in (8, 9):
        for dr in range(6):
            assert rows[f"1000{pos:06x}{dr:06x}"]["per_pct"] == "100.00"


def test_channels_report_on_outdoor_preset(capsys, tmp_path):
    code, _, _ = cli(capsys, "simulate", "--preset", "outdoor-hagenberg", "--seed", "42",
                     "--out", str(tmp_path))
    assert code == 0
    _, out, _ = cli(capsys, "report", str(tmp_path / "packets.jsonl"), "--metric", "channels")
    ranked = list(csv.DictReader(io.StringIO(out)))
    assert {r["frequency_mhz"] for r in ranked[:3]} == {"868.1", "868.3", "868.5"}
    for metric in ("rssi", "snr", "ack"):
        code, out, _ = cli(capsys, "report", str(tmp_path / "packets.jsonl"), "--metric", metric)
        assert code == 0 and out.startswith("dev_eui,")


def test_output_dir_from_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("METERLINK_OUTPUT_DIR", str(tmp_path))
    code, _, _ = cli(capsys, "simulate", "--preset", "saturation", "--seed", "1")
    assert code == 0 and (tmp_path / "packets.jsonl").exists()


def test_seed_required_in_ci(capsys, monkeypatch, tmp_path):
    monkeypatch.setenv("CI", "true")
    code, _, err = cli(capsys, "simulate", "--preset", "saturation", "--out", str(tmp_path))
    assert code == 2 and "--seed" in err


def test_batch_runs_in_parallel(capsys, tmp_path):
    files = []
    for i, name in enumerate(["saturation", "ack-contention-a"]):
        sc = preset(name)
        sc.duration_s = 120.0
        files.append(tmp_path / f"{i}.json")
        sc.save(files[-1])
    code, out, _ = cli(capsys, "simulate", "--batch", "--workers", "2", "--seed", "3",
                       "--out", str(tmp_path / "out"), *map(str, files))
    assert code == 0 and len(out.splitlines()) == 2
    code, _, err = cli(capsys, "simulate", *map(str, files), "--out", str(tmp_path / "x"))
    assert code == 2 and "--batch" in err


def test_report_on_empty_log(capsys, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert cli(capsys, "report", str(empty))[0] == 4
    assert cli(capsys, "report", str(tmp_path / "missing.jsonl"))[0] == 4
