import json

import pytest
import yaml

from enclosure.cli import main
from enclosure.config import default_config

SCHEDULE = [20.0, 28.0, 40.0, 56.0, 80.0]


def small_config(tmp_path, **method):
    raw = default_config()
    raw["scenario"]["domain"]["resolution"] = 16
    raw["method"].update({"directions": 4, "c": 0.24, "schedule": SCHEDULE, **method})
    raw["output"]["dir"] = str(tmp_path / "out")
    return raw


def write(tmp_path, raw, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return str(p)


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sim")
    cfg = write(tmp, small_config(tmp))
    assert main(["simulate", cfg, "--out", str(tmp / "data")]) == 0
    return tmp, cfg, tmp / "data"


def test_validate_config_ok(tmp_path, capsys):
    assert main(["validate-config", write(tmp_path, small_config(tmp_path))]) == 0
    assert "config OK" in capsys.readouterr().out


def test_step_size_violation_cites_schema(tmp_path, capsys):
    raw = small_config(tmp_path)
    raw["measurement"]["dt"] = 0.01   # 80 * 0.01 = 0.8 > 0.5
    assert main(["validate-config", write(tmp_path, raw)]) == 2
    err = capsys.readouterr().err
    assert "measurement.dt" in err and "schema" in err


def test_unknown_key_rejected(tmp_path, capsys):
    raw = small_config(tmp_path)
    raw["method"]["colour"] = "blue"
    assert main(["validate-config", write(tmp_path, raw)]) == 2
    assert "colour" in capsys.readouterr().err


def test_manifest_lists_every_channel(simulated):
    _, _, data = simulated
    man = json.loads((data / "manifest.json").read_text())
    assert len(man["entries"]) == 4 * len(SCHEDULE) * 2
    assert len({e["csv"] for e in man["entries"]}) == len(man["entries"])


def test_rerun_gives_identical_hashes(simulated, tmp_path):
    _, cfg, data = simulated
    assert main(["simulate", cfg, "--out", str(tmp_path / "again")]) == 0
    a = json.loads((data / "manifest.json").read_text())
    b = json.loads((tmp_path / "again" / "manifest.json").read_text())
    assert [(e["csv_sha256"], e["json_sha256"]) for e in a["entries"]] == \
           [(e["csv_sha256"], e["json_sha256"]) for e in b["entries"]]


def test_reconstruct_from_datasets(simulated, tmp_path):
    tmp, cfg, data = simulated
    out = tmp_path / "rec"
    assert main(["reconstruct", cfg, "--datasets", str(data), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert not rep["hull"]["empty"] and len(rep["hull"]["vertices"]) >= 3
    assert len(rep["directions"]) == 4
    for row in rep["directions"]:
        assert {"omega", "h_estimate", "h_stderr", "valid", "true_support"} <= set(row)
    assert (out / "overlay.svg").read_text().startswith("<?xml")
    assert "reconstruct_seconds" in json.loads((out / "timings.json").read_text())


def test_svg_toggle_leaves_report_unchanged(simulated, tmp_path):
    _, cfg, data = simulated
    assert main(["reconstruct", cfg, "--datasets", str(data), "--out", str(tmp_path / "a")]) == 0
    assert main(["reconstruct", cfg, "--datasets", str(data), "--out", str(tmp_path / "b"), "--no-svg"]) == 0
    assert not (tmp_path / "b" / "overlay.svg").exists()
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_datasets_from_other_config_rejected(simulated, tmp_path, capsys):
    _, _, data = simulated
    other = small_config(tmp_path)
    other["measurement"]["T"] = 1.5
    assert main(["reconstruct", write(tmp_path, other), "--datasets", str(data)]) == 2
    assert "hash mismatch" in capsys.readouterr().err


def test_tampered_dataset_rejected(simulated, tmp_path, capsys):
    import shutil
    _, cfg, data = simulated
    copy = tmp_path / "copy"
    shutil.copytree(data, copy)
    victim = sorted(copy.glob("*.csv"))[0]
    victim.write_text(victim.read_text().replace("0", "1", 1))
    assert main(["reconstruct", cfg, "--datasets", str(copy), "--out", str(tmp_path / "o")]) == 2
    assert victim.name in capsys.readouterr().err


def test_noise_rewrites_hashes(simulated, tmp_path):
    _, cfg, data = simulated
    assert main(["noise", str(data), str(tmp_path / "noisy"), "--relative", "0.01", "--seed", "3"]) == 0
    a = json.loads((data / "manifest.json").read_text())
    b = json.loads((tmp_path / "noisy" / "manifest.json").read_text())
    assert b["config_digest"] == a["config_digest"] and b["noise"] == {"relative": 0.01, "seed": 3}
    assert all(x["csv_sha256"] != y["csv_sha256"] for x, y in zip(a["entries"], b["entries"]))
    # hashes still verify, so the noisy set can be reconstructed
    assert main(["reconstruct", cfg, "--datasets", str(tmp_path / "noisy"), "--out", str(tmp_path / "r")]) in (0, 4)


def _cgo_config(tmp_path, background, factors):
    raw = small_config(tmp_path, probe="cgo", c=1.0, schedule=[8.0], cgo_taus=[8.0], cgo_c_factors=factors)
    raw["scenario"]["domain"]["resolution"] = 32
    raw["measurement"]["T"] = 5.0
    raw["scenario"]["background"] = background
    return write(tmp_path, raw, "cgo.yaml")


def test_cgo_report_constant_background(tmp_path):
    cfg = _cgo_config(tmp_path, {"expression": None}, [1, 2])
    out = tmp_path / "cgo.json"
    assert main(["cgo-report", cfg, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["entries"] and all(e["status"] == "ok" for e in rep["entries"])
    assert all(e["eps_sup"] == 0 and e["grad_sup"] == 0 for e in rep["entries"])


def test_cgo_report_variable_background(tmp_path):
    cfg = _cgo_config(tmp_path, {"preset": "bump"}, [0.2, 1, 2, 4])
    out = tmp_path / "cgo.json"
    assert main(["cgo-report", cfg, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    for k in range(4):
        rows = [e for e in rep["entries"] if e["omega"] == rep["entries"][4 * k]["omega"]]
        assert rows[0]["status"] == "failed" and "increase c" in rows[0]["reason"]
        norms = [e["eps_sup"] for e in rows[1:]]
        assert all(e["status"] == "ok" for e in rows[1:])
        assert norms[0] > norms[1] > norms[2]


def test_cgo_report_needs_cgo_probe(tmp_path):
    assert main(["cgo-report", write(tmp_path, small_config(tmp_path))]) == 2
