import json

import pytest

from lvephi4.cli import main, parse_sites


def _payload(path):
    return json.loads((path / "payload.json").read_text())


def test_trees_run(tmp_path):
    assert main(["trees", "--n", "5", "--out", str(tmp_path)]) == 0
    p = _payload(tmp_path)
    assert p["result"]["count"] == 125
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 0 and "wall_time_s" in manifest
    assert (tmp_path / "trees.png").exists()


def test_series_and_lve_agree(tmp_path):
    assert main(["series", "--sites", "2", "--order", "2", "--out", str(tmp_path / "s"), "--no-figures"]) == 0
    assert main(["lve", "--sites", "2", "--order", "2", "--out", str(tmp_path / "l"), "--no-figures"]) == 0
    a2 = _payload(tmp_path / "s")["result"]["coefficients"]["oracle"][2]
    b2 = _payload(tmp_path / "l")["result"]["coefficients"]["lve"][2]
    assert b2 == pytest.approx(a2, rel=1e-8)
    manifest = json.loads((tmp_path / "l" / "manifest.json").read_text())
    assert manifest["line_convention"] == ["single_derivation"]


def test_cancel_run(tmp_path):
    assert main(["cancel", "--n", "4", "--out", str(tmp_path)]) == 0
    assert all(p["value"] == "0" for p in _payload(tmp_path)["result"]["planar_sums"])


def test_csv_format(tmp_path):
    assert main(["cluster", "--nmax", "3", "--format", "csv", "--out", str(tmp_path), "--no-figures"]) == 0
    assert (tmp_path / "cluster.csv").read_text().startswith("k,count,increment,partial_sum")


def test_dry_run_prints_config(capsys, tmp_path):
    assert main(["nelson", "--dry-run", "--out", str(tmp_path)]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["command"] == "nelson" and cfg["seed"] == 0


def test_usage_errors():
    assert main(["trees", "--bogus"]) == 2
    assert main(["nonsense"]) == 2
    assert main([]) == 2


def test_capped_request_is_a_usage_error(tmp_path):
    assert main(["trees", "--n", "12", "--out", str(tmp_path)]) == 2


def test_site_argument():
    assert parse_sites("3") == (3, 1)
    assert parse_sites("2x2") == (2, 2)


@pytest.mark.parametrize("cmd", [["bkar-check", "--samples", "5"], ["covariance"], ["cleaning", "--jmax", "1"]])
def test_runs_are_byte_identical(tmp_path, cmd):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(cmd + ["--out", str(a), "--no-figures", "--seed", "7"]) == 0
    assert main(cmd + ["--out", str(b), "--no-figures", "--seed", "7"]) == 0
    assert (a / "payload.json").read_bytes() == (b / "payload.json").read_bytes()
