import csv
import json
import math

import numpy as np
import pytest

from specq import __version__
from specq.cli import load_boundary, main
from specq.fields import GridDomain, example1_field, load_field, save_field


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def boundary_file(tmp_path, data, h="1/16"):
    cfg = {"format": "specq-boundary", "version": 1, "h": h, "domain": {"kind": "disk"}, "data": data}
    path = tmp_path / "boundary.json"
    path.write_text(json.dumps(cfg))
    return path


class TestMetric:
    def test_sqrt2_matching(self, capsys):
        code, out, _ = run(capsys, "metric", "--a", "[[0],[2]]", "--b", "[[1],[1]]")
        assert code == 0
        assert out.splitlines()[0] == f"G = {math.sqrt(2):.12g}"
        assert "config_hash" in out

    def test_signed(self, capsys):
        code, out, _ = run(capsys, "metric", "--a", "[[0],[2]]", "--b", "[[0],[2]]", "--sign-a", "1", "--sign-b", "-1")
        assert code == 0 and "Gs = " in out and float(out.split("Gs = ")[1].split()[0]) > 0

    def test_bad_json(self, capsys):
        code, _, err = run(capsys, "metric", "--a", "[[0],", "--b", "[[1]]")
        assert code == 2 and "--a: column" in err


class TestUsage:
    def test_no_command(self, capsys):
        code, _, err = run(capsys)
        assert code == 2 and "usage" in err

    def test_unknown_command(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["bogus"])
        assert exc.value.code == 2

    def test_bad_threads_env(self, capsys, monkeypatch):
        monkeypatch.setenv("SPECQ_THREADS", "many")
        code, _, err = run(capsys, "metric", "--a", "[[0]]", "--b", "[[1]]")
        assert code == 2 and "SPECQ_THREADS" in err


class TestMinimize:
    def test_writes_field_report_manifest(self, tmp_path, capsys):
        bnd = boundary_file(tmp_path, {"type": "example1", "rule": "quadrant"})
        out = tmp_path / "u.json"
        code, stdout, _ = run(capsys, "minimize", "--boundary", str(bnd), "--out", str(out))
        assert code == 0 and stdout.startswith("energy ")
        u = load_field(out)
        assert u.domain.h == 1 / 16
        report = json.loads((tmp_path / "u.json.report.json").read_text())
        assert report["solve"]["energy"] <= report["solve"]["initial_energy"]
        assert {"inner", "outer"} <= set(report["residuals"])
        man = json.loads((tmp_path / "u.json.manifest.json").read_text())
        assert man["version"] == __version__ and man["seed"] == 0 and len(man["config_hash"]) == 64

    def test_two_sheet_strategy(self, tmp_path, capsys):
        bnd = boundary_file(tmp_path, {"type": "linear", "a": [1.0, 0.5]})
        code, _, _ = run(capsys, "minimize", "--boundary", str(bnd), "--strategy", "two-sheet", "--out", str(tmp_path / "u.json"))
        assert code == 0
        assert json.loads((tmp_path / "u.json.report.json").read_text())["solve"]["strategy"] == "two-sheet"

    def test_rerun_bit_identical(self, tmp_path, capsys):
        bnd = boundary_file(tmp_path, {"type": "example1", "rule": "diagonal"})
        out = tmp_path / "u.json"
        run(capsys, "minimize", "--boundary", str(bnd), "--out", str(out), "--seed", "3")
        first = [p.read_bytes() for p in (out, tmp_path / "u.json.report.json", tmp_path / "u.json.manifest.json")]
        code, _, _ = run(capsys, "--replay", str(tmp_path / "u.json.manifest.json"))
        assert code == 0
        second = [p.read_bytes() for p in (out, tmp_path / "u.json.report.json", tmp_path / "u.json.manifest.json")]
        assert first == second

    def test_saved_field_as_boundary(self, tmp_path, capsys):
        save_field(example1_field(GridDomain("disk", 1 / 8)), tmp_path / "f.json")
        code, _, _ = run(capsys, "minimize", "--boundary", str(tmp_path / "f.json"), "--out", str(tmp_path / "u.json"))
        assert code == 0
        code, _, err = run(capsys, "minimize", "--boundary", str(tmp_path / "f.json"), "--h", "1/16", "--out", str(tmp_path / "v.json"))
        assert code == 2 and "h = 0.125" in err

    def test_malformed_config_location(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "specq-boundary",\n  "h": 1/8}')
        code, _, err = run(capsys, "minimize", "--boundary", str(path), "--out", str(tmp_path / "u.json"))
        assert code == 2 and "line 2" in err

    @pytest.mark.parametrize(
        "data, message",
        [({"type": "linear"}, "missing key 'a'"), ({"type": "spline"}, "data.type 'spline'"), ({"type": "sheets", "spec": {"sheets": []}}, "sheets")],
    )
    def test_bad_data(self, tmp_path, capsys, data, message):
        bnd = boundary_file(tmp_path, data)
        code, _, err = run(capsys, "minimize", "--boundary", str(bnd), "--out", str(tmp_path / "u.json"))
        assert code == 2 and message in err

    def test_unknown_embedding(self, tmp_path, capsys):
        bnd = boundary_file(tmp_path, {"type": "example1"})
        code, _, err = run(capsys, "minimize", "--boundary", str(bnd), "--embedding", "nope", "--out", str(tmp_path / "u.json"))
        assert code == 2 and "--embedding" in err

    def test_load_boundary_sheets(self, tmp_path):
        spec = {"sheets": [0, {"terms": [[3, [2, 0]], [-3, [0, 2]]]}], "predicate": {"terms": [[1, [2, 0]], [-1, [0, 2]]]}}
        u = load_boundary(boundary_file(tmp_path, {"type": "sheets", "spec": spec}))
        ref = example1_field(GridDomain("disk", 1 / 16), "quadrant")
        assert np.allclose(u.atoms, ref.atoms, atol=1e-14)


class TestFrequency:
    def test_csv_columns(self, tmp_path, capsys):
        save_field(example1_field(GridDomain("disk", 1 / 32), "quadrant"), tmp_path / "f.json")
        out = tmp_path / "p.csv"
        code, _, _ = run(capsys, "frequency", "--field", str(tmp_path / "f.json"), "--radii", "0.2,0.8,7", "--out", str(out))
        assert code == 0
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["r", "D", "H", "I"] and len(rows) == 8
        assert all(abs(float(r[3]) - 2.0) < 0.05 for r in rows[1:])
        assert (tmp_path / "p.csv.manifest.json").exists()

    def test_missing_field(self, tmp_path, capsys):
        code, _, err = run(capsys, "frequency", "--field", str(tmp_path / "none.json"), "--out", str(tmp_path / "p.csv"))
        assert code == 2 and "cannot read" in err


class TestGraphs:
    def test_mass(self, capsys):
        code, out, _ = run(capsys, "graphs", "mass")
        assert code == 0
        assert json.loads(out.splitlines()[0])["mass"] == pytest.approx(math.pi + 2 * math.pi * (37**1.5 - 1) / 108, abs=1e-8)

    def test_taylor_slope(self, tmp_path, capsys):
        code, _, _ = run(capsys, "graphs", "taylor", "--scale", "0.16666666666666666", "--out", str(tmp_path / "t.json"))
        assert code == 0
        assert json.loads((tmp_path / "t.json").read_text())["slope"] >= 3.8

    def test_reparam_small_scale(self, capsys):
        code, out, _ = run(capsys, "graphs", "reparam", "--scale", "0.16666666666666666")
        data = json.loads(out.splitlines()[0])
        assert code == 0
        assert abs(data["mass_tilted"] - data["mass_cylinder"]) <= 1e-4 * data["mass_cylinder"]

    def test_reparam_failure_exit(self, capsys):
        code, _, err = run(capsys, "graphs", "reparam")
        assert code == 1 and "node" in err

    def test_spec_file_error(self, tmp_path, capsys):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"sheets": [{"terms": [[1, [1]]]}]}))
        code, _, err = run(capsys, "graphs", "mass", "--spec", str(path))
        assert code == 2 and "sheets[0][0]" in err


class TestOthers:
    def test_luckhaus(self, tmp_path, capsys):
        code, out, _ = run(capsys, "luckhaus", "--samples", "32", "--out", str(tmp_path / "l.json"))
        assert code == 0 and out.startswith("C_fit")
        data = json.loads((tmp_path / "l.json").read_text())
        assert np.array(data["ratios"]).shape == (5, 3) and data["max_relative_spread"] >= 0.0

    def test_extend(self, tmp_path, capsys):
        inp = tmp_path / "e.json"
        values = [{"atoms": [[0.0], [1.0]], "sign": 1}, {"atoms": [[0.0], [0.0]], "sign": 1}, {"atoms": [[-1.0], [0.5]], "sign": -1}]
        inp.write_text(json.dumps({"sites": [[0, 0], [1, 0], [0, 1]], "values": values, "points": [[0.5, 0.5], [0.2, 0.1]]}))
        code, _, _ = run(capsys, "extend", "--input", str(inp), "--out", str(tmp_path / "x.json"))
        assert code == 0
        data = json.loads((tmp_path / "x.json").read_text())
        assert len(data["values"]) == 2 and data["ratio"] is not None

    def test_verify_metric_suite(self, capsys):
        code, out, _ = run(capsys, "verify", "--suite", "metric")
        assert code == 0
        assert out.count("PASS") == 3 and "3/3 checks passed" in out

    def test_verify_unknown_suite(self, capsys):
        code, _, err = run(capsys, "verify", "--suite", "nope")
        assert code == 2 and "unknown suite" in err

    def test_enneper_report(self, tmp_path, capsys):
        out = tmp_path / "r.json"
        code, stdout, _ = run(capsys, "enneper", "--h", "1/16", "--out", str(out))
        assert code == 0
        rep = json.loads(out.read_text())
        assert {"E_special", "E_classical_pair", "E_competitor", "I_profile"} <= set(rep)
        assert "seconds" not in rep and "solver seconds" in stdout
        first = out.read_bytes()
        run(capsys, "--replay", str(tmp_path / "r.json.manifest.json"))
        assert out.read_bytes() == first

    def test_replay_bad_manifest(self, tmp_path, capsys):
        path = tmp_path / "m.json"
        path.write_text("{}")
        code, _, err = run(capsys, "--replay", str(path))
        assert code == 2 and "no recorded command line" in err
