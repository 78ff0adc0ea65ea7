import json

import numpy as np

from ballmaps import cli


def run(capsys, args):
    code = cli.main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def complex_json(a):
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


class TestDist:
    def test_zero(self, capsys):
        code, out, _ = run(capsys, ["dist", "--m", "2", "--z", "0,0", "--w", "0,0"])
        assert code == 0
        assert out.strip() == "0"

    def test_radial_value(self, capsys):
        code, out, _ = run(capsys, ["dist", "--m", "1", "--z", "0", "--w", "0.5"])
        assert code == 0
        assert out.strip() == "0.549306144334055"

    def test_boundary_exit(self, capsys):
        code, _, err = run(capsys, ["dist", "--m", "1", "--z", "0", "--w", "1"])
        assert code == 3
        assert "infinite" in err

    def test_parse_error_exit(self, capsys):
        code, _, err = run(capsys, ["dist", "--m", "1", "--z", "0", "--w", "oops"])
        assert code == 2


class TestRadialSweep:
    def test_linear_all_zero(self, capsys, tmp_path):
        out_path = tmp_path / "sweep.csv"
        code, out, _ = run(capsys, [
            "radial-sweep", "--map", "linear", "--m", "2", "--M", "4",
            "--directions", "4", "--seed", "1", "--morse-trials", "0",
            "--out", str(out_path)])
        assert code == 0
        rows = [line for line in out_path.read_text().splitlines()
                if not line.startswith("#")]
        devs = [float(line.split(",")[2]) for line in rows]
        assert max(devs) <= 1e-9

    def test_whitney_first_direction_axis(self, capsys, tmp_path):
        # direction 0 is always e1, a radial monomial line of the map
        out_path = tmp_path / "sweep.csv"
        code, _, _ = run(capsys, [
            "radial-sweep", "--map", "whitney", "--directions", "3",
            "--seed", "1", "--morse-trials", "0", "--out", str(out_path)])
        assert code == 0
        rows = [line.split(",") for line in out_path.read_text().splitlines()
                if not line.startswith("#")]
        axis_devs = [float(r[2]) for r in rows if r[0] == "0"]
        assert max(axis_devs) <= 1e-9

    def test_json_format(self, capsys, tmp_path):
        out_path = tmp_path / "sweep.json"
        code, _, _ = run(capsys, [
            "radial-sweep", "--map", "power", "--m", "2", "--d", "2",
            "--directions", "2", "--morse-trials", "2", "--format", "json",
            "--out", str(out_path)])
        assert code == 0
        doc = json.loads(out_path.read_text())
        assert doc["C"] >= 1.0
        assert doc["bound"] >= doc["beta"]

    def test_deterministic_output(self, capsys, tmp_path):
        args = ["radial-sweep", "--map", "whitney", "--directions", "5",
                "--seed", "3", "--morse-trials", "2"]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(capsys, args + ["--out", str(p1)])[0] == 0
        assert run(capsys, args + ["--out", str(p2)])[0] == 0
        assert p1.read_bytes() == p2.read_bytes()


class TestRescale:
    def test_linear_end_to_end(self, capsys, tmp_path):
        trace = tmp_path / "trace.json"
        code, out, _ = run(capsys, [
            "rescale", "--map", "linear", "--m", "2", "--M", "4",
            "--seq", "cartan", "--n-start", "1", "--n-end", "8",
            "--out", str(trace)])
        assert code == 0
        assert "lambda 1" in out
        doc = json.loads(trace.read_text())
        assert abs(doc["normal_form"]["lambda"] - 1.0) <= 1e-8
        assert doc["normal_form"]["flatten_residual"] <= 1e-8
        assert doc["mode"] == "sequence"

    def test_identity_map_m1(self, capsys):
        code, out, _ = run(capsys, [
            "rescale", "--map", "linear", "--m", "1", "--M", "1",
            "--n-start", "1", "--n-end", "6"])
        assert code == 0
        assert "lambda 1" in out

    def test_non_member_rejected(self, capsys):
        code, _, err = run(capsys, [
            "rescale", "--map", "whitney", "--seq", "cartan",
            "--n-start", "1", "--n-end", "6"])
        assert code == 2
        assert "residual" in err

    def test_non_member_conjugate_mode_builds(self, capsys, tmp_path):
        # with the conjugate route the scaling table is still verifiable
        trace = tmp_path / "trace.json"
        code, out, err = run(capsys, [
            "rescale", "--map", "whitney", "--seq", "cartan",
            "--n-start", "1", "--n-end", "6", "--allow-non-member",
            "--out", str(trace)])
        # the finite-n limit of a compact-symmetry map keeps suppressed
        # terms above the pattern tolerance: a numeric failure, exit 3
        assert code == 3
        assert "vanishing-pattern" in err or "quadratic_normal_form" in err

    def test_non_escaping_diagnostic(self, capsys, tmp_path):
        seq = tmp_path / "seq.json"
        eye3 = np.eye(3, dtype=complex)
        eye5 = np.eye(5, dtype=complex)
        seq.write_text(json.dumps({
            "pairs": [{"phi": complex_json(eye3), "psi": complex_json(eye5)}] * 4}))
        code, _, err = run(capsys, [
            "rescale", "--map", "linear", "--m", "2", "--M", "4",
            "--seq", "custom-file", "--seq-file", str(seq)])
        assert code == 4
        assert "escape" in err


class TestReport:
    def test_summarizes_trace(self, capsys, tmp_path):
        trace = tmp_path / "trace.json"
        assert run(capsys, ["rescale", "--map", "linear", "--m", "2", "--M", "4",
                            "--n-start", "1", "--n-end", "6",
                            "--out", str(trace)])[0] == 0
        code, out, _ = run(capsys, ["report", "--trace", str(trace)])
        assert code == 0
        assert "lambda 1" in out and "n=5" in out

    def test_rejects_other_documents(self, capsys, tmp_path):
        path = tmp_path / "not_trace.json"
        path.write_text("{}")
        assert run(capsys, ["report", "--trace", str(path)])[0] == 2


class TestHausdorffCommand:
    def test_identical_curves(self, capsys, tmp_path):
        t = np.linspace(0.0, 3.0, 20)
        pts = np.tanh(t)[:, None] * np.array([[1.0 + 0j]])
        doc = {"model": "ball", "params": t.tolist(), "points": complex_json(pts)}
        p1 = tmp_path / "c1.json"
        p1.write_text(json.dumps(doc))
        code, out, _ = run(capsys, ["hausdorff", "--curve1", str(p1), "--curve2", str(p1)])
        assert code == 0
        assert out.split()[0] == "0"


class TestMorseCommand:
    def test_deterministic(self, capsys):
        args = ["morse", "--m", "1", "--alpha", "1", "--beta", "1",
                "--trials", "20", "--seed", "7"]
        out1 = run(capsys, args)
        out2 = run(capsys, args)
        assert out1 == out2
        assert out1[0] == 0
        assert float(out1[1]) > 0


class TestVerifyGroup:
    def test_cartan_accepted(self, capsys, tmp_path):
        ch, sh = np.cosh(1.0), np.sinh(1.0)
        mat = np.array([[ch, 0, sh], [0, 1, 0], [sh, 0, ch]], dtype=complex)
        path = tmp_path / "a1.json"
        path.write_text(json.dumps(complex_json(mat)))
        code, out, _ = run(capsys, ["verify-group", "--matrix-file", str(path)])
        assert code == 0
        assert float(out) <= 1e-14

    def test_non_member_exit(self, capsys, tmp_path):
        mat = np.eye(3, dtype=complex)
        mat[0, 0] = 2.0
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(complex_json(mat)))
        code, _, _ = run(capsys, ["verify-group", "--matrix-file", str(path)])
        assert code == 3


class TestCatalogCommand:
    def test_listing(self, capsys):
        code, out, _ = run(capsys, ["catalog"])
        assert code == 0
        assert "whitney" in out

    def test_spec_export_loadable(self, capsys, tmp_path):
        from ballmaps import proper_maps as pm
        path = tmp_path / "whitney.json"
        code, _, _ = run(capsys, ["catalog", "--map", "whitney", "--out", str(path)])
        assert code == 0
        spec = pm.load_map_spec(path)
        assert (spec.m, spec.M) == (2, 3)

    def test_spec_file_input(self, capsys, tmp_path):
        path = tmp_path / "power.json"
        assert run(capsys, ["catalog", "--map", "power", "--m", "2", "--d", "2",
                            "--out", str(path)])[0] == 0
        code, out, _ = run(capsys, ["rescale", "--spec-file", str(path),
                                    "--n-start", "1", "--n-end", "4",
                                    "--allow-non-member"])
        # conjugate traces of the power map stop at the pattern check too
        assert code == 3
