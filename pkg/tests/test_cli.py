import csv
import hashlib
import json
import math
from pathlib import Path

import pytest

from affine_ergo.cli import main
from affine_ergo.model import ModelParams, save_model


@pytest.fixture
def bad_model(tmp_path):
    # subcriticality fails: 2 b2 >= a1
    p = ModelParams(a1=1.0, a2=0.5, b0=0.2, b1=0.3, b2=0.6, sigma=0.5,
                    alpha=((0.25, 0.0), (0.0, 0.0)))
    path = tmp_path / "bad.json"
    save_model(p, path)
    return str(path)


def run(*argv):
    return main(list(argv))


class TestExitCodes:
    def test_validate_bundled_ok(self, tmp_path):
        assert run("--model", "cir_ou", "--out", str(tmp_path), "validate") == 0

    def test_validate_strict_failure(self, bad_model, tmp_path):
        assert run("--model", bad_model, "--out", str(tmp_path), "--strict", "validate") == 2

    def test_validate_nonstrict_failure_is_zero(self, bad_model, tmp_path):
        assert run("--model", bad_model, "--out", str(tmp_path), "validate") == 0

    def test_unknown_flag(self):
        assert run("--no-such-flag") == 64

    def test_unknown_subcommand(self):
        assert run("frobnicate") == 64

    def test_missing_model(self, tmp_path):
        assert run("--model", "no_such_model", "--out", str(tmp_path), "validate") == 64

    def test_model_required(self, tmp_path):
        assert run("--out", str(tmp_path), "validate") == 64


class TestCharfnGolden:
    def test_cir_closed_form_value(self, tmp_path, capsys):
        # closed-form transform for the bundled diffusion model at
        # u = (-1, 0), t = 1, x = (1, 0)
        a1, a2, alpha, u1, t = 2.0, 0.5, 0.25, -1.0, 1.0
        e = math.exp(-a1 * t)
        v1 = u1 * e / (1.0 - alpha * u1 * (1.0 - e) / a1)
        # int_0^t a2 V1(s) ds has closed form via substitution
        # d/ds log(1 - alpha u1 (1 - e^{-a1 s})/a1) = -alpha V1(s)
        psi_int = (a2 / alpha) * math.log(1.0 - alpha * u1 * (1.0 - e) / a1) * -1.0
        golden = math.exp(v1 + psi_int)
        rc = run("--model", "cir_ou", "--out", str(tmp_path), "charfn",
                 "--t", "1", "--u1", "-1", "--u2i", "0")
        assert rc == 0
        payload = json.loads((tmp_path / "charfn.json").read_text())
        assert payload["re"] == pytest.approx(golden, rel=1e-7)
        assert payload["im"] == pytest.approx(0.0, abs=1e-10)


class TestOutputs:
    def test_manifest_written(self, tmp_path):
        run("--model", "cir_ou", "--out", str(tmp_path), "validate")
        man = json.loads((tmp_path / "manifest_validate.json").read_text())
        assert man["subcommand"] == "validate"
        assert len(man["model_sha256"]) == 64
        assert man["outputs"] == ["validate.json"]

    def test_simulate_csv_shape(self, tmp_path):
        rc = run("--model", "cir_ou", "--seed", "3", "--out", str(tmp_path),
                 "simulate", "--paths", "10", "--dt", "0.05", "--t", "0.5",
                 "--record", "0.25", "--record", "0.5")
        assert rc == 0
        with open(tmp_path / "paths.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["path_id", "t", "Y", "Z"]
        assert len(rows) == 1 + 10 * 2
        # ordered by path_id then t
        ids = [int(r[0]) for r in rows[1:]]
        assert ids == sorted(ids)

    def test_couple_csv(self, tmp_path):
        rc = run("--model", "cir_ou", "--seed", "3", "--out", str(tmp_path),
                 "couple", "--paths", "10", "--dt", "0.05", "--t", "0.5")
        assert rc == 0
        with open(tmp_path / "coupled.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:4] == ["path_id", "t", "Yx", "Zx"]

    def test_vbar_csv(self, tmp_path):
        rc = run("--model", "jump_cbi_ou", "--out", str(tmp_path),
                 "vbar", "--tmin", "0.1", "--tmax", "2", "--n", "9")
        assert rc == 0
        with open(tmp_path / "vbar.csv") as fh:
            rows = list(csv.reader(fh))
        vals = [float(r[1]) for r in rows[1:]]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_check_conditions(self, tmp_path):
        rc = run("--model", "jump_cbi_ou", "--out", str(tmp_path), "--strict",
                 "check-conditions", "--eps", "0.1")
        assert rc == 0
        rep = json.loads((tmp_path / "conditions.json").read_text())
        assert rep["A"]["verdict"] == "holds"
        assert rep["Cprime"]["verdict"] == "holds"

    def test_solve_riccati_csv(self, tmp_path):
        rc = run("--model", "cir_ou", "--out", str(tmp_path),
                 "solve-riccati", "--t", "1", "--u1", "-1", "--grid", "10")
        assert rc == 0
        with open(tmp_path / "riccati.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "t"
        assert len(rows) == 11


class TestDeterminism:
    @staticmethod
    def _hash_outputs(d: Path) -> dict:
        out = {}
        for f in sorted(d.iterdir()):
            if f.name.startswith("manifest_"):
                continue  # manifests carry timestamps
            out[f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
        return out

    def test_same_seed_same_hash(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        for d in (d1, d2):
            assert run("--model", "cir_ou", "--seed", "5", "--out", str(d),
                       "simulate", "--paths", "50", "--dt", "0.05", "--t", "0.5") == 0
        assert self._hash_outputs(d1) == self._hash_outputs(d2)

    def test_threads_do_not_change_outputs(self, tmp_path):
        d1, d2 = tmp_path / "t1", tmp_path / "t8"
        for d, n in ((d1, "1"), (d2, "8")):
            assert run("--model", "jump_cbi_ou", "--seed", "5", "--threads", n,
                       "--out", str(d), "simulate",
                       "--paths", "300", "--dt", "0.02", "--t", "0.5") == 0
        assert self._hash_outputs(d1) == self._hash_outputs(d2)
