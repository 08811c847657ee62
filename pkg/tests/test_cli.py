import csv
import io
import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from steincv import gaussian_target, sample_iid
from steincv.cli import load_schema, main


def _write(path, values, header=None):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] == 1 and values.size > 1 and header is None:
        values = values.T
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return str(path)


@pytest.fixture
def gauss_files(tmp_path):
    s = sample_iid(gaussian_target([3.0], [[4.0]]), 40, seed=1)
    return {
        "samples": _write(tmp_path / "s.csv", s.thetas),
        "grads": _write(tmp_path / "g.csv", s.grads),
        "integrands": _write(tmp_path / "f.csv", np.column_stack([s.thetas[:, 0], s.thetas[:, 0] ** 2]), ["x", "x2"]),
        "thetas": s.thetas,
    }


def _estimate(files, method, out, *extra):
    argv = ["estimate", "--samples", files["samples"], "--grads", files["grads"], "--integrands", files["integrands"]]
    return main(argv + ["--method", method, "--out", str(out), *extra])


def _validate(doc, name):
    jsonschema.validate(doc, load_schema(name))


def test_estimate_zero_variance(gauss_files, tmp_path):
    out = tmp_path / "est.json"
    assert _estimate(gauss_files, "zv:q=1", out) == 0
    doc = json.loads(out.read_text())
    _validate(doc, "estimate")
    assert doc["estimates"][0] == pytest.approx(3.0, abs=1e-10)
    assert doc["integrands"] == ["x", "x2"]


def test_estimate_mc_is_column_mean(gauss_files, tmp_path):
    out = tmp_path / "mc.json"
    assert _estimate(gauss_files, "mc", out) == 0
    x = gauss_files["thetas"][:, 0]
    np.testing.assert_allclose(json.loads(out.read_text())["estimates"], [x.mean(), (x**2).mean()], rtol=1e-14)


def test_estimate_is_byte_identical(gauss_files, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert _estimate(gauss_files, "sa:k=25,qmax=3", a, "--seed", "7") == 0
    assert _estimate(gauss_files, "sa:k=25,qmax=3", b, "--seed", "7", "--threads", "3") == 0
    assert a.read_bytes() == b.read_bytes()
    _validate(json.loads(a.read_text()), "estimate")


def test_estimate_with_timing(gauss_files, tmp_path):
    out = tmp_path / "t.json"
    assert _estimate(gauss_files, "rzv:q=2", out, "--timing") == 0
    doc = json.loads(out.read_text())
    _validate(doc, "estimate")
    assert doc["timing"]["postprocessing_seconds"] >= 0


def test_exit_codes(gauss_files, tmp_path, capsys):
    bad = dict(gauss_files, grads=_write(tmp_path / "g2.csv", np.zeros((39, 1))))
    assert _estimate(bad, "mc", tmp_path / "o.json") == 2
    assert _estimate(gauss_files, "zv:q=40", tmp_path / "o.json") == 3
    assert _estimate(gauss_files, "zv:q=banana", tmp_path / "o.json") == 4
    assert _estimate(gauss_files, "nosuch", tmp_path / "o.json") == 4
    missing = dict(gauss_files, samples=str(tmp_path / "nope.csv"))
    assert _estimate(missing, "mc", tmp_path / "o.json") == 5
    err = capsys.readouterr().err.strip().splitlines()
    assert all(line.startswith("steincv: error exit=") for line in err)
    assert err[-1].startswith("steincv: error exit=5 kind=FileNotFoundError message=")


def test_generate(tmp_path):
    argv = ["generate", "--target", "gaussian:d=2", "--sampler", "iid", "--S", "100", "--seed", "3"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    samples = np.loadtxt(tmp_path / "a" / "samples.csv", delimiter=",", skiprows=1)
    grads = np.loadtxt(tmp_path / "a" / "grads.csv", delimiter=",", skiprows=1)
    assert samples.shape == grads.shape == (100, 2)
    for name in ("samples.csv", "grads.csv", "integrands.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    _validate(json.loads((tmp_path / "a" / "manifest.json").read_text()), "manifest")


def test_generate_mala_manifest(tmp_path):
    argv = ["generate", "--target", "banana:d=2,b=0.3", "--sampler", "mala", "--warmup", "1000", "--S", "50"]
    assert main(argv + ["--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    _validate(manifest, "manifest")
    assert manifest["warmup"] == 1000 and 0 < manifest["acceptance_rate"] <= 1


def test_generate_bad_target(tmp_path):
    assert main(["generate", "--target", "cauchy:d=2", "--S", "10", "--out", str(tmp_path)]) == 4


def test_round_trip(tmp_path):
    gen = ["generate", "--target", "gaussian:d=2,mean=1,rho=0.3", "--sampler", "iid", "--S", "60", "--integrand", "theta,theta1*theta2"]
    assert main(gen + ["--out", str(tmp_path)]) == 0
    out = tmp_path / "est.json"
    argv = ["estimate", "--samples", str(tmp_path / "samples.csv"), "--grads", str(tmp_path / "grads.csv")]
    argv += ["--integrands", str(tmp_path / "integrands.csv"), "--method", "zv:q=2", "--out", str(out)]
    assert main(argv) == 0
    np.testing.assert_allclose(json.loads(out.read_text())["estimates"], [1.0, 1.0, 1.3], atol=1e-9)


def _bench(tmp_path, name, *extra):
    out = tmp_path / name
    argv = ["benchmark", "--target", "gaussian:d=2", "--S", "50", "--reps", "4", "--sampler", "iid", "--out", str(out)]
    assert main(argv + list(extra)) == 0
    return out


def test_benchmark_mc_only(tmp_path):
    out = _bench(tmp_path, "mc.json", "--method", "mc", "--format", "json")
    doc = json.loads(out.read_text())
    _validate(doc, "benchmark")
    assert [r["se_mean"] for r in doc["rows"]] == [1.0]


def test_benchmark_zero_variance_flag(tmp_path):
    out = _bench(tmp_path, "zv.json", "--method", "zv:q=2", "--format", "json")
    doc = json.loads(out.read_text())
    _validate(doc, "benchmark")
    row = [r for r in doc["rows"] if r["method"] == "zv:q=2"][0]
    assert row["se_mean"] == "inf" and all(row["se_infinite"])


def test_benchmark_csv_reproducible(tmp_path):
    a = _bench(tmp_path, "a.csv", "--method", "zv:q=1;sa:k=5,qmax=3", "--seed", "1")
    b = _bench(tmp_path, "b.csv", "--method", "zv:q=1", "--method", "sa:k=5,qmax=3", "--seed", "1")

    def drop_timing(text):
        # oe_mean and the two timing columns depend on wall time
        timed = {"oe_mean", "sampling_seconds", "postprocessing_seconds"}
        return [{k: v for k, v in row.items() if k not in timed} for row in csv.DictReader(io.StringIO(text))]

    assert drop_timing(a.read_text()) == drop_timing(b.read_text())
    assert a.read_text().splitlines()[0].startswith("target,S,method,se_mean")


def _check(tmp_path, thetas, grads):
    out = tmp_path / "check.json"
    argv = ["check", "--samples", _write(tmp_path / "cs.csv", thetas), "--grads", _write(tmp_path / "cg.csv", grads)]
    code = main(argv + ["--out", str(out)])
    return code, (json.loads(out.read_text()) if code == 0 else None)


def test_check_correct_gradients(tmp_path):
    x = np.random.default_rng(5).standard_normal((2000, 2))
    code, doc = _check(tmp_path, x, -x)
    assert code == 0
    _validate(doc, "check")
    assert doc["n_flagged"] == 0


def test_check_flipped_gradients(tmp_path):
    x = np.random.default_rng(5).standard_normal((2000, 2))
    code, doc = _check(tmp_path, x, x)
    assert code == 0
    flagged = {tuple(doc["columns"][j]["monomial"]) for j in doc["flagged"]}
    assert {(2, 0), (0, 2)} <= flagged


def test_check_needs_30_samples(tmp_path):
    x = np.random.default_rng(0).standard_normal((20, 2))
    assert _check(tmp_path, x, -x)[0] == 2


def test_threads_env_var(gauss_files, tmp_path, monkeypatch):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert _estimate(gauss_files, "sa:k=10,qmax=3", a) == 0
    monkeypatch.setenv("STEINCV_THREADS", "4")
    assert _estimate(gauss_files, "sa:k=10,qmax=3", b) == 0
    assert a.read_bytes() == b.read_bytes()
    monkeypatch.setenv("STEINCV_THREADS", "many")
    assert _estimate(gauss_files, "mc", b) == 4


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "steincv", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("steincv ")
