import hashlib

import pytest

import photodyn

TRACE = """seed = 2
[detection]
background_cps = 5000.0
[protocol]
kind = "trace"
duration_s = 1.0
bin_width_s = 1e-3
[[analysis]]
stage = "mixture"
grid_points = 3
"""


def test_version_and_suites():
    assert photodyn.__version__
    assert "A9-qe" in photodyn.suite_names()


def test_sha256_matches_hashlib():
    assert photodyn.sha256_hex("photodyn") == hashlib.sha256(b"photodyn").hexdigest()


def test_mixture_pmf_sums_to_one():
    pmf = photodyn.mixture_pmf(0.3, 1.0, 0.1, 20.0, 60)
    assert abs(sum(pmf) - 1.0) < 1e-9


def test_simulate_analyze_report(tmp_path):
    files = photodyn.simulate(TRACE, tmp_path)
    assert "trace.csv" in files
    manifest = photodyn.read_json(tmp_path / "run.json")
    assert manifest["config_sha256"] == hashlib.sha256(TRACE.encode()).hexdigest()
    raw = (tmp_path / "trace.csv").read_bytes()
    results = photodyn.analyze(tmp_path)
    assert [r.stage for r in results] == ["mixture"]
    assert results[0].ok, results[0].error
    photodyn.report(tmp_path)
    assert (tmp_path / "trace.csv").read_bytes() == raw
    bic = photodyn.read_csv(tmp_path / "analysis" / "bic_curve.csv")
    assert len(next(iter(bic.values()))) == 3


def test_determinism(tmp_path):
    photodyn.simulate(TRACE, tmp_path / "a")
    photodyn.simulate(TRACE, tmp_path / "b")
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_errors(tmp_path):
    with pytest.raises(photodyn.ConfigError):
        photodyn.simulate("[protocol]\nkind = 'nope'\n", tmp_path)
    with pytest.raises(photodyn.MissingInput):
        photodyn.analyze(tmp_path / "absent")


def test_closed_loop_qe():
    report = photodyn.closed_loop("A9-qe")
    assert report[0]["pass"]
