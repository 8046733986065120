import csv
import json
import math
import threading

import numpy as np
import pytest

from pamlab.errors import UsageError
from pamlab.harness import (
    DEFAULT_SUITE, EXPERIMENTS, ExperimentReport, ExperimentSpec, SuiteReport, export, geometric_ks, load_report,
    run_experiment, verify_all,
)
from pamlab.harness.experiments import census_time
from pamlab.harness.report import check_close, check_le
from pamlab.asymptotics import window_probability
from pamlab.tails import Weibull

SMALL = {
    "sandwich": {"samples": 30},
    "solver-crosscheck": {"samples": 3, "fk_fields": 2, "walks": 5000},
    "eigen-identities": {"samples": 20, "profile_fields": 10},
    "conditional-tail": {"samples": 500},
    "moments": {"samples": 5000},
    "peak-census": {"samples": 200_000},
    "correlation-identity": {"samples": 5000},
}


def small(name, **extra):
    return ExperimentSpec(name, {**SMALL.get(name, {}), **extra})


def test_registry_covers_default_suite():
    assert set(DEFAULT_SUITE) == set(EXPERIMENTS)
    for exp in EXPERIMENTS.values():
        assert {"seed", "tol_scale"} <= exp.keys


def test_spec_validation():
    with pytest.raises(UsageError):
        ExperimentSpec("nope").resolved()
    with pytest.raises(UsageError):
        ExperimentSpec("tauberian", {"kappa": 1.0}).resolved()
    with pytest.raises(UsageError):
        ExperimentSpec("tauberian", {"tol_scale": -1.0}).resolved()
    with pytest.raises(UsageError):
        verify_all(tol_scale=-0.5)
    assert ExperimentSpec("sandwich", {"bc": "FREE"}).resolved()["bc"] == "free"


def test_checks():
    assert check_close("a", 1.0, 1.05, 0.1).passed
    assert not check_close("a", 1.0, 1.2, 0.1).passed
    c = check_le("b", 2.0, 1.0, 0.5)
    assert not c.passed and c.one_sided
    assert check_le("b", 1.4, 1.0, 0.5).passed


@pytest.mark.parametrize("name", DEFAULT_SUITE)
def test_each_experiment_passes_at_small_scale(name):
    if name == "peak-census":
        rep = run_experiment(small(name, p=0.01))
    else:
        rep = run_experiment(small(name))
    failed = [c.name for c in rep.checks if not c.passed]
    assert rep.checks and not failed, failed
    assert rep.runtime_ms > 0


def test_reports_are_reproducible_across_threads():
    a = run_experiment(small("moments"), threads=1)
    b = run_experiment(small("moments"), threads=4)
    assert a.fingerprint() == b.fingerprint()
    assert a.canonical_json() == b.canonical_json()


def test_seed_change_moves_estimates_but_still_passes():
    a = run_experiment(small("conditional-tail", seed=1))
    b = run_experiment(small("conditional-tail", seed=2))
    assert a.passed and b.passed
    assert a.estimates != b.estimates


def test_surrogate_marker():
    rep = run_experiment(ExperimentSpec("intermittency-mass"))
    assert all("surrogate: annealed" in c.tags for c in rep.checks)


def test_tolerance_scale_zero_fails_tauberian():
    rep = run_experiment(ExperimentSpec("tauberian", {"tol_scale": 0.0}))
    assert not rep.passed


def test_json_roundtrip(tmp_path):
    rep = run_experiment(ExperimentSpec("tauberian"))
    path = tmp_path / "r.json"
    export(rep, "json", path)
    back = load_report(path)
    assert back == rep
    d = json.loads(path.read_text())
    assert set(d) == {"experiment", "params", "seed", "estimates", "predictions", "checks", "runtime_ms"}
    assert set(d["checks"][0]) >= {"name", "pass", "lhs", "rhs", "tol"}


def test_nonfinite_values_roundtrip(tmp_path):
    rep = ExperimentReport("x", {}, 1)
    rep.estimate("e", float("inf"), float("nan"))
    rep.add(check_le("c", -math.inf, 0.0))
    path = tmp_path / "r.json"
    export(rep, "json", path)
    back = load_report(path)
    assert back.estimates[0]["value"] == math.inf and math.isnan(back.estimates[0]["stderr"])


def test_csv_rows(tmp_path):
    rep = run_experiment(ExperimentSpec("ageing-scan"))
    path = tmp_path / "r.csv"
    export(rep, "csv", path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["name", "pass", "lhs", "rhs", "tol"]
    assert len(rows) == len(rep.checks) + 1
    suite = SuiteReport(1, [rep, run_experiment(ExperimentSpec("tauberian"))])
    export(suite, "csv", path)
    rows = list(csv.reader(path.open()))
    assert len(rows) == len(suite.checks) + 1
    assert rows[1][0].startswith("ageing-scan/")


def test_export_errors(tmp_path):
    rep = ExperimentReport("x", {}, 1)
    with pytest.raises(UsageError):
        export(rep, "xml", tmp_path / "r.xml")
    with pytest.raises(OSError):
        export(rep, "json", tmp_path / "missing" / "r.json")
    assert not list(tmp_path.iterdir())


def test_concurrent_exports_do_not_interleave(tmp_path):
    reps = []
    for i in range(8):
        r = ExperimentReport(f"exp{i}", {"i": i}, i)
        for k in range(300):
            r.estimate(f"e{k}", i * 1000 + k)
        reps.append(r)
    threads = [threading.Thread(target=export, args=(r, "json", tmp_path / f"{i}.json")) for i, r in enumerate(reps)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for i, r in enumerate(reps):
        assert load_report(tmp_path / f"{i}.json") == r


def test_geometric_ks():
    rng = np.random.default_rng(0)
    p = 0.05
    assert geometric_ks(rng.geometric(p, 200_000), p) < 0.005
    assert geometric_ks(rng.geometric(0.2, 200_000), p) > 0.3
    assert geometric_ks([], p) == 1.0


def test_census_time():
    model = Weibull(2.0)
    t = census_time(model, 1.0, 1e-4)
    assert window_probability(model, t, 1.0) == pytest.approx(1e-4, rel=1e-9)


def test_suite_fingerprint_ignores_runtime():
    a = verify_all(3, names=["tauberian", "ageing-scan"])
    b = verify_all(3, names=["tauberian", "ageing-scan"])
    assert a.passed
    assert a.fingerprint() == b.fingerprint()
