import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaquant.core import Box, ConfigError
from gaquant.harness import (
    Experiment,
    McResult,
    format_tables,
    jarque_bera,
    rate_fit,
    report_tables,
    run_experiment,
    uniform_error,
)

from conftest import sine_bump_model

BOX = Box([0.1, 0.1], [0.9, 0.9])


@settings(max_examples=40)
@given(st.floats(-1.5, 1.5), st.floats(-5, 5),
       st.lists(st.integers(10, 10**6), min_size=3, max_size=6, unique=True))
def test_rate_fit_exact_on_power_law(slope, logc, ns):
    ns = sorted(ns)
    e = [np.exp(logc) * n**slope for n in ns]
    fit = rate_fit(ns, e)
    assert fit.slope == pytest.approx(slope, abs=1e-12)
    assert fit.intercept == pytest.approx(logc, abs=1e-9)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_rate_fit_rejects_short_or_bad_input():
    with pytest.raises(ConfigError):
        rate_fit([100, 200], [0.1, 0.05])
    with pytest.raises(ConfigError):
        rate_fit([100, 200, 400], [0.1, 0.0, 0.02])


def test_jarque_bera_on_symmetric_two_point_sample():
    # skewness 0 and kurtosis 1, so JB = m/6 * (4/4)
    x = np.tile([1.0, -1.0], 50)
    stat, pval = jarque_bera(x)
    assert stat == pytest.approx(100 / 6, rel=1e-12)
    assert pval == pytest.approx(np.exp(-stat / 2), rel=1e-12)


def test_jarque_bera_accepts_normal_draws():
    stat, pval = jarque_bera(np.random.default_rng(0).standard_normal(10_000))
    assert pval > 0.01


def test_jarque_bera_rejects_skewed_draws():
    _, pval = jarque_bera(np.random.default_rng(0).exponential(size=2000))
    assert pval < 1e-6


def test_jarque_bera_input_checked():
    with pytest.raises(ConfigError):
        jarque_bera(np.ones(50))
    with pytest.raises(ConfigError):
        jarque_bera(np.arange(5.0))


def test_uniform_error():
    assert uniform_error([1.0, 2.0, 3.0], [1.0, 2.5, 2.0]) == 1.0
    assert uniform_error(np.zeros(3), np.zeros(3)) == 0.0


def _experiment(**kw):
    base = dict(model=sine_bump_model(), n_list=(200, 400), replications=2, box=BOX,
                anchors=(0.3, 0.3), probe=0.5, sup_points=5)
    base.update(kw)
    return Experiment(**base)


def test_experiment_round_trip(tmp_path):
    exp = _experiment(fit_link=True, h_g_const=0.4, seed_base=7)
    path = tmp_path / "e.json"
    path.write_text(json.dumps(exp.to_dict()))
    assert Experiment.from_json(path).to_dict() == exp.to_dict()


@pytest.mark.parametrize("kw", [{"replications": 1}, {"n_list": (400, 200)},
                                {"anchors": (0.3,)}, {"n_list": ()}])
def test_experiment_validation(kw):
    with pytest.raises(ConfigError):
        _experiment(**kw)


def test_experiment_unknown_field():
    obj = _experiment().to_dict()
    obj["bandwidth"] = 0.2
    with pytest.raises(ConfigError, match="unknown"):
        Experiment.from_dict(obj)


def test_bandwidth_rate():
    exp = _experiment(h_const=2.0)
    assert exp.bandwidth(3125) == pytest.approx(2.0 / 5.0)


@pytest.fixture(scope="module")
def small_run():
    return run_experiment(_experiment(fit_link=True))


def test_run_is_deterministic(small_run):
    again = run_experiment(_experiment(fit_link=True))
    strip = lambda recs: [r for r in recs if r[3] != "seconds"]
    assert strip(again.records) == strip(small_run.records)


def test_parallel_matches_serial(small_run):
    par = run_experiment(_experiment(fit_link=True), threads=2)
    strip = lambda recs: sorted(r for r in recs if r[3] != "seconds")
    assert strip(par.records) == strip(small_run.records)


def test_records_cover_all_cells(small_run):
    assert small_run.failure_rate() == 0.0
    assert set(small_run.probes("error")) >= {"q1@0.5", "q2@0.5"}
    assert any(p.startswith("G@") for p in small_run.probes("error"))
    for n, v in small_run.values("q2@0.5", "error").items():
        assert v.size == 2


def test_result_files_round_trip(small_run, tmp_path):
    small_run.to_csv(tmp_path / "mc.csv")
    small_run.to_json(tmp_path / "mc.json")
    back = McResult.from_files(tmp_path / "mc.csv", tmp_path / "mc.json")
    assert back.records == [tuple(r) for r in small_run.records]
    assert back.experiment == small_run.experiment


def test_empty_results_rejected(tmp_path):
    (tmp_path / "mc.csv").write_text("n,rep,probe,metric,value\n")
    with pytest.raises(ConfigError):
        McResult.from_files(tmp_path / "mc.csv")


def test_failed_cells_are_excluded():
    recs = [(100, 0, "q2@0.5", "error", 0.1), (100, 1, "q2@0.5", "error", 9.0),
            (100, 1, "cell", "failed", 1.0)]
    mc = McResult({}, recs)
    assert mc.failure_rate() == 0.5
    assert mc.rmse("q2@0.5") == {100: pytest.approx(0.1)}


def _power_law_result(slope=-0.4, reps=200, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    for n in (250, 500, 1000, 2000):
        scale = n**slope
        for r in range(reps):
            recs.append((n, r, "q2@0.5", "error", scale * rng.standard_normal()))
            recs.append((n, r, "q2", "sup_error", 3 * scale * (1 + 0.1 * rng.random())))
    return McResult({"h_const": 1.0, "p": 2}, recs)


def test_report_recovers_synthetic_slope():
    tables = report_tables(_power_law_result())
    (row,) = tables["rate"]
    assert row["slope"] == pytest.approx(-0.4, abs=0.05) and row["pass"]
    assert all(r["pass"] for r in tables["uniform"])
    assert "[rate]" in format_tables(tables)


def test_report_flags_wrong_rate():
    (row,) = report_tables(_power_law_result(slope=-0.8))["rate"]
    assert not row["pass"]


def test_variance_ratio_row():
    mc = _power_law_result(slope=-0.4)
    # scaled errors have variance n h n^-0.8 = n^0 here
    tables = report_tables(mc, sigma2={"q2@0.5": 1.0})
    assert all(r["pass"] for r in tables["variance"])
    assert all(r["ratio"] == pytest.approx(1.0, abs=0.35) for r in tables["variance"])


def test_rate_skips_probe_pinned_at_anchor():
    recs = [(n, r, "q1@0.3", "error", 0.0) for n in (100, 200, 400) for r in range(3)]
    assert report_tables(McResult({}, recs))["rate"] == []
