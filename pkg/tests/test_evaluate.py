import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from hiddencascade.evaluate import (ROWS, SCENARIOS, ScenarioSpec, changepoints, deviation_alpha,
                                    deviation_t, deviation_z, independent_changepoint, mean_ci,
                                    replication_seed, run_replication, run_scenarios, scenario)
from hiddencascade.likelihood import GaussianModel
from hiddencascade.model import ModelError, ObservationMatrix
from hiddencascade.synth import SynthConfig, generate_dataset


def test_deviation_examples():
    assert deviation_t([1, 2, 3], [1, 2, 3]) == 0
    assert deviation_t([1, 2, 3], [1, 4, 3]) == pytest.approx(2 / 3)
    assert deviation_z([-1, 0, 1], [-1, 0, 1]) == 0
    assert deviation_z([-1, 0, 1], [-1, 0, 0]) == 1
    assert deviation_z([-1, 0, 1, 2], [-1, 2, 3, 0]) == 3
    a = np.zeros((3, 3))
    a[1, 0], a[2, 1] = 1.0, 2.0
    b = a.copy()
    b[2, 1] = 2.6
    assert deviation_alpha(a, a) == 0
    assert deviation_alpha(a, b) == pytest.approx(0.2)


def test_deviation_alpha_ignores_outside_mask():
    est = np.array([[0.0, 0.0], [1.0, 0.0]])
    truth = np.array([[5.0, 0.0], [1.0, 7.0]])
    assert deviation_alpha(est, truth) == 0
    assert deviation_alpha(est, truth, mask=np.ones((2, 2), bool)) == 6.0


def test_length_mismatch_errors():
    with pytest.raises(ModelError):
        deviation_t([1, 2], [1, 2, 3])
    with pytest.raises(ModelError):
        deviation_z([1], [1, 2])
    with pytest.raises(ModelError):
        deviation_alpha(np.zeros((2, 2)), np.zeros((3, 3)))


vec = st.integers(min_value=1, max_value=30).flatmap(
    lambda n: st.tuples(*[st.lists(st.integers(-1, 50), min_size=n, max_size=n)] * 3))


@settings(max_examples=1000, deadline=None)
@given(vec)
def test_time_and_parent_metric_axioms(v):
    a, b, c = (np.array(x) for x in v)
    for f in (deviation_t, deviation_z):
        assert f(a, b) >= 0
        assert f(a, b) == f(b, a)
        assert (f(a, b) == 0) == np.array_equal(a, b)
        assert f(a, c) <= f(a, b) + f(b, c) + 1e-12


mat = st.integers(min_value=1, max_value=6).flatmap(
    lambda n: st.tuples(*[st.lists(st.floats(0.01, 20), min_size=n * n, max_size=n * n)] * 2,
                        st.lists(st.booleans(), min_size=n * n, max_size=n * n)))


@settings(max_examples=1000, deadline=None)
@given(mat)
def test_strength_metric_axioms(v):
    n = math.isqrt(len(v[0]))
    a, b = (np.array(x).reshape(n, n) for x in v[:2])
    mask = np.array(v[2]).reshape(n, n)
    d = deviation_alpha(a, b, mask)
    assert d >= 0
    assert d == deviation_alpha(b, a, mask)
    assert (d == 0) == np.array_equal(a[mask], b[mask])


def test_changepoint_examples():
    model = GaussianModel.uniform(1, 10.0, 100.0, 1.0)
    assert independent_changepoint([10, 10, 100, 100], model) == 3
    flat = GaussianModel.uniform(1, 5.0, 5.0, 1.0)
    assert independent_changepoint([5, 5, 5, 5, 5], flat) == 1


def exhaustive_changepoint(d, mu1, mu2, s1, s2):
    """Second implementation: evaluate every split with scipy densities."""
    best, arg = -np.inf, None
    for t in range(1, len(d) + 1):
        ll = stats.norm(mu1, s1).logpdf(d[: t - 1]).sum() + stats.norm(mu2, s2).logpdf(d[t - 1:]).sum()
        if ll > best + 1e-9:
            best, arg = ll, t
    return arg


def test_noisy_scenario_c_changepoints_match_exhaustive_scan():
    cfg = scenario("C").synth_config()
    model = cfg.obs_model()
    for seed in range(5):
        ds = generate_dataset(cfg, seed=seed)
        fast = changepoints(ds.obs, model)
        for i in range(cfg.n_nodes):
            d = ds.obs.data[i]
            slow = exhaustive_changepoint(d, 10.0, 11.0, 1.0, 1.0)
            assert independent_changepoint(d, model, i) == fast[i] == slow


def test_scenario_table():
    assert SCENARIOS == {"A": dict(mu2=100.0, b2=0.9), "B": dict(mu2=100.0, b2=0.6),
                         "C": dict(mu2=11.0, b2=0.9), "D": dict(mu2=11.0, b2=0.6)}
    spec = scenario("D")
    assert (spec.n_nodes, spec.replications, spec.total_iters, spec.burn_in) == (20, 30, 20_000, 1_000)
    cfg = spec.synth_config()
    assert (cfg.mu1, cfg.sigma1, cfg.a1, cfg.b1, cfg.a2, cfg.b2, cfg.mu2) == (10, 1, 9, 0.5, 10, 0.6, 11)
    with pytest.raises(ModelError):
        ScenarioSpec("X", 1.0, 1.0, replications=0)


def test_replication_seeds_are_xor():
    assert [replication_seed(5, r) for r in range(4)] == [5, 4, 7, 6]


def test_mean_ci():
    m, lo, hi = mean_ci([1.0, 2.0, 3.0])
    assert m == 2.0
    assert hi - m == pytest.approx(1.959963984540054 / math.sqrt(3))
    assert mean_ci([4.0]) == (4.0, 4.0, 4.0)


@pytest.fixture(scope="module")
def small_report():
    specs = [scenario(x, replications=3, n_nodes=8, total_iters=600, burn_in=100, horizon=80)
             for x in "AC"]
    return run_scenarios(specs, seed=1)


def test_report_schema(small_report):
    rows = small_report.rows()
    assert [(r["scenario"], r["metric"], r["estimator"]) for r in rows] == \
        [(s, m, e) for s in "AC" for m, e in ROWS]
    for r in rows:
        assert r["ci_low"] <= r["mean"] <= r["ci_high"]
    parsed = list(csv.DictReader(io.StringIO(small_report.to_csv())))
    assert list(parsed[0]) == ["scenario", "metric", "estimator", "mean", "ci_low", "ci_high"]
    assert len(parsed) == 12
    d = small_report.to_dict()
    assert "not a measured value" in d["degradation_rule"]
    assert set(d["degradation_holds"]) == {"A", "C"}
    assert len(d["replications"]["A"]) == 3


def test_replication_is_deterministic():
    spec = scenario("C", n_nodes=6, total_iters=400, burn_in=100, horizon=60)
    assert run_replication(spec, 3) == run_replication(spec, 3)


def test_threaded_scenarios_match_serial():
    spec = [scenario("B", replications=3, n_nodes=6, total_iters=300, burn_in=100, horizon=60)]
    serial = run_scenarios(spec, seed=2, workers=1)
    threaded = run_scenarios(spec, seed=2, workers=3)
    assert serial.replications == threaded.replications


def test_known_times_not_worse_on_parents():
    """One-sided paired comparison over 30 matched replications."""
    spec = scenario("C", replications=30, n_nodes=10, total_iters=2_000, burn_in=500, horizon=100)
    reps = run_scenarios([spec], seed=11).replications["C"]
    diff = np.array([r[("D_z", "joint")] - r[("D_z", "known_t")] for r in reps], float)
    se = diff.std(ddof=1) / math.sqrt(len(diff))
    assert diff.mean() >= -2 * se
