from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seqdesign.canonical import derive_canonical
from seqdesign.exceptions import (
    AllCandidatesDegenerateError,
    NoImprovementError,
    RankDeficiencyError,
)
from seqdesign.gain import fit_gain, fit_interpolant
from seqdesign.stage import (
    CostModel,
    StageRule,
    StageSizeRegressor,
    SweepTable,
    cut_point,
    default_candidates,
    default_cs_grid,
    default_d_grid,
    fit_stage_rule,
    optimal_stage_size,
    published_rule,
    round_to_even,
    suggest_stage_size,
    sweep_grid,
)

MODELS = ["logit", "probit", "cloglog"]


@pytest.fixture(scope="module")
def smooth_curve():
    """Exact logistic-in-log-D gain curve; no Monte-Carlo noise."""
    d_star = derive_canonical("cloglog").d_star
    d0 = np.geomspace(1, 1e5, 60)
    return fit_interpolant("cloglog", d0, d_star / (1 + np.exp(0.5 - 1.0 * np.log(d0))))


def test_candidate_set():
    c = default_candidates()
    assert c.size == 368
    assert np.all(c % 2 == 0)
    assert np.all(np.diff(c) > 0)
    assert c[0] == 2 and c[-1] == 200000


def test_default_grids():
    d, cs = default_d_grid(), default_cs_grid()
    assert d.size == 104 and cs.size == 35
    assert d[0] == pytest.approx(1) and d[-1] == pytest.approx(1000)
    assert np.allclose(np.diff(np.log(d)), np.log(d[1] / d[0]))


def test_cost_model():
    assert CostModel.from_seconds(0.88167, 0.00386).stage_cost == pytest.approx(228.4, abs=0.05)
    assert CostModel(10).total(100, 3) == 130
    with pytest.raises(ValueError):
        CostModel(-1)


@given(d=st.floats(1, 1e4), c=st.floats(0, 1e5), n=st.integers(1, 5000), cs=st.floats(0.1, 1e4))
def test_cut_point_back_substitution(smooth_curve, d, c, n, cs):
    """The cut point lies on both the one-stage and the two-stage cost lines."""
    n_k = 2 * n
    h0 = float(smooth_curve(d))
    d_k = d + n_k * h0 / 2
    hk = float(smooth_curve(d_k))
    if hk - h0 <= 1e-9:
        return
    p = cut_point(d, c, n_k, cs, smooth_curve)
    one_stage = c + cs + 2 * (p.d - d) / h0
    two_stage = c + cs + n_k + cs + 2 * (p.d - d_k) / hk
    assert p.c == pytest.approx(one_stage, rel=1e-9)
    assert p.c == pytest.approx(two_stage, rel=1e-9)
    assert p.d >= d_k


def test_cut_point_validation(smooth_curve):
    with pytest.raises(ValueError):
        cut_point(10, 0, 3, 10, smooth_curve)
    with pytest.raises(ValueError):
        cut_point(10, 0, 0, 10, smooth_curve)
    with pytest.raises(ValueError):
        cut_point(10, 0, 4, 0, smooth_curve)
    # beyond the domain the curve is flat, so no later gain exists
    with pytest.raises(NoImprovementError):
        cut_point(2e5, 0, 4, 10, smooth_curve)


def test_all_candidates_degenerate(smooth_curve):
    with pytest.raises(AllCandidatesDegenerateError):
        optimal_stage_size(2e5, 10, smooth_curve)


@pytest.mark.parametrize("d,cs", [(1.0, 1.0), (54.05, 228.4), (300.0, 5.0), (900.0, 900.0)])
def test_optimal_size_matches_brute_force(smooth_curve, d, cs):
    best, best_d = None, math.inf
    for n in default_candidates():
        try:
            p = cut_point(d, 0.0, int(n), cs, smooth_curve)
        except NoImprovementError:
            continue
        if p.d < best_d:
            best, best_d = int(n), p.d
    assert optimal_stage_size(d, cs, smooth_curve) == best


def test_optimal_size_monotone_in_stage_cost(smooth_curve):
    table = sweep_grid(smooth_curve, np.geomspace(1, 1000, 12), np.geomspace(1, 1000, 15))
    n = table.n_opt.reshape(12, 15)
    assert np.all(np.diff(n, axis=1) >= 0)


def test_sweep_csv_round_trip(smooth_curve):
    table = sweep_grid(smooth_curve, np.geomspace(1, 1000, 5), np.geomspace(1, 100, 4))
    text = table.to_csv()
    assert text.splitlines()[0] == "d,cs,n_opt"
    back = SweepTable.from_csv(text)
    assert np.array_equal(back.d, table.d) and np.array_equal(back.n_opt, table.n_opt)


def test_ols_recovers_synthetic_rule():
    truth = StageRule(published_rule("logit").model, 0.9, 1.4, 0.41, -0.012)
    d, cs = np.meshgrid(np.geomspace(1, 1000, 20), np.geomspace(1, 1000, 10), indexing="ij")
    n = np.exp(truth.log_size(d.ravel(), cs.ravel()))
    rule = fit_stage_rule(SweepTable(d.ravel(), cs.ravel(), n), "logit")
    for k in ("alpha", "beta", "gamma", "delta"):
        assert getattr(rule, k) == pytest.approx(getattr(truth, k), abs=1e-10)
    assert rule.r_squared == pytest.approx(1.0)


def test_regression_excludes_null_rows():
    d, cs = np.meshgrid(np.geomspace(1, 1000, 20), np.geomspace(1, 1000, 10), indexing="ij")
    n = np.exp(1 + 1.3 * np.log(d.ravel()) + 0.4 * np.log(cs.ravel()))
    n[::7] = np.nan
    rule = fit_stage_rule(SweepTable(d.ravel(), cs.ravel(), n))
    assert rule.beta == pytest.approx(1.3) and rule.delta == pytest.approx(0, abs=1e-10)


def test_rank_deficiency():
    d = np.full(200, 10.0)
    cs = np.geomspace(1, 100, 200)
    with pytest.raises(RankDeficiencyError):
        fit_stage_rule(SweepTable(d, cs, cs * 3))
    with pytest.raises(ValueError):
        fit_stage_rule(SweepTable(d[:10], cs[:10], cs[:10]))


@pytest.mark.parametrize("v,expected", [
    (718.61, 718), (719.2, 720), (719.0, 720), (721.0, 720), (1.0, 2), (0.2, 2), (3.0, 4), (5.0, 4),
])
def test_round_to_even(v, expected):
    assert round_to_even(v) == expected


@given(v=st.floats(0, 1e7))
def test_round_to_even_properties(v):
    r = round_to_even(v)
    assert r % 2 == 0 and r >= 2
    assert r == 2 or abs(r - v) <= 1


def test_suggest_published_scenario_raw_value():
    rule = published_rule("cloglog")
    raw = math.exp(rule.log_size(0.380 * 54.05, 228.4))
    assert raw == pytest.approx(718.61, abs=0.01)
    assert suggest_stage_size(rule, 0.380, 54.05, 228.4) == round_to_even(raw)


@given(a=st.floats(0.01, 10), d=st.floats(0.1, 1e4), k=st.floats(0.1, 10), cs=st.floats(1, 1000))
def test_suggest_depends_on_product(a, d, k, cs):
    rule = published_rule("probit")
    raw1 = rule.log_size(a * d, cs)
    raw2 = rule.log_size((a * k) * (d / k), cs)
    assert raw1 == pytest.approx(raw2, rel=1e-9, abs=1e-9)


def test_suggest_validation():
    with pytest.raises(ValueError):
        suggest_stage_size(published_rule("logit"), -0.3, 10, 10)
    with pytest.raises(ValueError):
        suggest_stage_size(published_rule("logit"), 0.3, float("inf"), 10)


def test_stage_size_regressor():
    d, cs = np.meshgrid(np.geomspace(1, 1000, 20), np.geomspace(1, 1000, 10), indexing="ij")
    X = np.column_stack([d.ravel(), cs.ravel()])
    y = np.exp(published_rule("cloglog").log_size(X[:, 0], X[:, 1]))
    est = StageSizeRegressor().fit(X, y)
    assert np.allclose(est.predict(X), y)
    X3 = np.array([[54.05, 228.4, 0.380]])
    ref = StageSizeRegressor.from_rule(published_rule("cloglog"))
    assert ref.predict_even(X3)[0] == suggest_stage_size(published_rule("cloglog"), 0.380, 54.05, 228.4)
    assert est.get_params() == {"model": "cloglog"}


def test_rule_dict_round_trip():
    r = published_rule("probit")
    assert StageRule.from_dict(r.to_dict()) == r


@pytest.mark.parametrize("model", MODELS)
def test_inverse_square_covariance_reproduces_published_rules(model):
    """With covariance shrinking as D0**-2 the sweep lands on the published rule."""
    curve = fit_gain(model, draws=20000, seed=0, variance_exponent=2)
    table = sweep_grid(curve)
    assert table.n_null == 0
    rule = fit_stage_rule(table, model)
    ref = published_rule(model)
    assert rule.r_squared >= 0.99
    assert rule.beta == pytest.approx(ref.beta, abs=0.1)
    assert rule.gamma == pytest.approx(ref.gamma, abs=0.05)
    assert rule.delta < 0
    sub = table.d >= 10
    ratio = np.exp(rule.log_size(table.d[sub], table.cs[sub]) - ref.log_size(table.d[sub], table.cs[sub]))
    assert np.mean((ratio <= 1.5) & (ratio >= 1 / 1.5)) >= 0.9
