"""Acceptance criteria. Each test prints one PASS/FAIL line with its measured values."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from seqdesign import switching
from seqdesign.canonical import derive_canonical
from seqdesign.cli import main
from seqdesign.engine import BernoulliResponder, compare_policies, run_experiment
from seqdesign.estimation import StageData, _is_separated, fit_mle, log_likelihood, score
from seqdesign.gain import ACCEPTANCE_DRAWS, default_grid, fit_gain, simulate_gain
from seqdesign.glm import LinkModel, ModelParams, as_design, d_criterion, fisher_info
from seqdesign.stage import (
    CostModel,
    cut_point,
    fit_stage_rule,
    published_rule,
    suggest_stage_size,
    sweep_grid,
)

MODELS = ["logit", "probit", "cloglog"]
TABLE1 = {
    "logit": (-1.5434, 1.5434, 0.1760, 0.8240),
    "probit": (-1.1381, 1.1381, 0.1275, 0.8725),
    "cloglog": (-1.338, 0.9796, 0.2308, 0.9303),
}


@pytest.fixture
def report(capsys):
    def _report(label: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, f"{label}: {detail}"

    return _report


def test_ac1_canonical_designs(report):
    derive_canonical.cache_clear()
    t0 = time.perf_counter()
    designs = {m: derive_canonical(m) for m in MODELS}
    elapsed = time.perf_counter() - t0
    worst_z, worst_f = 0.0, 0.0
    for m, c in designs.items():
        z1, z2, f1, f2 = TABLE1[m]
        worst_z = max(worst_z, abs(c.z1_star - z1), abs(c.z2_star - z2))
        worst_f = max(worst_f, abs(c.model.cdf(c.z1_star) - f1), abs(c.model.cdf(c.z2_star) - f2))
    ok = worst_z <= 0.005 and worst_f <= 0.001 and elapsed < 5.0
    report("AC1 canonical designs", ok,
           f"max |dz|={worst_z:.2e} (tol 5e-3), max |dF|={worst_f:.2e} (tol 1e-3), {elapsed:.2f}s (< 5s)")


def test_ac2_d_star(report):
    d = derive_canonical("cloglog").d_star
    report("AC2 cloglog D*", abs(d - 0.8094) <= 0.001, f"D*={d:.6f} (0.8094 +/- 0.001)")


def test_ac3_gain_asymptote_and_interpolant(report):
    d_star = derive_canonical("cloglog").d_star
    t0 = time.perf_counter()
    far = simulate_gain("cloglog", 1e6, 100_000, seed=0)
    curve = fit_gain("cloglog", default_grid(), draws=ACCEPTANCE_DRAWS, seed=0)
    resid = max(abs(float(curve(s.d0)) - s.mean_gain) for s in curve.samples)
    elapsed = time.perf_counter() - t0
    ok = abs(far.mean_gain - 0.8094) <= 0.002 and resid <= 0.02
    report("AC3 gain asymptote and interpolant", ok,
           f"h(1e6)={far.mean_gain:.5f} (0.8094 +/- 0.002, D*={d_star:.5f}); "
           f"max residual={resid:.4f} (<= 0.02) on {len(curve.samples)} grid points; {elapsed:.1f}s")


def _rule_checks(model, variance_exponent=1.0):
    curve = fit_gain(model, seed=0, variance_exponent=variance_exponent)
    table = sweep_grid(curve)
    rule = fit_stage_rule(table, model)
    ref = published_rule(model)
    sub = table.d >= 10
    ratio = np.exp(rule.log_size(table.d[sub], table.cs[sub]) - ref.log_size(table.d[sub], table.cs[sub]))
    within = float(np.mean((ratio <= 1.5) & (ratio >= 1 / 1.5)))
    ok = (rule.r_squared >= 0.99 and 1.2 <= rule.beta <= 1.6 and 0.3 <= rule.gamma <= 0.5
          and rule.delta < 0 and within >= 0.9)
    detail = (f"alpha={rule.alpha:.3f} beta={rule.beta:.3f} gamma={rule.gamma:.3f} "
              f"delta={rule.delta:+.4f} R2={rule.r_squared:.4f} within1.5={within:.0%} "
              f"null rows={table.n_null}")
    return ok, detail


def test_ac4_stage_rule_regression(report, capsys):
    t0 = time.perf_counter()
    results = {m: _rule_checks(m) for m in MODELS}
    elapsed = time.perf_counter() - t0
    # supplementary: covariance shrinking as D0**-2 (not part of the criterion)
    with capsys.disabled():
        for m in MODELS:
            _, detail = _rule_checks(m, variance_exponent=2.0)
            print(f"\n  [info] {m} with variance exponent 2: {detail}")
    ok = all(v[0] for v in results.values())
    detail = "; ".join(f"{m}: {v[1]}" for m, v in results.items())
    report("AC4 stage-rule regression", ok,
           f"{detail}; targets R2>=0.99, beta in [1.2,1.6], gamma in [0.3,0.5], delta<0, "
           f">=90% within x1.5; {elapsed:.1f}s")


def test_ac5_published_point_check(report):
    rule = published_rule("cloglog")
    n = suggest_stage_size(rule, 0.380, 54.05, 228.4)
    raw = math.exp(rule.log_size(0.380 * 54.05, 228.4))
    report("AC5 published stage size", n == 720, f"suggest={n} (raw {raw:.3f}); expected 720")


def test_ac6_switching_simulation(report):
    t0 = time.perf_counter()
    ce, ah = switching.scenario_configs()
    cmp = compare_policies(ce, ah, switching.TRUE_PARAMS, switching.initial_estimate(),
                           replications=100, seed=7, names=("cost_efficient", "adhoc"))
    elapsed = time.perf_counter() - t0
    c_ce, c_ah = cmp.a.median_total_cost, cmp.b.median_total_cost
    saving = (c_ah - c_ce) / c_ah
    _, d_med, c_med = cmp.a.median_path[-1]
    init = switching.initial_estimate()
    theory = (switching.initial_cost() + switching.STAGE_COST
              + 2 * abs(switching.TRUE_PARAMS.a) * (d_med - init.d) / derive_canonical("cloglog").d_star)
    rel = abs(c_med - theory) / theory
    ok = c_ce < c_ah and 0.03 <= saving <= 0.15 and rel <= 0.25
    report("AC6 switching simulation", ok,
           f"median cost cost-efficient={c_ce:.0f} < adhoc={c_ah:.0f}; saving={saving:.1%} (3-15%); "
           f"median path end C={c_med:.0f} vs line {theory:.0f} ({rel:.1%}, <= 25%); "
           f"failures {len(cmp.a.failures)}+{len(cmp.b.failures)}; {elapsed:.1f}s")


def _grid_argmax(model, data, center, half_width, step):
    a = np.arange(center[0] - half_width, center[0] + half_width + step / 2, step)
    b = np.arange(center[1] - half_width, center[1] + half_width + step / 2, step)
    A, B = np.meshgrid(a, b, indexing="ij")
    x = np.array([d.x for d in data])
    n = np.array([d.n for d in data])
    s = np.array([d.s for d in data])
    z = A[..., None] * x + B[..., None]
    m = LinkModel.from_name(model)
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = np.sum(np.where(s > 0, s * np.log(m.cdf(z)), 0.0)
                    + np.where(n - s > 0, (n - s) * np.log1p(-m.cdf(z)), 0.0), axis=-1)
    ll = np.where(np.isfinite(ll), ll, -np.inf)
    i, j = np.unravel_index(np.argmax(ll), ll.shape)
    return np.array([A[i, j], B[i, j]])


def test_ac7_mle_oracle(report):
    rng = np.random.default_rng(2024)
    step = 1e-3
    worst, fitted = 0.0, 0
    while fitted < 20:
        model = MODELS[fitted % 3]
        k = int(rng.integers(2, 5))
        x = np.sort(rng.uniform(-2, 2, k))
        n = rng.integers(5, 51, k)
        p = LinkModel.from_name(model).cdf(1.0 * x + 0.2)
        s = rng.binomial(n, p)
        if _is_separated(x, n.astype(float), s.astype(float)):
            continue
        data = [StageData(float(xi), int(ni), int(si)) for xi, ni, si in zip(x, n, s)]
        est = fit_mle(model, data)
        # coarse-to-fine search of the explicit log-likelihood
        c = _grid_argmax(model, data, (0.0, 0.0), 12.0, 0.05)
        c = _grid_argmax(model, data, c, 0.2, 0.005)
        c = _grid_argmax(model, data, c, 0.02, step)
        worst = max(worst, abs(est.a - c[0]), abs(est.b - c[1]))
        fitted += 1

    worst_score = 0.0
    for i in range(100):
        model = MODELS[i % 3]
        data = [StageData(float(xi), 30, int(si))
                for xi, si in zip(rng.uniform(-3, 3, 4), rng.integers(0, 31, 4))]
        prm = ModelParams(float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)))
        h = 1e-6
        fd = np.array([
            (log_likelihood(model, ModelParams(prm.a + h, prm.b), data)
             - log_likelihood(model, ModelParams(prm.a - h, prm.b), data)) / (2 * h),
            (log_likelihood(model, ModelParams(prm.a, prm.b + h), data)
             - log_likelihood(model, ModelParams(prm.a, prm.b - h), data)) / (2 * h),
        ])
        an = score(model, prm, data)
        worst_score = max(worst_score, np.linalg.norm(an - fd) / max(np.linalg.norm(fd), 1e-12))
    ok = worst <= 2 * step and worst_score <= 1e-4
    report("AC7 MLE oracle", ok,
           f"max |MLE - grid| = {worst:.2e} (<= {2 * step:.0e}) over 20 datasets; "
           f"max score rel. error = {worst_score:.2e} (<= 1e-4) over 100 points")


def test_ac8_invariants(report, tmp_path, capsys):
    rng = np.random.default_rng(8)
    failures = []
    z = np.sort(rng.uniform(-30, 30, 2000))
    for m in LinkModel:
        if np.any(np.diff(m.cdf(z)) < 0):
            failures.append(f"F not monotone for {m}")
    for _ in range(200):
        m = MODELS[int(rng.integers(3))]
        prm = ModelParams(float(rng.uniform(0.1, 3)), float(rng.uniform(-2, 2)))
        d1 = as_design(zip(rng.uniform(-4, 4, 3), rng.integers(0, 100, 3)))
        d2 = as_design(zip(rng.uniform(-4, 4, 2), rng.integers(0, 100, 2)))
        j1, j2, j12 = (fisher_info(m, prm, d) for d in (d1, d2, d1 + d2))
        if not np.allclose((j1 + j2).as_array(), j12.as_array(), rtol=1e-10, atol=1e-12):
            failures.append("information not additive")
        if np.linalg.eigvalsh(j12.as_array()).min() < -1e-9 * max(1.0, j12.j11 + j12.j22):
            failures.append("information not PSD")
        d_criterion(j12)

    curve = fit_gain("cloglog", draws=5000, seed=1)
    grid = np.geomspace(0.5, 2e5, 400)
    h = curve(grid)
    if np.any(np.diff(h) < 0) or np.any(h <= 0) or np.any(h >= curve.d_star):
        failures.append("gain not monotone or out of (0, D*)")
    for _ in range(200):
        d = float(np.exp(rng.uniform(0, np.log(1e4))))
        c0, cs, n_k = float(rng.uniform(0, 1e4)), float(rng.uniform(1, 1e3)), 2 * int(rng.integers(1, 5000))
        h0 = float(curve(d))
        dk = d + n_k * h0 / 2
        hk = float(curve(dk))
        if hk <= h0 + 1e-9:
            continue
        p = cut_point(d, c0, n_k, cs, curve)
        one = c0 + cs + 2 * (p.d - d) / h0
        two = c0 + 2 * cs + n_k + 2 * (p.d - dk) / hk
        if not (math.isclose(p.c, one, rel_tol=1e-9) and math.isclose(p.c, two, rel_tol=1e-9)):
            failures.append("cut point off the cost lines")
            break

    ce, _ = switching.scenario_configs()
    res = run_experiment(ce, BernoulliResponder("cloglog", switching.TRUE_PARAMS, 3),
                         switching.initial_estimate())
    total = switching.initial_cost() + sum(switching.STAGE_COST + r.n_k for r in res.records)
    if not math.isclose(res.final_c, total, rel_tol=1e-12):
        failures.append("cost accounting identity")

    outs = []
    for d in ("a", "b"):
        code = main(["simulate", "--replications", "2", "--seed", "4", "--out-dir", str(tmp_path / d)])
        capsys.readouterr()
        outs.append(code)
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("path_000.csv", "path_001.csv", "median_path.csv", "manifest.json"))
    if outs != [0, 0] or not same:
        failures.append("CLI output not byte-deterministic")

    report("AC8 invariant suites", not failures,
           "monotone F, PSD/additive information, cut-point identity, gain monotone and bounded, "
           "cost identity, CLI determinism" + (f"; failed: {sorted(set(failures))}" if failures else " all hold"))
