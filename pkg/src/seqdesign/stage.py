"""Cost-efficient stage sizes from two-stage path comparison in the (D, C) plane.

A benchmark path finishes the experiment with a single further stage; a
candidate path first spends ``n_k`` measurements and then finishes. The
candidate whose path cuts the benchmark earliest (smallest D) wins. Sweeping
this over a grid of (D, C_S) and regressing log n on log D and log C_S gives
a closed-form rule.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .exceptions import AllCandidatesDegenerateError, NoImprovementError, RankDeficiencyError
from .gain import GainInterpolant
from .glm import LinkModel

_IMPROVEMENT_EPS = 1e-12

# (end, step) segments; the last segment uses step 10000 up to 200000.
_CANDIDATE_SEGMENTS = ((20, 2), (100, 4), (5000, 50), (20000, 100), (100000, 1000), (200000, 10000))


def default_candidates() -> np.ndarray:
    """The 368 even candidate stage sizes 2, 4, 6, ..., 180000, 190000, 200000."""
    out: list[int] = []
    prev = 0
    for end, step in _CANDIDATE_SEGMENTS:
        out.extend(range(prev + step, end + 1, step))
        prev = end
    return np.array(out, dtype=np.int64)


DEFAULT_D_POINTS = 104
DEFAULT_CS_POINTS = 35


def default_d_grid() -> np.ndarray:
    return np.geomspace(1.0, 1000.0, DEFAULT_D_POINTS)


def default_cs_grid() -> np.ndarray:
    return np.geomspace(1.0, 1000.0, DEFAULT_CS_POINTS)


@dataclass(frozen=True)
class CostModel:
    """Total cost C = n + K * stage_cost, in units of one measurement."""

    stage_cost: float
    unit_cost: float = 1.0

    def __post_init__(self):
        if not self.stage_cost > 0:
            raise ValueError(f"stage_cost must be positive, got {self.stage_cost}")

    @classmethod
    def from_seconds(cls, stage_seconds: float, unit_seconds: float) -> "CostModel":
        return cls(stage_seconds / unit_seconds)

    def total(self, n: float, stages: int) -> float:
        return n * self.unit_cost + stages * self.stage_cost


@dataclass(frozen=True)
class PathState:
    d: float
    c: float


@dataclass(frozen=True)
class StageRule:
    """log n = alpha + beta*log D + gamma*log C_S + delta*log D*log C_S."""

    model: LinkModel
    alpha: float
    beta: float
    gamma: float
    delta: float
    r_squared: float = float("nan")

    def log_size(self, ad, stage_cost):
        ld = np.log(ad)
        lc = np.log(stage_cost)
        return self.alpha + self.beta * ld + self.gamma * lc + self.delta * ld * lc

    def to_dict(self) -> dict:
        return {"model": self.model.value, "alpha": self.alpha, "beta": self.beta,
                "gamma": self.gamma, "delta": self.delta, "r_squared": self.r_squared}

    @classmethod
    def from_dict(cls, d: dict) -> "StageRule":
        return cls(LinkModel.from_name(d["model"]), float(d["alpha"]), float(d["beta"]),
                   float(d["gamma"]), float(d["delta"]), float(d.get("r_squared", "nan")))


# Published coefficient sets, kept for reproducing the switching-measurement
# example and for comparison with re-derived rules.
PUBLISHED_RULES = {
    LinkModel.LOGIT: StageRule(LinkModel.LOGIT, 1.01515, 1.43396, 0.41042, -0.01388, 0.9992),
    LinkModel.PROBIT: StageRule(LinkModel.PROBIT, 0.12859, 1.41891, 0.40324, -0.00949, 0.9990),
    LinkModel.CLOGLOG: StageRule(LinkModel.CLOGLOG, 0.48044, 1.34593, 0.39711, -0.00778, 0.9934),
}


def published_rule(model) -> StageRule:
    return PUBLISHED_RULES[LinkModel.from_name(model)]


def _cut_d(d_prev: float, stage_cost, n_k, interp: GainInterpolant, h_prev=None):
    """Cut-point D for arrays of candidates; NaN where there is no improvement."""
    n_k = np.asarray(n_k, dtype=float)
    h0 = interp(d_prev) if h_prev is None else h_prev
    d_k = d_prev + n_k * h0 / 2.0
    hk = np.atleast_1d(interp(d_k))
    gap = hk - h0
    ok = gap > _IMPROVEMENT_EPS
    safe = np.where(ok, gap, 1.0)
    stage_cost = np.asarray(stage_cost, dtype=float)[..., None] if np.ndim(stage_cost) else stage_cost
    d_cut = d_k + stage_cost * h0 * hk / (2.0 * safe)
    return np.where(ok, d_cut, np.nan), hk, ok


def cut_point(d_prev: float, c_prev: float, n_k: int, stage_cost: float,
              interp: GainInterpolant) -> PathState:
    """Where the two-stage candidate path meets the one-stage benchmark path."""
    if n_k < 2 or int(n_k) != n_k or n_k % 2:
        raise ValueError(f"n_k must be an even integer >= 2, got {n_k}")
    if not stage_cost > 0:
        raise ValueError(f"stage_cost must be positive, got {stage_cost}")
    h0 = float(interp(d_prev))
    d_k = d_prev + n_k * h0 / 2.0
    hk = float(interp(d_k))
    if hk <= h0 + _IMPROVEMENT_EPS:
        raise NoImprovementError(
            f"h(D_k)={hk:.6g} does not exceed h(D_prev)={h0:.6g}; no cut point")
    gap = hk - h0
    d = d_k + stage_cost * h0 * hk / (2.0 * gap)
    c = c_prev + n_k + (1.0 + hk / gap) * stage_cost
    return PathState(d, c)


def optimal_stage_size(d_prev: float, stage_cost: float, interp: GainInterpolant,
                       candidates: Sequence[int] | None = None) -> int:
    """Candidate with the earliest cut point; ties go to the smaller size."""
    cand = default_candidates() if candidates is None else np.asarray(candidates)
    if cand.size == 0:
        raise ValueError("candidate list is empty")
    d_cut, _, ok = _cut_d(d_prev, stage_cost, cand, interp)
    if not ok.any():
        raise AllCandidatesDegenerateError(
            f"no candidate improves on the benchmark at D={d_prev:g}, C_S={stage_cost:g}")
    return int(cand[np.nanargmin(d_cut)])


@dataclass
class SweepTable:
    d: np.ndarray
    cs: np.ndarray
    n_opt: np.ndarray  # float, NaN marks rows where every candidate was degenerate

    def __len__(self) -> int:
        return self.d.size

    @property
    def n_null(self) -> int:
        return int(np.isnan(self.n_opt).sum())

    def valid(self) -> np.ndarray:
        return ~np.isnan(self.n_opt)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d", "cs", "n_opt"])
        for d, cs, n in zip(self.d, self.cs, self.n_opt):
            w.writerow([repr(float(d)), repr(float(cs)), "" if np.isnan(n) else int(n)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SweepTable":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(np.array([float(r["d"]) for r in rows]),
                   np.array([float(r["cs"]) for r in rows]),
                   np.array([float(r["n_opt"]) if r["n_opt"] else np.nan for r in rows]))


def sweep_grid(interp: GainInterpolant, d_grid=None, cs_grid=None, candidates=None) -> SweepTable:
    """Optimal stage size at every (D, C_S) pair of the cross product."""
    d_grid = default_d_grid() if d_grid is None else np.asarray(d_grid, dtype=float)
    cs_grid = default_cs_grid() if cs_grid is None else np.asarray(cs_grid, dtype=float)
    cand = default_candidates() if candidates is None else np.asarray(candidates)
    if d_grid.size == 0 or cs_grid.size == 0 or cand.size == 0:
        raise ValueError("grids and candidate list must be non-empty")
    rows_d, rows_cs, rows_n = [], [], []
    for d in d_grid:
        # (n_cs, n_cand) cut points; h(D_k) is shared across stage costs
        d_cut, _, ok = _cut_d(float(d), cs_grid, cand, interp)
        for j, cs in enumerate(cs_grid):
            rows_d.append(d)
            rows_cs.append(cs)
            rows_n.append(float(cand[np.nanargmin(d_cut[j])]) if ok.any() else np.nan)
    return SweepTable(np.array(rows_d), np.array(rows_cs), np.array(rows_n))


def _design(d, cs) -> np.ndarray:
    ld = np.log(d)
    lc = np.log(cs)
    return np.column_stack([np.ones_like(ld), ld, lc, ld * lc])


def fit_stage_rule(table: SweepTable, model=None, min_rows: int = 100) -> StageRule:
    """OLS of log n_opt on (1, log D, log C_S, log D * log C_S)."""
    mask = table.valid() & (table.d >= 1.0)
    if mask.sum() < min_rows:
        raise ValueError(f"need at least {min_rows} non-null rows, got {int(mask.sum())}")
    X = _design(table.d[mask], table.cs[mask])
    y = np.log(table.n_opt[mask])
    coef, r2 = _ols(X, y)
    model = LinkModel.CLOGLOG if model is None else LinkModel.from_name(model)
    return StageRule(model, *map(float, coef), r_squared=r2)


def _ols(X, y):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficiencyError("stage-rule design matrix is singular")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else 1.0
    return coef, r2


def round_to_even(value: float) -> int:
    """Nearest even integer (ties on value/2 go to even), at least 2."""
    if not math.isfinite(value):
        raise ValueError(f"cannot round {value!r}")
    return max(2, 2 * int(round(value / 2.0)))


def suggest_stage_size(rule: StageRule, a_hat: float, d_prev: float, stage_cost: float) -> int:
    """Stage size from the rule with information rescaled by the slope estimate."""
    for name, v in (("a_hat", a_hat), ("d_prev", d_prev), ("stage_cost", stage_cost)):
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{name} must be positive and finite, got {v}")
    return round_to_even(math.exp(rule.log_size(a_hat * d_prev, stage_cost)))


class StageSizeRegressor(RegressorMixin, BaseEstimator):
    """Estimator form of the stage rule.

    ``X`` has columns (D, C_S) and optionally a third column with the slope
    estimate (default 1); ``y`` is the optimal stage size.
    ``predict`` returns raw (unrounded) sizes; use ``predict_even`` for
    sizes usable in an experiment.
    """

    def __init__(self, model="cloglog"):
        self.model = model

    def fit(self, X, y):
        X = check_array(X)
        y = np.asarray(y, dtype=float).ravel()
        check_consistent_length(X, y)
        d, cs = self._scaled(X)
        coef, r2 = _ols(_design(d, cs), np.log(y))
        self.rule_ = StageRule(LinkModel.from_name(self.model), *map(float, coef), r_squared=r2)
        self.coef_ = coef
        return self

    @staticmethod
    def _scaled(X):
        d = X[:, 0] * (X[:, 2] if X.shape[1] > 2 else 1.0)
        return d, X[:, 1]

    def predict(self, X):
        check_is_fitted(self, "rule_")
        X = check_array(X)
        d, cs = self._scaled(X)
        return np.exp(self.rule_.log_size(d, cs))

    def predict_even(self, X):
        return np.array([round_to_even(v) for v in self.predict(X)], dtype=np.int64)

    @classmethod
    def from_rule(cls, rule: StageRule) -> "StageSizeRegressor":
        est = cls(model=rule.model.value)
        est.rule_ = rule
        est.coef_ = np.array([rule.alpha, rule.beta, rule.gamma, rule.delta])
        return est
