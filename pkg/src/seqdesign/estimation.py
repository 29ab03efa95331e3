"""Maximum-likelihood estimation of (a, b) from grouped binary data."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .exceptions import (
    DegenerateDesignError,
    InitialSearchFailed,
    SeparationError,
)
from .glm import FisherInfo, LinkModel, ModelParams, d_criterion, fisher_info_arrays

logger = logging.getLogger(__name__)

# |slope| bound in standardised covariate units beyond which the fit is
# declared divergent (separation).
DIVERGENCE_BOUND = 1e6


@dataclass(frozen=True)
class StageData:
    """``s`` successes out of ``n`` trials at covariate ``x``.

    ``s`` is normally an integer; fractional counts are accepted so that an
    initial estimate can be carried as pseudo-data (see
    :func:`pseudo_data_from_estimate`).
    """

    x: float
    n: float
    s: float

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError(f"trial count must be positive, got {self.n}")
        if not 0 <= self.s <= self.n:
            raise ValueError(f"successes must lie in [0, n]; got s={self.s}, n={self.n}")


@dataclass(frozen=True)
class Estimate:
    params: ModelParams
    info: FisherInfo
    d: float
    converged: bool = True
    n_iter: int = 0
    loglik: float = float("nan")

    @property
    def a(self) -> float:
        return self.params.a

    @property
    def b(self) -> float:
        return self.params.b


def _as_arrays(data: Sequence[StageData]):
    x = np.array([d.x for d in data], dtype=float)
    n = np.array([d.n for d in data], dtype=float)
    s = np.array([d.s for d in data], dtype=float)
    return x, n, s


def _loglik_z(model: LinkModel, z, n, s) -> float:
    fail = n - s
    # 0 * log(0) is taken as 0: cells with s in {0, n} are handled exactly.
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(s > 0, s * model.log_cdf(z), 0.0)
        t2 = np.where(fail > 0, fail * model.log_sf(z), 0.0)
    return float(np.sum(t1 + t2))


def log_likelihood(model, params: ModelParams, data: Sequence[StageData]) -> float:
    """Grouped binomial log-likelihood (without the combinatorial constant)."""
    model = LinkModel.from_name(model)
    x, n, s = _as_arrays(data)
    return _loglik_z(model, params.z(x), n, s)


def score(model, params: ModelParams, data: Sequence[StageData]) -> np.ndarray:
    """Analytic gradient of :func:`log_likelihood` with respect to (a, b)."""
    model = LinkModel.from_name(model)
    x, n, s = _as_arrays(data)
    z = params.z(x)
    r = (s - n * model.cdf(z)) * model.score_weight(z)
    return np.array([np.sum(r * x), np.sum(r)])


def _is_separated(x, n, s) -> bool:
    """True when the groups are (quasi-)completely separated along x.

    Pooling by distinct x, the data are separated when the success fractions
    read 0, ..., 0, [one mixed group], 1, ..., 1 in either direction.
    """
    ux, inv = np.unique(x, return_inverse=True)
    nn = np.bincount(inv, weights=n)
    ss = np.bincount(inv, weights=s)
    for succ in (ss, nn - ss):
        pos = np.flatnonzero(succ > 0)
        notall = np.flatnonzero(succ < nn)
        if pos.size == 0 or notall.size == 0:
            return True
        if notall[-1] <= pos[0]:
            return True
    return False


def fit_mle(model, data: Sequence[StageData], start: ModelParams | None = None,
            max_iter: int = 200, tol: float = 1e-9) -> Estimate:
    """Fisher scoring with step-halving on an internally standardised covariate.

    Raises :class:`DegenerateDesignError` when all covariates coincide and
    :class:`SeparationError` when no finite maximiser exists.
    """
    model = LinkModel.from_name(model)
    data = list(data)
    if not data:
        raise DegenerateDesignError("no data")
    x, n, s = _as_arrays(data)
    if np.unique(x).size < 2:
        raise DegenerateDesignError("all covariate values are identical")
    if _is_separated(x, n, s):
        raise SeparationError("data are perfectly separated; no finite MLE", data=data)

    center = float(np.average(x, weights=n))
    scale = float(x.max() - x.min())
    u = (x - center) / scale

    if start is None:
        pbar = min(max(s.sum() / n.sum(), 0.01), 0.99)
        theta = np.array([0.1, float(model.ppf(pbar))])
    else:
        theta = np.array([start.a * scale, start.b + start.a * center])

    def parts(th):
        z = th[0] * u + th[1]
        r = (s - n * model.cdf(z)) * model.score_weight(z)
        w = n * model.weight(z)
        grad = np.array([np.sum(r * u), np.sum(r)])
        info = np.array([[np.sum(w * u * u), np.sum(w * u)], [np.sum(w * u), np.sum(w)]])
        return grad, info

    ll = _loglik_z(model, theta[0] * u + theta[1], n, s)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad, info = parts(theta)
        if np.max(np.abs(grad)) < 1e-10:
            converged = True
            break
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise SeparationError("information matrix became singular during scoring", data=data)
        t = 1.0
        for _ in range(25):
            cand = theta + t * step
            ll_cand = _loglik_z(model, cand[0] * u + cand[1], n, s)
            if np.isfinite(ll_cand) and ll_cand >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        else:
            # no ascent along the scoring direction: we sit at the maximum
            converged = True
            break
        delta = cand - theta
        theta, ll = cand, ll_cand
        if not np.all(np.isfinite(theta)) or abs(theta[0]) > DIVERGENCE_BOUND:
            raise SeparationError("slope diverged; data are effectively separated", data=data)
        if np.max(np.abs(delta)) < tol * max(1.0, np.max(np.abs(theta))):
            converged = True
            # one more scoring step polishes the gradient for large samples
            grad, info = parts(theta)
            try:
                polish = theta + np.linalg.solve(info, grad)
                ll_pol = _loglik_z(model, polish[0] * u + polish[1], n, s)
                if ll_pol >= ll:
                    theta, ll = polish, ll_pol
            except np.linalg.LinAlgError:
                pass
            break

    if not converged:
        logger.warning("Fisher scoring hit max_iter=%d without converging", max_iter)

    params = ModelParams(float(theta[0] / scale), float(theta[1] - theta[0] * center / scale))
    info = fisher_info_arrays(model, params, x, n)
    return Estimate(params, info, d_criterion(info), converged, it, ll)


def pseudo_data_from_estimate(model, estimate: Estimate) -> list[StageData]:
    """Two-point pseudo-data reproducing ``estimate`` exactly.

    Places the information of ``estimate`` at its canonical design points with
    fractional success counts equal to the fitted probabilities, so that the
    MLE of the pseudo-data is ``estimate.params`` and its D equals
    ``estimate.d``. Used when only a summary of the initial stage is known.
    """
    from .canonical import derive_canonical, optimal_covariates

    model = LinkModel.from_name(model)
    canon = derive_canonical(model)
    a = estimate.params.a
    pairs = estimate.d * abs(a) / canon.d_star
    x1, x2 = optimal_covariates(canon, estimate.params)
    out = []
    for x in (x1, x2):
        p = float(model.cdf(estimate.params.z(x)))
        out.append(StageData(x, pairs, pairs * p))
    return out


class Responder(Protocol):
    def respond(self, x: float, n: int) -> int:
        ...


def initial_search(model, responder: Responder, x_low: float, x_high: float, n_probe: int,
                   stage_cost: float = 0.0, max_depth: int = 30):
    """Bisection search for a usable initial estimate.

    Each probe puts ``n_probe`` trials at the bracket midpoint and moves the
    bracket left when the observed success fraction exceeds 1/2. Stops once
    two distinct probes show mixed outcomes (0 < s < n) or after
    ``max_depth`` probes, then fits the MLE on all probes.

    Returns ``(estimate, cost, data)`` with cost = probes * (stage_cost + n_probe).
    """
    model = LinkModel.from_name(model)
    if not x_low < x_high:
        raise ValueError(f"need x_low < x_high, got [{x_low}, {x_high}]")
    if n_probe < 4 or n_probe % 2:
        raise ValueError(f"n_probe must be an even integer >= 4, got {n_probe}")

    lo, hi = float(x_low), float(x_high)
    data: list[StageData] = []
    cost = 0.0
    mixed: set[float] = set()
    for _ in range(max_depth):
        mid = 0.5 * (lo + hi)
        succ = int(responder.respond(mid, n_probe))
        if not 0 <= succ <= n_probe:
            raise ValueError(f"responder returned {succ} successes for {n_probe} trials")
        data.append(StageData(mid, n_probe, succ))
        cost += stage_cost + n_probe
        if 0 < succ < n_probe:
            mixed.add(mid)
        if len(mixed) >= 2:
            break
        if succ / n_probe > 0.5:
            hi = mid
        else:
            lo = mid
    try:
        est = fit_mle(model, data)
    except (SeparationError, DegenerateDesignError) as exc:
        raise InitialSearchFailed(
            f"no identifiable dataset after {len(data)} probes: {exc}") from exc
    return est, cost, data


class BinaryGLM(ClassifierMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`fit_mle`.

    ``X`` is a single covariate column. ``y`` holds 0/1 responses, or
    success proportions when ``sample_weight`` carries the trial counts.

    Attributes
    ----------
    coef_ : float
        Fitted slope ``a``.
    intercept_ : float
        Fitted intercept ``b``.
    estimate_ : Estimate
    """

    def __init__(self, model="cloglog", max_iter=200, tol=1e-9):
        self.model = model
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y, sample_weight=None):
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != 1:
            raise ValueError(f"expected a single covariate column, got {X.shape[1]}")
        y = np.asarray(y, dtype=float).ravel()
        check_consistent_length(X, y)
        w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        check_consistent_length(y, w)
        if np.any((y < 0) | (y > 1)):
            raise ValueError("y must lie in [0, 1]")
        data = [StageData(float(xi), float(wi), float(yi * wi))
                for xi, yi, wi in zip(X[:, 0], y, w) if wi > 0]
        self.estimate_ = fit_mle(self.model, data, max_iter=self.max_iter, tol=self.tol)
        self.coef_ = self.estimate_.params.a
        self.intercept_ = self.estimate_.params.b
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "estimate_")
        X = check_array(X)
        return self.estimate_.params.z(X[:, 0])

    def predict_proba(self, X):
        p = np.atleast_1d(LinkModel.from_name(self.model).cdf(self.decision_function(X)))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(int)


def standard_errors(estimate: Estimate) -> np.ndarray:
    """Asymptotic standard errors of (a, b) from the inverse information."""
    try:
        cov = estimate.info.inverse()
    except np.linalg.LinAlgError:
        return np.array([math.inf, math.inf])
    return np.sqrt(np.diag(cov))


__all__ = [
    "StageData", "Estimate", "fit_mle", "log_likelihood", "score", "initial_search",
    "pseudo_data_from_estimate", "BinaryGLM", "standard_errors", "Responder",
]
