"""Sequential D-optimal experiments with stage costs.

Each stage places half of its measurements at each estimated D-optimal
covariate, refits the MLE on all data collected so far and records the
(D, C) path. Stage sizes come from a sizing policy.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

import numpy as np

from .canonical import derive_canonical, optimal_covariates
from .estimation import (
    Estimate,
    Responder,
    StageData,
    fit_mle,
    initial_search,
    pseudo_data_from_estimate,
)
from .exceptions import InvalidPolicyError, ProtocolError, SeparationError, SeqDesignError
from .glm import LinkModel, ModelParams
from .stage import CostModel, StageRule, round_to_even, suggest_stage_size

logger = logging.getLogger(__name__)


# -- sizing policies ----------------------------------------------------------

@dataclass(frozen=True)
class CostEfficient:
    """Stage size from a fitted (or published) stage rule."""

    rule: StageRule | None

    def size(self, stage_index: int, estimate: Estimate, cost: CostModel) -> int:
        if self.rule is None:
            raise InvalidPolicyError("cost-efficient policy needs a stage rule")
        # the rule is stated for positive slopes; a decreasing fit uses |a|
        return suggest_stage_size(self.rule, abs(estimate.a), estimate.d, cost.stage_cost)


@dataclass(frozen=True)
class AdhocGrowth:
    """start * factor**k, rounded to the nearest even integer."""

    start: float = 100.0
    factor: float = 1.1

    def __post_init__(self):
        if not self.factor > 1:
            raise ValueError(f"growth factor must exceed 1, got {self.factor}")

    def size(self, stage_index: int, estimate: Estimate, cost: CostModel) -> int:
        return round_to_even(self.start * self.factor ** stage_index)


@dataclass(frozen=True)
class Fixed:
    n: int

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ValueError(f"fixed stage size must be even and >= 2, got {self.n}")

    def size(self, stage_index: int, estimate: Estimate, cost: CostModel) -> int:
        return self.n


def policy_from_spec(spec: dict):
    kind = spec.get("kind")
    if kind == "cost_efficient":
        rule = spec.get("rule")
        return CostEfficient(StageRule.from_dict(rule) if isinstance(rule, dict) else rule)
    if kind == "adhoc_growth":
        return AdhocGrowth(float(spec.get("start", 100)), float(spec.get("factor", 1.1)))
    if kind == "fixed":
        return Fixed(int(spec["n"]))
    raise InvalidPolicyError(f"unknown sizing policy {kind!r}")


# -- configuration and records --------------------------------------------------

@dataclass(frozen=True)
class InitialSearchConfig:
    x_low: float
    x_high: float
    n_probe: int = 20
    max_depth: int = 30


@dataclass(frozen=True)
class ExperimentConfig:
    model: LinkModel
    cost: CostModel
    policy: object
    target_d: float | None = None
    budget: float | None = None
    max_stages: int | None = None
    seed: int | None = None
    initial_cost: float = 0.0
    initial_search: InitialSearchConfig | None = None
    cap_at_target: bool = True

    def __post_init__(self):
        object.__setattr__(self, "model", LinkModel.from_name(self.model))
        if self.target_d is None and self.budget is None and self.max_stages is None:
            raise ValueError("at least one stopping condition (target_d, budget, max_stages) is required")


@dataclass(frozen=True)
class StageRecord:
    stage: int
    n_k: int
    x1: float
    x2: float
    s1: int
    s2: int
    a_hat: float
    b_hat: float
    d: float
    c: float
    stop_reason: str = ""


PATH_FIELDS = ("stage", "n_k", "x1", "x2", "s1", "s2", "a_hat", "b_hat", "D", "C", "stop_reason")

TARGET_MET_AT_START = "target met at start"
TARGET_REACHED = "target reached"
BUDGET_EXHAUSTED = "budget exhausted"
MAX_STAGES = "max stages reached"


@dataclass
class ExperimentResult:
    records: list[StageRecord]
    stop_reason: str
    initial: Estimate
    initial_cost: float
    data: list[StageData] = field(default_factory=list, repr=False)

    @property
    def final_d(self) -> float:
        return self.records[-1].d if self.records else self.initial.d

    @property
    def final_c(self) -> float:
        return self.records[-1].c if self.records else self.initial_cost

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


# -- responders -------------------------------------------------------------------

class BernoulliResponder:
    """Binomial counts with success probability F(a*x + b)."""

    def __init__(self, model, true_params: ModelParams, seed=None):
        self.model = LinkModel.from_name(model)
        self.true_params = true_params
        self.rng = np.random.default_rng(seed)

    def respond(self, x: float, n: int) -> int:
        p = float(self.model.cdf(self.true_params.z(x)))
        return int(self.rng.binomial(int(n), min(max(p, 0.0), 1.0)))


def bernoulli_responder(model, true_params: ModelParams, seed=None) -> BernoulliResponder:
    return BernoulliResponder(model, true_params, seed)


class LineProtocolResponder:
    """Talks to an external instrument over a byte stream.

    Sends ``MEASURE <x> <n>\\n`` and expects ``RESULT <successes>\\n``.
    """

    def __init__(self, reader: IO[bytes], writer: IO[bytes]):
        self.reader = reader
        self.writer = writer

    def respond(self, x: float, n: int) -> int:
        self.writer.write(f"MEASURE {x!r} {int(n)}\n".encode("ascii"))
        self.writer.flush()
        line = self.reader.readline()
        if not line:
            raise ProtocolError("instrument closed the stream")
        try:
            parts = line.decode("ascii").split()
        except UnicodeDecodeError:
            raise ProtocolError(f"non-ascii reply {line!r}") from None
        if len(parts) != 2 or parts[0] != "RESULT" or not parts[1].isdigit():
            raise ProtocolError(f"malformed reply {line!r}")
        succ = int(parts[1])
        if succ > n:
            raise ProtocolError(f"reply {succ} exceeds {n} trials")
        return succ


def serve_line_protocol(responder: Responder, reader: IO[bytes], writer: IO[bytes]) -> int:
    """Answer MEASURE requests with ``responder`` until EOF; returns requests served."""
    served = 0
    for raw in iter(reader.readline, b""):
        parts = raw.decode("ascii").split()
        if len(parts) != 3 or parts[0] != "MEASURE":
            raise ProtocolError(f"malformed request {raw!r}")
        succ = responder.respond(float(parts[1]), int(parts[2]))
        writer.write(f"RESULT {succ}\n".encode("ascii"))
        writer.flush()
        served += 1
    return served


# -- the experiment loop ------------------------------------------------------------

def _finish_size(target: float, d: float, a_hat: float, d_star: float) -> int:
    # measurements expected to lift D from d to target at the estimated optimum
    need = 2.0 * (target - d) * abs(a_hat) / d_star
    return max(2, 2 * math.ceil(need / 2.0))


def run_experiment(config: ExperimentConfig, responder: Responder,
                   initial: Estimate | None = None,
                   initial_data: Sequence[StageData] | None = None) -> ExperimentResult:
    """Run stages until the target, budget or stage limit stops the experiment.

    Without ``initial``, the bisection search in ``config.initial_search``
    supplies the starting estimate and data. With ``initial`` but no
    ``initial_data``, the estimate enters the likelihood as two-point
    pseudo-data (see :func:`pseudo_data_from_estimate`).
    """
    model = config.model
    cost = config.cost
    canon = derive_canonical(model)
    initial_cost = float(config.initial_cost)

    if initial is None:
        if config.initial_search is None:
            raise ValueError("either an initial estimate or initial_search settings are required")
        s = config.initial_search
        initial, search_cost, data = initial_search(
            model, responder, s.x_low, s.x_high, s.n_probe, cost.stage_cost, s.max_depth)
        initial_cost += search_cost
    else:
        data = list(initial_data) if initial_data is not None else pseudo_data_from_estimate(model, initial)

    records: list[StageRecord] = []
    est = initial
    c = initial_cost
    target = config.target_d

    if target is not None and est.d >= target:
        return ExperimentResult(records, TARGET_MET_AT_START, initial, initial_cost, data)

    reason = ""
    k = 0
    while True:
        if config.max_stages is not None and k >= config.max_stages:
            reason = MAX_STAGES
            break
        x1, x2 = optimal_covariates(canon, est.params)
        n = int(config.policy.size(k, est, cost))
        if target is not None and config.cap_at_target:
            n = min(n, _finish_size(target, est.d, est.a, canon.d_star))
        if config.budget is not None:
            room = config.budget - c - cost.stage_cost
            if n > room:
                n = 2 * int(math.floor(room / 2.0))
                if n < 2:
                    reason = BUDGET_EXHAUSTED
                    break
        half = n // 2
        s1 = int(responder.respond(x1, half))
        s2 = int(responder.respond(x2, half))
        data.append(StageData(x1, half, s1))
        data.append(StageData(x2, half, s2))
        try:
            est = fit_mle(model, data, start=est.params)
        except SeparationError as exc:
            exc.data = list(data)
            raise
        c += cost.stage_cost + n
        k += 1
        records.append(StageRecord(k, n, x1, x2, s1, s2, est.a, est.b, est.d, c))
        if target is not None and est.d >= target:
            reason = TARGET_REACHED
            break

    if records:
        records[-1] = replace(records[-1], stop_reason=reason)
    return ExperimentResult(records, reason, initial, initial_cost, data)


# -- policy comparison --------------------------------------------------------------

@dataclass
class PolicySummary:
    name: str
    results: list[ExperimentResult]
    failures: list[str]
    median_path: list[tuple[int, float, float]]  # (stage, median D, median C)
    total_costs: np.ndarray
    final_d: np.ndarray

    @property
    def median_total_cost(self) -> float:
        return float(np.median(self.total_costs))


@dataclass
class PolicyComparison:
    a: PolicySummary
    b: PolicySummary
    reference_line: list[tuple[float, float]]  # (D, C) of the known-parameter limit

    @property
    def median_cost_difference(self) -> float:
        """Median total cost of policy ``b`` minus that of policy ``a``."""
        return self.b.median_total_cost - self.a.median_total_cost


def median_path(results: Sequence[ExperimentResult]) -> list[tuple[int, float, float]]:
    """Per-stage medians of D and C over the replicates reaching that stage."""
    longest = max((len(r) for r in results), default=0)
    out = []
    for j in range(longest):
        ds = [r.records[j].d for r in results if len(r) > j]
        cs = [r.records[j].c for r in results if len(r) > j]
        out.append((j + 1, float(np.median(ds)), float(np.median(cs))))
    return out


def reference_line(model, true_params: ModelParams, d0: float, c0: float, stage_cost: float,
                   d_end: float, points: int = 50) -> list[tuple[float, float]]:
    """Known-parameter single-stage path: one stage cost, then slope 2|a|/D* in (D, C)."""
    d_star = derive_canonical(model).d_star
    slope = 2.0 * abs(true_params.a) / d_star
    ds = np.linspace(d0, max(d_end, d0), points)
    return [(float(d), float(c0 + stage_cost + slope * (d - d0))) for d in ds]


def replicate_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(index)])


def _run_replicates(config, true_params, initial, replications, seed, name):
    results, failures = [], []
    for r in range(replications):
        responder = BernoulliResponder(config.model, true_params, replicate_seed(seed, r))
        try:
            results.append(run_experiment(config, responder, initial))
        except SeqDesignError as exc:
            logger.warning("%s replicate %d failed: %s", name, r, exc)
            failures.append(f"{r}: {type(exc).__name__}: {exc}")
    if len(results) < 0.9 * replications:
        raise SeqDesignError(
            f"{name}: only {len(results)} of {replications} replicates succeeded")
    return PolicySummary(
        name, results, failures, median_path(results),
        np.array([res.final_c for res in results]),
        np.array([res.final_d for res in results]),
    )


def compare_policies(config_a: ExperimentConfig, config_b: ExperimentConfig,
                     true_params: ModelParams, initial: Estimate, replications: int,
                     seed: int, names=("a", "b")) -> PolicyComparison:
    """Run both policies on the same per-replicate seeds and summarise."""
    if config_a.model is not config_b.model or config_a.target_d != config_b.target_d:
        raise ValueError("compared configs must share the model and the stopping target")
    if replications < 1:
        raise ValueError("replications must be >= 1")
    sa = _run_replicates(config_a, true_params, initial, replications, seed, names[0])
    sb = _run_replicates(config_b, true_params, initial, replications, seed, names[1])
    d_end = max(float(np.max(sa.final_d)), float(np.max(sb.final_d)))
    line = reference_line(config_a.model, true_params, initial.d, config_a.initial_cost,
                          config_a.cost.stage_cost, d_end)
    return PolicyComparison(sa, sb, line)
