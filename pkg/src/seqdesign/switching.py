"""Switching-measurement scenario: published settings and derived targets.

Times are in seconds; costs in units of one measurement.
"""

from __future__ import annotations

from .canonical import derive_canonical
from .engine import AdhocGrowth, CostEfficient, ExperimentConfig
from .estimation import Estimate, pseudo_data_from_estimate
from .glm import FisherInfo, LinkModel, ModelParams, d_criterion, fisher_info_arrays
from .stage import CostModel, published_rule, round_to_even

MODEL = LinkModel.CLOGLOG
STAGE_SECONDS = 0.88167
UNIT_SECONDS = 0.00386
STAGE_COST = 228.4
INITIAL_SECONDS = 4.0
TOTAL_SECONDS = 497.0
TRUE_PARAMS = ModelParams(0.240, -60.628)
INITIAL_PARAMS = ModelParams(0.380, -95.60)
INITIAL_D = 54.05
ADHOC_START = 100
ADHOC_FACTOR = 1.1


def initial_estimate() -> Estimate:
    """Initial estimate carried as two-point pseudo-data information."""
    stub = Estimate(INITIAL_PARAMS, FisherInfo(0.0, 0.0, 0.0), INITIAL_D)
    data = pseudo_data_from_estimate(MODEL, stub)
    x = [p.x for p in data]
    n = [p.n for p in data]
    info = fisher_info_arrays(MODEL, INITIAL_PARAMS, x, n)
    return Estimate(INITIAL_PARAMS, info, d_criterion(info))


def initial_cost() -> float:
    return INITIAL_SECONDS / UNIT_SECONDS


def adhoc_schedule(total_seconds: float = TOTAL_SECONDS) -> list[int]:
    """Ad-hoc stage sizes that fit in the recorded experiment time."""
    budget = total_seconds / UNIT_SECONDS - initial_cost()
    sizes, used = [], 0.0
    policy = AdhocGrowth(ADHOC_START, ADHOC_FACTOR)
    k = 0
    while True:
        n = policy.size(k, None, None)
        if used + STAGE_COST + n > budget:
            return sizes
        sizes.append(n)
        used += STAGE_COST + n
        k += 1


def experiment_target() -> float:
    """D reached by the recorded experiment, evaluated at the final estimates.

    The initial information is kept at its design points and the recorded
    ad-hoc sample size is placed at the D-optimal points of the final
    estimates.
    """
    canon = derive_canonical(MODEL)
    n_total = sum(adhoc_schedule())
    init = pseudo_data_from_estimate(MODEL, initial_estimate())
    x = [p.x for p in init]
    n = [p.n for p in init]
    x1 = (canon.z1_star - TRUE_PARAMS.b) / TRUE_PARAMS.a
    x2 = (canon.z2_star - TRUE_PARAMS.b) / TRUE_PARAMS.a
    info = fisher_info_arrays(MODEL, TRUE_PARAMS, x + [x1, x2], n + [n_total / 2, n_total / 2])
    return d_criterion(info)


def scenario_configs(rule=None, target: float | None = None):
    """(cost-efficient config, ad-hoc config) at the published settings."""
    target = experiment_target() if target is None else target
    cost = CostModel(STAGE_COST)
    common = dict(model=MODEL, cost=cost, target_d=target, initial_cost=initial_cost(),
                  max_stages=500)
    ce = ExperimentConfig(policy=CostEfficient(rule or published_rule(MODEL)), **common)
    ah = ExperimentConfig(policy=AdhocGrowth(ADHOC_START, ADHOC_FACTOR), **common)
    return ce, ah


__all__ = [
    "MODEL", "STAGE_SECONDS", "UNIT_SECONDS", "STAGE_COST", "TRUE_PARAMS", "INITIAL_PARAMS",
    "INITIAL_D", "initial_estimate", "initial_cost", "adhoc_schedule", "experiment_target",
    "scenario_configs", "round_to_even",
]
