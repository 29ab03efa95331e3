"""Cost-efficient sequential D-optimal designs for binary response models."""

from .canonical import CanonicalDesign, derive_canonical, optimal_covariates
from .engine import (
    AdhocGrowth,
    BernoulliResponder,
    CostEfficient,
    ExperimentConfig,
    ExperimentResult,
    Fixed,
    LineProtocolResponder,
    StageRecord,
    bernoulli_responder,
    compare_policies,
    run_experiment,
)
from .estimation import BinaryGLM, Estimate, StageData, fit_mle, initial_search
from .exceptions import (
    AllCandidatesDegenerateError,
    DegenerateDesignError,
    InitialSearchFailed,
    InvalidPolicyError,
    NoImprovementError,
    ProtocolError,
    RankDeficiencyError,
    SeparationError,
    SeqDesignError,
)
from .gain import GainCurve, GainInterpolant, GainSample, eval_gain, fit_gain, simulate_gain
from .glm import (
    DesignPoint,
    FisherInfo,
    LinkModel,
    ModelParams,
    d_criterion,
    fisher_info,
)
from .stage import (
    PUBLISHED_RULES,
    CostModel,
    PathState,
    StageRule,
    StageSizeRegressor,
    cut_point,
    fit_stage_rule,
    optimal_stage_size,
    suggest_stage_size,
    sweep_grid,
)

__version__ = "0.1.0"


def response_prob(model, z):
    """F(z) for the named model."""
    return LinkModel.from_name(model).cdf(z)


def info_weight(model, z):
    """Information weight g(z) for the named model."""
    return LinkModel.from_name(model).weight(z)
