"""Binary response models: response curves, information weights, Fisher information.

All three models share the form ``P(Y=1) = F(a*x + b)``. The information
weight ``g(z) = f(z)**2 / (F(z) * (1 - F(z)))`` is evaluated in log space so
that both tails underflow to zero instead of overflowing.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# g is exactly 0.0 in double precision well before this for every model.
_Z_LIMIT = 1.0e4


def _log1mexp(x):
    """log(1 - exp(-x)) for x > 0, accurate for small and large x."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x < math.log(2.0), np.log(-np.expm1(-x)), np.log1p(-np.exp(-x)))


def _log_expm1(y):
    """log(exp(y) - 1) for y >= 0 without overflow."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        small = np.log(np.expm1(np.minimum(y, 30.0)))
        large = y + np.log1p(-np.exp(-np.maximum(y, 30.0)))
    return np.where(y <= 30.0, small, large)


class LinkModel(str, enum.Enum):
    """Tagged choice among the three response curves."""

    LOGIT = "logit"
    PROBIT = "probit"
    CLOGLOG = "cloglog"

    @classmethod
    def from_name(cls, name: "str | LinkModel") -> "LinkModel":
        if isinstance(name, LinkModel):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(
                f"unknown model {name!r}; expected one of "
                f"{', '.join(m.value for m in cls)}"
            ) from None

    def __str__(self) -> str:
        return self.value

    # -- response curve -------------------------------------------------

    def cdf(self, z):
        """Response curve F(z)."""
        z = np.asarray(z, dtype=float)
        if self is LinkModel.LOGIT:
            out = special.expit(z)
        elif self is LinkModel.PROBIT:
            out = special.ndtr(z)
        else:
            with np.errstate(over="ignore"):
                out = -np.expm1(-np.exp(z))
        return out[()] if out.ndim == 0 else out

    def log_cdf(self, z):
        """log F(z)."""
        z = np.asarray(z, dtype=float)
        if self is LinkModel.LOGIT:
            out = -np.logaddexp(0.0, -z)
        elif self is LinkModel.PROBIT:
            out = special.log_ndtr(z)
        else:
            with np.errstate(over="ignore"):
                out = _log1mexp(np.exp(z))
        return out[()] if out.ndim == 0 else out

    def log_sf(self, z):
        """log(1 - F(z))."""
        z = np.asarray(z, dtype=float)
        if self is LinkModel.LOGIT:
            out = -np.logaddexp(0.0, z)
        elif self is LinkModel.PROBIT:
            out = special.log_ndtr(-z)
        else:
            with np.errstate(over="ignore"):
                out = -np.exp(z)
        return out[()] if out.ndim == 0 else out

    def ppf(self, p):
        """Inverse response curve."""
        p = np.asarray(p, dtype=float)
        if self is LinkModel.LOGIT:
            out = special.logit(p)
        elif self is LinkModel.PROBIT:
            out = special.ndtri(p)
        else:
            out = np.log(-np.log1p(-p))
        return out[()] if out.ndim == 0 else out

    # -- information weights ----------------------------------------------

    def log_weight(self, z):
        """log g(z); tends to -inf in both tails."""
        z = np.clip(np.asarray(z, dtype=float), -_Z_LIMIT, _Z_LIMIT)
        if self is LinkModel.LOGIT:
            a = np.abs(z)
            out = -a - 2.0 * np.log1p(np.exp(-a))
        elif self is LinkModel.PROBIT:
            out = -z * z - 2.0 * _LOG_SQRT_2PI - special.log_ndtr(z) - special.log_ndtr(-z)
        else:
            # e^{2z} / (e^{e^z} - 1), written as 2z - log(expm1(e^z))
            with np.errstate(over="ignore"):
                y = np.exp(np.minimum(z, 700.0))
            tiny = y < 1e-8
            ratio = np.where(tiny, 1.0, np.expm1(np.where(tiny, 1.0, np.minimum(y, 30.0))) / np.where(tiny, 1.0, y))
            log_em1 = np.where(y <= 30.0, z + np.log(ratio), _log_expm1(y))
            out = 2.0 * z - log_em1
            out = np.where(z >= 700.0, -np.inf, out)
        return out[()] if out.ndim == 0 else out

    def weight(self, z):
        """Information weight g(z) > 0."""
        out = np.exp(self.log_weight(z))
        return out[()] if np.ndim(out) == 0 else out

    def score_weight(self, z):
        """f(z) / (F(z) * (1 - F(z))), the factor multiplying (s - n*F) in the score."""
        z = np.asarray(z, dtype=float)
        if self is LinkModel.LOGIT:
            out = np.ones_like(z)
        elif self is LinkModel.PROBIT:
            zc = np.clip(z, -_Z_LIMIT, _Z_LIMIT)
            out = np.exp(-0.5 * zc * zc - _LOG_SQRT_2PI - special.log_ndtr(zc) - special.log_ndtr(-zc))
        else:
            with np.errstate(over="ignore"):
                y = np.exp(np.minimum(z, 700.0))
            tiny = y < 1e-12
            safe = np.where(tiny, 1.0, y)
            out = np.where(tiny, 1.0 + 0.5 * y, safe / -np.expm1(-safe))
        return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class ModelParams:
    """Slope ``a`` and intercept ``b`` of the linear predictor z = a*x + b."""

    a: float
    b: float

    def z(self, x):
        return self.a * np.asarray(x, dtype=float) + self.b


@dataclass(frozen=True)
class DesignPoint:
    x: float
    n: float = 1

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"measurement count must be non-negative, got {self.n}")


@dataclass(frozen=True)
class FisherInfo:
    """Symmetric 2x2 expected information; ``j11`` pairs with a, ``j22`` with b."""

    j11: float
    j12: float
    j22: float

    def __add__(self, other: "FisherInfo") -> "FisherInfo":
        return FisherInfo(self.j11 + other.j11, self.j12 + other.j12, self.j22 + other.j22)

    def scale(self, c: float) -> "FisherInfo":
        return FisherInfo(c * self.j11, c * self.j12, c * self.j22)

    @property
    def det(self) -> float:
        return self.j11 * self.j22 - self.j12 * self.j12

    def as_array(self) -> np.ndarray:
        return np.array([[self.j11, self.j12], [self.j12, self.j22]])

    def inverse(self) -> np.ndarray:
        det = self.det
        if det <= 0:
            raise np.linalg.LinAlgError("information matrix is singular")
        return np.array([[self.j22, -self.j12], [-self.j12, self.j11]]) / det


def fisher_info_arrays(model: LinkModel, params: ModelParams, x, n) -> FisherInfo:
    """Vectorised Fisher information for covariates ``x`` with counts ``n``."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(n, dtype=float) * model.weight(params.z(x))
    return FisherInfo(float(np.sum(w * x * x)), float(np.sum(w * x)), float(np.sum(w)))


def fisher_info(model: LinkModel, params: ModelParams,
                design: Iterable[DesignPoint]) -> FisherInfo:
    """Expected Fisher information J = sum_i n_i g(z_i) [[x^2, x], [x, 1]]."""
    design = list(design)
    if not design:
        return FisherInfo(0.0, 0.0, 0.0)
    x = [p.x for p in design]
    n = [p.n for p in design]
    return fisher_info_arrays(LinkModel.from_name(model), params, x, n)


def d_criterion(info: FisherInfo) -> float:
    """Square root of det(J); tiny negative determinants are clamped to 0."""
    det = info.det
    scale = max(abs(info.j11 * info.j22), info.j12 * info.j12, 1e-300)
    if det < -1e-12 * scale:
        raise ValueError(f"information matrix is not PSD (det={det:g})")
    return math.sqrt(max(det, 0.0))


def two_point_gain(model: LinkModel, z1, z2):
    """sqrt(g(z1) g(z2) (z1 - z2)^2): D of one measurement at each of two points.

    Non-finite results (e.g. 0 * inf from wildly extrapolated points) become 0.
    """
    model = LinkModel.from_name(model)
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(0.5 * (model.log_weight(z1) + model.log_weight(z2))) * np.abs(z1 - z2)
    out = np.where(np.isfinite(out), out, 0.0)
    return out[()] if out.ndim == 0 else out


def as_design(points: Sequence) -> list[DesignPoint]:
    """Coerce ``(x, n)`` tuples into :class:`DesignPoint` objects."""
    return [p if isinstance(p, DesignPoint) else DesignPoint(*p) for p in points]
