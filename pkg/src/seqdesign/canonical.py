"""Canonical locally D-optimal two-point designs."""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .exceptions import ConvergenceError
from .glm import FisherInfo, LinkModel, ModelParams, d_criterion, fisher_info_arrays, two_point_gain


@dataclass(frozen=True)
class CanonicalDesign:
    model: LinkModel
    z1_star: float
    z2_star: float
    j_star: FisherInfo
    d_star: float

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "z1": self.z1_star,
            "z2": self.z2_star,
            "F_z1": float(self.model.cdf(self.z1_star)),
            "F_z2": float(self.model.cdf(self.z2_star)),
            "D_star": self.d_star,
        }


def _coarse_grid_max(model: LinkModel, lo: float = -6.0, hi: float = 6.0, step: float = 0.01):
    z = np.arange(lo, hi + step / 2, step)
    logg = model.log_weight(z)
    # objective on the log scale: 0.5*(log g1 + log g2) + log|z1 - z2|, z1 < z2
    with np.errstate(divide="ignore", invalid="ignore"):
        obj = 0.5 * (logg[:, None] + logg[None, :]) + np.log(z[None, :] - z[:, None])
    obj[np.tril_indices(z.size)] = -np.inf
    i, j = np.unravel_index(np.argmax(obj), obj.shape)
    return z[i], z[j]


@functools.lru_cache(maxsize=None)
def derive_canonical(model: "LinkModel | str") -> CanonicalDesign:
    """Locate the maximiser of sqrt(g(z1) g(z2)) |z1 - z2| over z1 < z2.

    A 0.01-step grid over [-6, 6]^2 seeds a Nelder-Mead refinement. The
    result is cached per model.
    """
    model = LinkModel.from_name(model)
    z1, z2 = _coarse_grid_max(model)

    def neg(v):
        return -float(two_point_gain(model, v[0], v[1]))

    res = optimize.minimize(
        neg, np.array([z1, z2]), method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 5000,
                 "initial_simplex": np.array([[z1, z2], [z1 + 0.01, z2], [z1, z2 + 0.01]])},
    )
    if not res.success:
        raise ConvergenceError(f"canonical design search failed for {model}: {res.message}")
    z1, z2 = sorted(float(v) for v in res.x)
    j_star = fisher_info_arrays(model, ModelParams(1.0, 0.0), [z1, z2], [1, 1])
    return CanonicalDesign(model, z1, z2, j_star, d_criterion(j_star))


def optimal_covariates(design: CanonicalDesign, params: ModelParams) -> tuple[float, float]:
    """Map canonical points to covariate space via x = (z* - b) / a, ordered ascending."""
    if params.a == 0 or not np.isfinite(params.a):
        raise ValueError("slope a must be finite and non-zero to locate design points")
    x1 = (design.z1_star - params.b) / params.a
    x2 = (design.z2_star - params.b) / params.a
    return (x1, x2) if x1 <= x2 else (x2, x1)
