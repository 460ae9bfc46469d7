"""Variance-weighted DROP (DROP-V)."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .drop import DropConfig, SolverOutput, backward_pass, fit, step_features
from .model import LinRmdpInstance
from .numerics import Cholesky, gram_accumulate
from .offline_data import OfflineDataset, SubsampleConfig, three_fold_subsample


def theoretical_gamma1(H: int, d: int, K: int, delta: float) -> float:
    """Penalty coefficient ``66 log(3 H K / delta) sqrt(d)``."""
    return 66.0 * math.log(3 * H * max(K, 1) / delta) * math.sqrt(d)


@dataclass(frozen=True)
class DropVConfig:
    rho: float
    K: int
    delta: float = 0.1
    lam1: float | None = None
    gamma1: float | None = None
    # settings of the inner DROP run that produces the value estimate
    lam0: float = 1.0
    gamma0: float | None = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.lam1 is not None and self.lam1 <= 0:
            raise ValueError("lam1 must be positive")
        if self.gamma1 is not None and self.gamma1 < 0:
            raise ValueError("gamma1 must be nonnegative")

    def lam(self, H: int) -> float:
        return 1.0 / H**2 if self.lam1 is None else self.lam1

    def gamma(self, H: int, d: int) -> float:
        return theoretical_gamma1(H, d, self.K, self.delta) if self.gamma1 is None else self.gamma1

    def inner(self) -> DropConfig:
        return DropConfig(self.rho, self.K, self.delta, self.lam0, self.gamma0)


@dataclass(frozen=True)
class VarianceEstimate:
    sigma2: np.ndarray  # (H, S, A), entries in [1, H^2]
    nu1: np.ndarray     # (H, d)
    nu2: np.ndarray     # (H, d)
    gram: np.ndarray    # (H, d, d)


def estimate_variance(inst: LinRmdpInstance, D_var: OfflineDataset, V_tilde) -> VarianceEstimate:
    """Clipped second-moment-minus-squared-mean regression on the variance split."""
    V_tilde = np.asarray(V_tilde, dtype=float)
    S, A, d = inst.phi.shape
    H = D_var.H
    feats = inst.features
    sigma2 = np.ones((H, S, A))
    nu1 = np.zeros((H, d))
    nu2 = np.zeros((H, d))
    grams = np.zeros((H, d, d))
    for h, st in enumerate(D_var.steps):
        X = step_features(inst.phi, st)
        grams[h] = gram_accumulate(X, None, 1.0)
        chol = Cholesky(grams[h])
        v = V_tilde[h + 1, st.s_next]
        nu1[h] = chol.solve(X.T @ v**2)
        nu2[h] = chol.solve(X.T @ v)
        second = np.clip(feats @ nu1[h], 0.0, H**2)
        first = np.clip(feats @ nu2[h], 0.0, H)
        sigma2[h] = np.maximum(second - first**2, 1.0).reshape(S, A)
    return VarianceEstimate(sigma2, nu1, nu2, grams)


def fit_weighted(inst: LinRmdpInstance, D0: OfflineDataset, sigma2, config: DropVConfig) -> SolverOutput:
    """Pessimistic robust value iteration with 1/sigma^2 regression weights."""
    sigma2 = np.asarray(sigma2, dtype=float)
    H = D0.H
    if sigma2.shape != (H, inst.S, inst.A):
        raise ValueError(f"sigma2 must have shape {(H, inst.S, inst.A)}")
    if np.any(sigma2 < 1.0) or np.any(sigma2 > H**2):
        raise ValueError("sigma2 entries must lie in [1, H^2]")

    def weight(h, st):
        return 1.0 / sigma2[h, st.s, st.a]

    out = backward_pass(inst.phi, D0, config.rho, config.lam(H), config.gamma(H, inst.d), weight)
    return SolverOutput(**{**out.__dict__, "sigma2": sigma2})


def run_pipeline(inst: LinRmdpInstance, D: OfflineDataset, config: DropVConfig, seed: int):
    """Three-fold subsampling, variance estimation, weighted fit.

    Returns ``(output, D0, D0_var)``.
    """
    if math.sqrt(inst.d) < D.H:
        warnings.warn(
            f"sqrt(d)={math.sqrt(inst.d):.3g} < H={D.H}: the DROP-V guarantee assumes sqrt(d) >= H",
            stacklevel=2,
        )
    D0, D_var = three_fold_subsample(D, SubsampleConfig(config.delta, seed), inst.S)
    tilde = fit(inst, D_var, config.inner())
    var = estimate_variance(inst, D_var, tilde.V)
    return fit_weighted(inst, D0, var.sigma2, config), D0, D_var


def conditional_variance(inst: LinRmdpInstance, V) -> np.ndarray:
    """``Var_{P0_h(.|s,a)}[V_{h+1}]`` as an ``(H, S, A)`` array."""
    V = np.asarray(V, dtype=float)
    P = inst.nominal_kernel()
    m1 = np.einsum("hsaj,hj->hsa", P, V[1:])
    m2 = np.einsum("hsaj,hj->hsa", P, V[1:] ** 2)
    return np.maximum(m2 - m1**2, 0.0)


def variance_weighted_covariance_star(inst: LinRmdpInstance, D0: OfflineDataset, V_star) -> np.ndarray:
    """Per-step covariance weighted by the true conditional variance of `V_star`."""
    H = D0.H
    var = conditional_variance(inst, V_star)
    out = np.zeros((H, inst.d, inst.d))
    for h, st in enumerate(D0.steps):
        X = step_features(inst.phi, st)
        w = 1.0 / np.maximum(1.0, var[h, st.s, st.a])
        out[h] = gram_accumulate(X, w, 1.0 / H**2)
    return out
