"""Distributionally robust pessimistic least-squares value iteration (DROP)."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import LinRmdpInstance
from .numerics import Cholesky, gram_accumulate, weighted_feature_norm_sum
from .offline_data import OfflineDataset, StepData, SubsampleConfig, two_fold_subsample
from .tv_dual import maximize_dual_rows


def theoretical_gamma0(H: int, d: int, K: int, delta: float) -> float:
    """Penalty coefficient ``6 H sqrt(d log(3 H K / delta))``."""
    return 6.0 * H * math.sqrt(d * math.log(3 * H * max(K, 1) / delta))


@dataclass(frozen=True)
class DropConfig:
    rho: float
    K: int
    delta: float = 0.1
    lam0: float = 1.0
    gamma0: float | None = None

    def __post_init__(self):
        if self.lam0 <= 0:
            raise ValueError("lam0 must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.gamma0 is not None and self.gamma0 < 0:
            raise ValueError("gamma0 must be nonnegative")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")

    def gamma(self, H: int, d: int) -> float:
        return theoretical_gamma0(H, d, self.K, self.delta) if self.gamma0 is None else self.gamma0


@dataclass(frozen=True)
class SolverOutput:
    Q: np.ndarray          # (H, S, A)
    V: np.ndarray          # (H + 1, S)
    pi: np.ndarray         # (H, S)
    gamma: float
    lam: float
    gram: np.ndarray       # (H, d, d) per-step (weighted) covariance
    penalty: np.ndarray    # (H, S, A)
    theta_hat: np.ndarray  # (H, d)
    nu_hat: np.ndarray     # (H, d)
    alpha: np.ndarray      # (H, d) maximizing dual levels
    sigma2: np.ndarray | None = field(default=None)

    def to_json(self) -> dict:
        per_step = []
        for h in range(self.Q.shape[0]):
            row = {"penalty_min": float(self.penalty[h].min()), "penalty_max": float(self.penalty[h].max())}
            if self.sigma2 is not None:
                row["sigma2_min"] = float(self.sigma2[h].min())
                row["sigma2_max"] = float(self.sigma2[h].max())
            per_step.append(row)
        return {
            "Q": self.Q.tolist(),
            "V": self.V.tolist(),
            "pi": self.pi.tolist(),
            "gamma0": self.gamma,
            "lambda0": self.lam,
            "per_step": per_step,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def step_features(phi: np.ndarray, st: StepData) -> np.ndarray:
    """``(N, d)`` feature rows of the tuples at one step."""
    return phi[st.s, st.a]


def ridge_theta(phi: np.ndarray, st: StepData, lam0: float = 1.0, weights=None) -> np.ndarray:
    """Ridge estimate of the reward weights from one step of data."""
    X = step_features(phi, st)
    w = np.ones(len(st)) if weights is None else weights
    chol = Cholesky(gram_accumulate(X, w, lam0))
    return chol.solve(X.T @ (w * st.r))


def _next_state_weights(X, w, s_next, S: int, chol: Cholesky) -> np.ndarray:
    # Rows of Lambda^-1 Phi^T W, summed over tuples sharing a next state:
    # the dual only sees a tuple through V(s'), so this is exact.
    onehot = np.zeros((len(s_next), S))
    onehot[np.arange(len(s_next)), s_next] = 1.0
    return chol.solve((X * w[:, None]).T @ onehot)


def empirical_nu(phi, st: StepData, V_next, rho: float, lam0: float = 1.0, gram=None, weights=None):
    """Per-coordinate dual maximization with signed ridge weights.

    Returns ``(nu_hat, alpha)``, both of length d.
    """
    V_next = np.asarray(V_next, dtype=float)
    X = step_features(phi, st)
    w = np.ones(len(st)) if weights is None else weights
    gram = gram_accumulate(X, w, lam0) if gram is None else gram
    chol = Cholesky(gram)
    mu_hat = _next_state_weights(X, w, st.s_next, V_next.shape[0], chol)
    lo = float(V_next.min())
    return _dual_rows(mu_hat, V_next, rho, lo)


def _dual_rows(mu_hat, V_next, rho, lo):
    alpha, nu = maximize_dual_rows(mu_hat, V_next, min(rho, 1.0), lo, lo, float(V_next.max()))
    return nu, alpha


def penalty(phi_sa, gram, gamma: float):
    """``gamma * sum_i phi_i sqrt((gram^-1)_ii)`` for one or many feature rows."""
    return gamma * weighted_feature_norm_sum(phi_sa, Cholesky(gram).inverse_diagonal())


def backward_pass(phi: np.ndarray, D0: OfflineDataset, rho: float, lam: float, gamma: float,
                  sample_weight=None) -> SolverOutput:
    """Pessimistic robust value iteration shared by DROP and DROP-V.

    `sample_weight(h, st)` returns per-tuple regression weights; unit weights
    when omitted.
    """
    S, A, d = phi.shape
    H = D0.H
    D0.check(S, A)
    feats = phi.reshape(S * A, d)
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    pi = np.zeros((H, S), dtype=np.int64)
    grams = np.zeros((H, d, d))
    pen = np.zeros((H, S, A))
    theta_hat = np.zeros((H, d))
    nu_hat = np.zeros((H, d))
    alpha = np.zeros((H, d))
    for h in range(H - 1, -1, -1):
        st = D0.steps[h]
        X = step_features(phi, st)
        w = np.ones(len(st)) if sample_weight is None else sample_weight(h, st)
        gram = gram_accumulate(X, w, lam)
        chol = Cholesky(gram)
        theta_hat[h] = chol.solve(X.T @ (w * st.r))
        mu_hat = _next_state_weights(X, w, st.s_next, S, chol)
        nu_hat[h], alpha[h] = _dual_rows(mu_hat, V[h + 1], rho, float(V[h + 1].min()))
        gamma_pen = gamma * weighted_feature_norm_sum(feats, chol.inverse_diagonal())
        q_bar = feats @ (theta_hat[h] + nu_hat[h]) - gamma_pen
        Q[h] = np.clip(q_bar, 0.0, H - h).reshape(S, A)
        pi[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h][np.arange(S), pi[h]]
        grams[h] = gram
        pen[h] = gamma_pen.reshape(S, A)
    return SolverOutput(Q, V, pi, gamma, lam, grams, pen, theta_hat, nu_hat, alpha)


def fit(inst: LinRmdpInstance, D0: OfflineDataset, config: DropConfig) -> SolverOutput:
    """Run DROP on an already subsampled dataset.

    Only the feature map of `inst` is read; rewards come from the tuples.
    """
    gamma = config.gamma(D0.H, inst.d)
    return backward_pass(inst.phi, D0, config.rho, config.lam0, gamma)


def drop(inst: LinRmdpInstance, D: OfflineDataset, config: DropConfig, seed: int):
    """Two-fold subsampling followed by `fit`.  Returns ``(output, D0)``."""
    D0 = two_fold_subsample(D, SubsampleConfig(config.delta, seed), inst.S)
    return fit(inst, D0, config), D0
