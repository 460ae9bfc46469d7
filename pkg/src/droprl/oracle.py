"""Exact robust dynamic programming, policy evaluation and coverage diagnostics."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import LinRmdpInstance, as_stochastic, check_deterministic_policy, validate
from .numerics import sym_eigen_extremes
from .tv_dual import brute_force_inner, maximize_dual_rows, worst_case_measure


@dataclass(frozen=True)
class RobustSolution:
    V: np.ndarray      # (H + 1, S)
    Q: np.ndarray      # (H, S, A)
    pi: np.ndarray     # (H, S)
    inner: np.ndarray  # (H, d) worst-case factor expectations
    alpha: np.ndarray  # (H, d) maximizing dual levels
    rho: float

    def to_json(self) -> dict:
        return {"V_star": self.V.tolist(), "Q_star": self.Q.tolist(),
                "pi_star": self.pi.tolist(), "rho": self.rho}

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _inner_values(inst: LinRmdpInstance, h: int, V_next: np.ndarray, method: str):
    if method == "dual":
        lo = float(V_next.min())
        alpha, vals = maximize_dual_rows(inst.mu0[h], V_next, inst.rho, lo, lo, float(V_next.max()))
        return vals, alpha
    if method == "transport":
        vals = np.array([brute_force_inner(m, V_next, inst.rho) for m in inst.mu0[h]])
        return vals, np.full(inst.d, np.nan)
    raise ValueError(f"unknown inner method {method!r}")


def _robust_backup(inst, h, V_next, rewards, method="dual"):
    inner, alpha = _inner_values(inst, h, V_next, method)
    return rewards[h] + inst.phi @ inner, inner, alpha


def robust_value_iteration(inst: LinRmdpInstance, method: str = "dual") -> RobustSolution:
    """Backward robust Bellman optimality recursion.

    `method` selects how each factor's worst-case expectation is computed:
    ``"dual"`` (breakpoint enumeration) or ``"transport"`` (greedy transport).
    """
    report = validate(inst)
    if report:
        raise ValueError("invalid instance: " + "; ".join(report))
    H, S, A, d = inst.H, inst.S, inst.A, inst.d
    rewards = inst.rewards()
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    pi = np.zeros((H, S), dtype=np.int64)
    inner = np.zeros((H, d))
    alpha = np.zeros((H, d))
    for h in range(H - 1, -1, -1):
        Q[h], inner[h], alpha[h] = _robust_backup(inst, h, V[h + 1], rewards, method)
        pi[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h][np.arange(S), pi[h]]
    return RobustSolution(V, Q, pi, inner, alpha, inst.rho)


def robust_policy_eval(inst: LinRmdpInstance, pi) -> np.ndarray:
    """Robust value table ``(H + 1, S)`` of a deterministic or stochastic policy."""
    H, S, A = inst.H, inst.S, inst.A
    probs = as_stochastic(pi, H, S, A)
    rewards = inst.rewards()
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        Qh, _, _ = _robust_backup(inst, h, V[h + 1], rewards)
        V[h] = (probs[h] * Qh).sum(axis=1)
    return V


def suboptimality(inst: LinRmdpInstance, pi, solution: RobustSolution | None = None) -> float:
    """Robust value gap ``V*_1(zeta) - V^pi_1(zeta)``."""
    if solution is None:
        solution = robust_value_iteration(inst)
    V_pi = robust_policy_eval(inst, pi)
    return float(inst.zeta @ solution.V[0] - inst.zeta @ V_pi[0])


def worst_case_kernel(inst: LinRmdpInstance, V) -> np.ndarray:
    """Kernel ``(H, S, A, S)`` attaining the robust backup of `V` at every step."""
    V = np.asarray(V, dtype=float)
    mu = np.stack([
        np.stack([worst_case_measure(inst.mu0[h, i], V[h + 1], inst.rho) for i in range(inst.d)])
        for h in range(inst.H)
    ])
    return np.einsum("sai,hij->hsaj", inst.phi, mu)


def evaluate_policy(kernel, rewards, pi) -> np.ndarray:
    """Non-robust finite-horizon evaluation under an explicit kernel."""
    kernel = np.asarray(kernel, dtype=float)
    H, S, A, _ = kernel.shape
    probs = as_stochastic(pi, H, S, A)
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        Qh = rewards[h] + kernel[h] @ V[h + 1]
        V[h] = (probs[h] * Qh).sum(axis=1)
    return V


def occupancy(kernel, pi, zeta) -> np.ndarray:
    """State-action occupancy ``(H, S, A)`` of `pi` started from `zeta`.

    `kernel` may be an explicit ``(H, S, A, S)`` array or an instance, in
    which case its nominal kernel is used.
    """
    if isinstance(kernel, LinRmdpInstance):
        kernel = kernel.nominal_kernel()
    kernel = np.asarray(kernel, dtype=float)
    H, S, A, _ = kernel.shape
    probs = as_stochastic(pi, H, S, A)
    occ = np.zeros((H, S, A))
    state = np.asarray(zeta, dtype=float)
    for h in range(H):
        occ[h] = state[:, None] * probs[h]
        state = np.einsum("sa,saj->j", occ[h], kernel[h])
    return occ


def feature_covariance(inst: LinRmdpInstance, occ) -> np.ndarray:
    """``E_{d_h}[phi phi^T]`` for each step, shape ``(H, d, d)``."""
    return np.einsum("hsa,sai,saj->hij", occ, inst.phi, inst.phi)


def kappa(inst: LinRmdpInstance, pi_b) -> float:
    """Smallest eigenvalue of the behavior feature covariance, minimized over steps."""
    cov = feature_covariance(inst, occupancy(inst, pi_b, inst.zeta))
    return min(sym_eigen_extremes(c)[0] for c in cov)


def _diag_pinv_or_inf(B: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Per coordinate: ``sup_u u_i^2 / u^T B u`` and whether it is infinite.

    Finite exactly when ``e_i`` lies in the range of `B`, where it equals
    ``(B^+)_ii``.
    """
    w, U = np.linalg.eigh(0.5 * (B + B.T))
    cut = tol * max(1.0, float(w[-1]))
    keep = w > cut
    null_mass = (U[:, ~keep] ** 2).sum(axis=1)
    finite = (U[:, keep] ** 2 / w[keep]).sum(axis=1)
    return finite, null_mass > 1e-10


def _concentrability(inst, pi_b, pi_star, kernels, clip: bool) -> float:
    H, d = inst.H, inst.d
    pi_star = check_deterministic_policy(pi_star, H, inst.S, inst.A)
    behavior = feature_covariance(inst, occupancy(inst, pi_b, inst.zeta))
    best = 0.0
    for h in range(H):
        diag, singular = _diag_pinv_or_inf(behavior[h])
        for P in kernels:
            occ = occupancy(P, pi_star, inst.zeta)
            second = np.einsum("sa,sai->i", occ[h], inst.phi**2)
            num = np.minimum(second, 1.0 / d) if clip else second
            for i in range(d):
                if num[i] <= 0:
                    continue  # 0/0 = 0 convention
                if singular[i]:
                    return float("inf")
                best = max(best, num[i] * diag[i])
    return d * best if clip else best


def clipped_concentrability(inst: LinRmdpInstance, pi_b, pi_star, kernels) -> float:
    """Clipped robust concentrability over a finite set of kernels.

    A lower bound on the coefficient defined by a maximum over the whole
    uncertainty set; `kernels` should contain members of that set, e.g. the
    nominal kernel and ``worst_case_kernel(inst, V_star)``.
    """
    return _concentrability(inst, pi_b, pi_star, kernels, clip=True)


def unclipped_concentrability(inst: LinRmdpInstance, pi_b, pi_star, kernels) -> float:
    """Same ratio without the ``1/d`` clip and without the leading factor ``d``."""
    return _concentrability(inst, pi_b, pi_star, kernels, clip=False)
