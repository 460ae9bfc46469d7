"""Total-variation robust inner problem: dual evaluation and a transport oracle.

For a measure ``mu`` over states, a value vector ``V`` and radius ``rho``::

    inf_{TV(mu', mu) <= rho} mu' . V
        = max_{alpha in [min V, max V]} mu . min(V, alpha) - rho * (alpha - min V)

The right-hand side is piecewise linear in ``alpha`` with kinks at the entries
of ``V``, so it is maximized exactly by enumerating those breakpoints.  The
same routine is used with signed ridge-regression weights in place of ``mu``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-9


def clip_value(v, alpha: float) -> np.ndarray:
    """Clip values from above at `alpha`."""
    return np.minimum(np.asarray(v, dtype=float), alpha)


@dataclass(frozen=True)
class DualProblem:
    weights: np.ndarray
    values: np.ndarray
    rho: float
    floor: float
    lo: float
    hi: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if w.shape != v.shape:
            raise ValueError("weights and values must have equal length")
        if self.lo > self.hi:
            raise ValueError(f"empty alpha range [{self.lo}, {self.hi}]")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "values", v)

    @classmethod
    def population(cls, mu, values, rho: float) -> "DualProblem":
        v = np.asarray(values, dtype=float)
        lo, hi = float(v.min()), float(v.max())
        return cls(mu, v, rho, lo, lo, hi)


def dual_objective(p: DualProblem, alpha: float) -> float:
    if not p.lo <= alpha <= p.hi:
        raise ValueError(f"alpha={alpha} outside [{p.lo}, {p.hi}]")
    return float(p.weights @ clip_value(p.values, alpha) - p.rho * (alpha - p.floor))


def maximize_dual_rows(weights, values, rho: float, floor: float, lo: float, hi: float):
    """Maximize the dual objective for every row of `weights` at once.

    All rows share `values`, which lets one sort and one set of candidate
    breakpoints serve every coordinate.  Returns ``(alphas, maxima)``; ties
    resolve to the smallest maximizing breakpoint.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    values = np.asarray(values, dtype=float).reshape(-1)
    if weights.shape[1] != values.shape[0]:
        raise ValueError("weights rows must match values length")
    if lo > hi:
        raise ValueError(f"empty alpha range [{lo}, {hi}]")

    cand = np.unique(np.concatenate([np.clip(values, lo, hi), [lo, hi]]))
    order = np.argsort(values, kind="stable")
    v_sorted = values[order]
    w_sorted = weights[:, order]
    zeros = np.zeros((weights.shape[0], 1))
    prefix_wv = np.concatenate([zeros, np.cumsum(w_sorted * v_sorted, axis=1)], axis=1)
    prefix_w = np.concatenate([zeros, np.cumsum(w_sorted, axis=1)], axis=1)
    total_w = prefix_w[:, -1:]

    # number of values <= each candidate: those stay unclipped
    idx = np.searchsorted(v_sorted, cand, side="right")
    obj = prefix_wv[:, idx] + cand[None, :] * (total_w - prefix_w[:, idx])
    obj = obj - rho * (cand[None, :] - floor)

    best = np.argmax(obj, axis=1)
    rows = np.arange(weights.shape[0])
    return cand[best], obj[rows, best]


def maximize_dual(p: DualProblem) -> tuple[float, float]:
    """Return ``(alpha*, value)`` maximizing the dual objective over ``[lo, hi]``."""
    alphas, vals = maximize_dual_rows(p.weights[None, :], p.values, p.rho, p.floor, p.lo, p.hi)
    return float(alphas[0]), float(vals[0])


def _check_simplex(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if mu.size == 0 or np.any(mu < -1e-12) or abs(mu.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError("measure is not a probability vector")
    return mu


def _clamp_radius(rho: float) -> float:
    if rho < 0:
        raise ValueError(f"radius must be nonnegative, got {rho}")
    return min(float(rho), 1.0)


def population_inner(mu, values, rho: float) -> float:
    """Worst-case expectation of `values` over the TV ball around `mu`, via the dual."""
    mu = _check_simplex(mu)
    p = DualProblem.population(mu, values, _clamp_radius(rho))
    return maximize_dual(p)[1]


def population_inner_rows(mus, values, rho: float) -> np.ndarray:
    """`population_inner` for each row of `mus` (rows assumed to be in the simplex)."""
    values = np.asarray(values, dtype=float)
    lo = float(values.min())
    _, vals = maximize_dual_rows(mus, values, _clamp_radius(rho), lo, lo, float(values.max()))
    return vals


def worst_case_measure(mu, values, rho: float) -> np.ndarray:
    """Minimizing measure in the TV ball, built by greedy mass transport.

    Mass ``min(rho, 1 - mu[argmin V])`` is removed from states in decreasing
    order of value and placed on the lowest-value state.
    """
    mu = _check_simplex(mu)
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.shape != mu.shape:
        raise ValueError("measure and values must have equal length")
    rho = _clamp_radius(rho)
    target = int(np.argmin(values))
    out = mu.copy()
    budget = min(rho, 1.0 - mu[target])
    if budget <= 0:
        return out
    remaining = budget
    for s in np.argsort(-values, kind="stable"):
        if s == target or remaining <= 0:
            continue
        take = min(out[s], remaining)
        out[s] -= take
        remaining -= take
    out[target] += budget - remaining
    return out


def brute_force_inner(mu, values, rho: float) -> float:
    """Worst-case expectation by explicit greedy transport (independent of the dual)."""
    return float(worst_case_measure(mu, values, rho) @ np.asarray(values, dtype=float))
