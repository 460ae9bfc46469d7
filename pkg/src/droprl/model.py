"""Linear robust MDP instances with d-rectangular total-variation uncertainty.

Indices are 0-based throughout: steps ``h = 0..H-1``, states, actions and
feature coordinates.  Value tables have ``H + 1`` rows with the last row zero.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InstanceValidationError
from .rng import make_rng

BUILD_TOL = 1e-12
DERIVED_TOL = 1e-10


@dataclass(frozen=True)
class LinRmdpInstance:
    """Finite-state linear MDP with nominal factor measures and a TV radius.

    phi   : (S, A, d) nonnegative features, each row summing to one
    theta : (H, d) reward weights, rewards are ``phi @ theta[h]``
    mu0   : (H, d, S) nominal factor measures, each row in the simplex
    zeta  : (S,) initial distribution
    """

    phi: np.ndarray
    theta: np.ndarray
    mu0: np.ndarray
    rho: float
    zeta: np.ndarray

    def __post_init__(self):
        for name in ("phi", "theta", "mu0", "zeta"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.phi.ndim != 3 or self.theta.ndim != 2 or self.mu0.ndim != 3 or self.zeta.ndim != 1:
            raise ValueError("phi (S,A,d), theta (H,d), mu0 (H,d,S), zeta (S,) expected")
        S, A, d = self.phi.shape
        H = self.theta.shape[0]
        if min(S, A, d, H) < 1:
            raise ValueError("S, A, d and H must be positive")
        if self.theta.shape != (H, d) or self.mu0.shape != (H, d, S) or self.zeta.shape != (S,):
            raise ValueError(
                f"inconsistent shapes: phi {self.phi.shape}, theta {self.theta.shape}, "
                f"mu0 {self.mu0.shape}, zeta {self.zeta.shape}"
            )
        rho = float(self.rho)
        # TV distance never exceeds one, larger radii are equivalent
        object.__setattr__(self, "rho", min(rho, 1.0) if rho >= 0 else rho)

    @property
    def S(self) -> int:
        return self.phi.shape[0]

    @property
    def A(self) -> int:
        return self.phi.shape[1]

    @property
    def d(self) -> int:
        return self.phi.shape[2]

    @property
    def H(self) -> int:
        return self.theta.shape[0]

    @property
    def features(self) -> np.ndarray:
        """Features flattened to ``(S*A, d)`` with row index ``s*A + a``."""
        return self.phi.reshape(self.S * self.A, self.d)

    def rewards(self) -> np.ndarray:
        """Rewards as an ``(H, S, A)`` array."""
        return np.einsum("sai,hi->hsa", self.phi, self.theta)

    def nominal_kernel(self) -> np.ndarray:
        """Nominal transition kernel as an ``(H, S, A, S)`` array."""
        return np.einsum("sai,hij->hsaj", self.phi, self.mu0)

    def with_rho(self, rho: float) -> "LinRmdpInstance":
        return LinRmdpInstance(self.phi, self.theta, self.mu0, rho, self.zeta)

    def to_json(self) -> dict:
        return {
            "S": self.S, "A": self.A, "H": self.H, "d": self.d,
            "rho": self.rho,
            "zeta": self.zeta.tolist(),
            "phi": self.phi.tolist(),
            "theta": self.theta.tolist(),
            "mu0": self.mu0.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LinRmdpInstance":
        required = {"S", "A", "H", "d", "rho", "zeta", "phi", "theta", "mu0"}
        missing = required - set(doc)
        unknown = set(doc) - required
        if missing:
            raise InstanceValidationError([f"missing keys {sorted(missing)}"])
        if unknown:
            raise InstanceValidationError([f"unknown keys {sorted(unknown)}"])
        try:
            inst = cls(doc["phi"], doc["theta"], doc["mu0"], doc["rho"], doc["zeta"])
        except ValueError as exc:
            raise InstanceValidationError([str(exc)]) from exc
        dims = {"S": inst.S, "A": inst.A, "H": inst.H, "d": inst.d}
        bad = [f"{k}={doc[k]} but arrays imply {v}" for k, v in dims.items() if doc[k] != v]
        report = bad + validate(inst)
        if report:
            raise InstanceValidationError(report)
        return inst


def validate(inst: LinRmdpInstance) -> list[str]:
    """List every violated structural invariant; empty when the instance is valid."""
    report: list[str] = []
    S, A, H, d = inst.S, inst.A, inst.H, inst.d
    for s, a, i in zip(*np.nonzero(inst.phi < 0)):
        report.append(f"phi[s={s},a={a},i={i}]={inst.phi[s, a, i]:.6g} is negative")
    phi_sums = inst.phi.sum(axis=2)
    for s, a in zip(*np.nonzero(np.abs(phi_sums - 1.0) > BUILD_TOL)):
        report.append(f"phi[s={s},a={a}] sums to {phi_sums[s, a]:.12g}, not 1")
    for h, i, sp in zip(*np.nonzero(inst.mu0 < 0)):
        report.append(f"mu0[h={h},i={i},s'={sp}]={inst.mu0[h, i, sp]:.6g} is negative")
    mu_sums = inst.mu0.sum(axis=2)
    for h, i in zip(*np.nonzero(np.abs(mu_sums - 1.0) > BUILD_TOL)):
        report.append(f"mu0[h={h},i={i}] sums to {mu_sums[h, i]:.12g}, not 1")
    r = inst.rewards()
    for h, s, a in zip(*np.nonzero((r < -BUILD_TOL) | (r > 1 + BUILD_TOL))):
        report.append(f"reward[h={h},s={s},a={a}]={r[h, s, a]:.6g} outside [0, 1]")
    if np.any(inst.zeta < 0) or abs(inst.zeta.sum() - 1.0) > BUILD_TOL:
        report.append(f"zeta is not a probability vector (sum {inst.zeta.sum():.12g})")
    if not 0.0 <= inst.rho <= 1.0:
        report.append(f"rho={inst.rho} outside [0, 1]")
    if not np.all(np.isfinite(inst.phi)) or not np.all(np.isfinite(inst.theta)):
        report.append("non-finite feature or reward weight")
    return report


def nominal_transition(inst: LinRmdpInstance, h: int, s: int, a: int) -> np.ndarray:
    """Next-state distribution ``phi(s, a) @ mu0[h]``."""
    for name, idx, bound in (("h", h, inst.H), ("s", s, inst.S), ("a", a, inst.A)):
        if not 0 <= idx < bound:
            raise IndexError(f"{name}={idx} out of range [0, {bound})")
    return inst.phi[s, a] @ inst.mu0[h]


def tabular_embed(P, r, rho: float, zeta) -> LinRmdpInstance:
    """Embed a tabular MDP with kernel ``P[h, s, a, s']`` and rewards ``r[h, s, a]``.

    Features are indicators of the pair ``(s, a)`` at coordinate ``s*A + a``.
    """
    P = np.asarray(P, dtype=float)
    r = np.asarray(r, dtype=float)
    if P.ndim != 4 or P.shape[1] != P.shape[3] or r.shape != P.shape[:3]:
        raise ValueError("P must be (H, S, A, S) and r (H, S, A)")
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=3) - 1.0) > BUILD_TOL):
        raise ValueError("tabular kernel rows must be probability vectors")
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("tabular rewards must lie in [0, 1]")
    H, S, A, _ = P.shape
    phi = np.eye(S * A).reshape(S, A, S * A)
    theta = r.reshape(H, S * A)
    mu0 = P.reshape(H, S * A, S)
    return LinRmdpInstance(phi, theta, mu0, rho, zeta)


def random_instance(seed: int, S: int, A: int, H: int, d: int, rho: float) -> LinRmdpInstance:
    """Seeded random instance satisfying every structural invariant."""
    if d < 1:
        raise ValueError("d must be at least 1")
    rng = make_rng(seed, "instance")
    phi = rng.dirichlet(np.ones(d), size=(S, A))
    mu0 = rng.dirichlet(np.ones(S), size=(H, d))
    theta = rng.uniform(0.0, 1.0, size=(H, d))
    zeta = rng.dirichlet(np.ones(S))
    # renormalize in float so sums are 1 to rounding
    phi /= phi.sum(axis=2, keepdims=True)
    mu0 /= mu0.sum(axis=2, keepdims=True)
    zeta /= zeta.sum()
    return LinRmdpInstance(phi, theta, mu0, rho, zeta)


def load_instance(path) -> LinRmdpInstance:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceValidationError([f"{path}: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise InstanceValidationError([f"{path}: expected a JSON object"])
    return LinRmdpInstance.from_json(doc)


def save_instance(inst: LinRmdpInstance, path) -> None:
    Path(path).write_text(json.dumps(inst.to_json()) + "\n")


# -- policies and value tables ------------------------------------------------

def check_deterministic_policy(pi, H: int, S: int, A: int) -> np.ndarray:
    pi = np.asarray(pi)
    if pi.shape != (H, S):
        raise ValueError(f"deterministic policy must have shape {(H, S)}, got {pi.shape}")
    if not np.issubdtype(pi.dtype, np.integer):
        if np.any(pi != np.round(pi)):
            raise ValueError("deterministic policy entries must be integers")
        pi = pi.astype(np.int64)
    if np.any(pi < 0) or np.any(pi >= A):
        raise ValueError(f"policy actions must lie in [0, {A})")
    return pi


def check_stochastic_policy(pi, H: int, S: int, A: int) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (H, S, A):
        raise ValueError(f"stochastic policy must have shape {(H, S, A)}, got {pi.shape}")
    if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=2) - 1.0) > BUILD_TOL):
        raise ValueError("stochastic policy rows must be probability vectors")
    return pi


def as_stochastic(pi, H: int, S: int, A: int) -> np.ndarray:
    """Accept a deterministic ``(H, S)`` or stochastic ``(H, S, A)`` policy."""
    pi = np.asarray(pi)
    if pi.ndim == 2:
        pi = check_deterministic_policy(pi, H, S, A)
        return np.eye(A)[pi]
    return check_stochastic_policy(pi, H, S, A)


def uniform_policy(H: int, S: int, A: int) -> np.ndarray:
    return np.full((H, S, A), 1.0 / A)


def epsilon_greedy(pi, epsilon: float, A: int) -> np.ndarray:
    """Mix a deterministic policy with the uniform one."""
    pi = np.asarray(pi)
    out = np.full(pi.shape + (A,), epsilon / A)
    np.put_along_axis(out, pi[..., None], 1.0 - epsilon + epsilon / A, axis=-1)
    return out
