"""Offline trajectory generation and the trimming subsamplers.

Both subsamplers split the batch by trajectory index, use one part to build a
high-probability lower bound on the per-(step, state) sample counts of the
others, and keep a uniformly random subset of that size from each remaining
part.  Kept samples then behave as if drawn independently across steps.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FileFormatError
from .model import LinRmdpInstance, as_stochastic
from .rng import make_rng

TWO_FOLD_FACTOR = 10
THREE_FOLD_FACTOR = 6


@dataclass(frozen=True)
class StepData:
    """Transition-reward tuples observed at one step, stored column-wise."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    traj: np.ndarray

    def __len__(self) -> int:
        return len(self.s)

    def take(self, idx) -> "StepData":
        return StepData(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.traj[idx])

    @classmethod
    def empty(cls) -> "StepData":
        i = np.zeros(0, dtype=np.int64)
        return cls(i, i, np.zeros(0), i, i)


@dataclass(frozen=True)
class OfflineDataset:
    steps: tuple[StepData, ...]
    K: int

    @property
    def H(self) -> int:
        return len(self.steps)

    def sizes(self) -> list[int]:
        return [len(st) for st in self.steps]

    def size(self) -> int:
        return sum(self.sizes())

    def select_trajectories(self, lo: int, hi: int) -> "OfflineDataset":
        """Tuples whose trajectory index lies in ``[lo, hi)``."""
        return OfflineDataset(
            tuple(st.take((st.traj >= lo) & (st.traj < hi)) for st in self.steps), self.K
        )

    def state_counts(self, S: int) -> np.ndarray:
        """``(H, S)`` number of tuples per step and current state."""
        return np.stack([np.bincount(st.s, minlength=S) for st in self.steps])

    def check(self, S: int, A: int) -> None:
        for h, st in enumerate(self.steps):
            if len(st) == 0:
                continue
            if st.s.min() < 0 or st.s.max() >= S or st.s_next.min() < 0 or st.s_next.max() >= S:
                raise ValueError(f"state index out of range at step {h}")
            if st.a.min() < 0 or st.a.max() >= A:
                raise ValueError(f"action index out of range at step {h}")
            if st.r.min() < 0 or st.r.max() > 1:
                raise ValueError(f"reward outside [0, 1] at step {h}")


@dataclass(frozen=True)
class SubsampleConfig:
    delta: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


def _sample_rows(rng: np.random.Generator, cdf: np.ndarray) -> np.ndarray:
    u = rng.random(cdf.shape[0])
    idx = (u[:, None] >= cdf).sum(axis=1)
    # guard against cdf[-1] rounding just below one
    return np.minimum(idx, cdf.shape[1] - 1)


def generate(inst: LinRmdpInstance, behavior, K: int, seed: int) -> OfflineDataset:
    """Roll out `K` trajectories of the behavior policy under the nominal kernel."""
    H, S, A = inst.H, inst.S, inst.A
    pib = as_stochastic(behavior, H, S, A)
    rng = make_rng(seed, "generate")
    kernel_cdf = np.cumsum(inst.nominal_kernel(), axis=3)
    policy_cdf = np.cumsum(pib, axis=2)
    rewards = inst.rewards()
    traj = np.arange(K)
    s = _sample_rows(rng, np.broadcast_to(np.cumsum(inst.zeta), (K, S)))
    steps = []
    for h in range(H):
        a = _sample_rows(rng, policy_cdf[h, s])
        s_next = _sample_rows(rng, kernel_cdf[h, s, a])
        steps.append(StepData(s, a, rewards[h, s, a], s_next, traj))
        s = s_next
    return OfflineDataset(tuple(steps), K)


def trim_count(n_aux, K: int, H: int, delta: float, factor: float):
    """``floor(max(n - factor * sqrt(n * log(K H / delta)), 0))``, elementwise."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    n = np.asarray(n_aux, dtype=float)
    if np.any(n < 0):
        raise ValueError("counts must be nonnegative")
    log_term = math.log(K * H / delta)
    out = np.floor(np.maximum(n - factor * np.sqrt(n * log_term), 0.0)).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def _subsample_part(part: OfflineDataset, n_trim: np.ndarray, S: int, rng) -> OfflineDataset:
    steps = []
    for h, st in enumerate(part.steps):
        keep = []
        for s in range(S):
            pool = np.flatnonzero(st.s == s)
            m = min(int(n_trim[h, s]), len(pool))
            if m > 0:
                keep.append(pool[rng.permutation(len(pool))[:m]])
        idx = np.sort(np.concatenate(keep)) if keep else np.zeros(0, dtype=np.int64)
        steps.append(st.take(idx))
    return OfflineDataset(tuple(steps), part.K)


def _num_states(D: OfflineDataset) -> int:
    top = [int(max(st.s.max(), st.s_next.max())) for st in D.steps if len(st)]
    return max(top, default=-1) + 1


def two_fold_parts(D: OfflineDataset):
    """``(main, aux)``: first and second half of the trajectories."""
    if D.K < 2:
        raise ValueError("two-fold subsampling needs at least 2 trajectories")
    half = D.K // 2
    return D.select_trajectories(0, half), D.select_trajectories(half, D.K)


def three_fold_parts(D: OfflineDataset):
    """``(aux, main, var)``: consecutive thirds of the trajectories."""
    if D.K < 3:
        raise ValueError("three-fold subsampling needs at least 3 trajectories")
    third = D.K // 3
    return (
        D.select_trajectories(0, third),
        D.select_trajectories(third, 2 * third),
        D.select_trajectories(2 * third, D.K),
    )


def two_fold_counts(D: OfflineDataset, delta: float, S: int | None = None):
    """Pre-clamp ``(n_trim, n_main)`` tables, each ``(H, S)``."""
    S = _num_states(D) if S is None else S
    main, aux = two_fold_parts(D)
    n_trim = trim_count(aux.state_counts(S), D.K, D.H, delta, TWO_FOLD_FACTOR)
    return n_trim, main.state_counts(S)


def three_fold_counts(D: OfflineDataset, delta: float, S: int | None = None):
    """Pre-clamp ``(n_trim, n_main, n_var)`` tables, each ``(H, S)``."""
    S = _num_states(D) if S is None else S
    aux, main, var = three_fold_parts(D)
    n_trim = trim_count(aux.state_counts(S), D.K, D.H, delta, THREE_FOLD_FACTOR)
    return n_trim, main.state_counts(S), var.state_counts(S)


def two_fold_subsample(D: OfflineDataset, config: SubsampleConfig, S: int | None = None) -> OfflineDataset:
    S = _num_states(D) if S is None else S
    main, _ = two_fold_parts(D)
    n_trim, _ = two_fold_counts(D, config.delta, S)
    return _subsample_part(main, n_trim, S, make_rng(config.seed, "two-fold"))


def three_fold_subsample(D: OfflineDataset, config: SubsampleConfig, S: int | None = None):
    """Return ``(D0, D0_var)`` drawn from the main and variance thirds."""
    S = _num_states(D) if S is None else S
    _, main, var = three_fold_parts(D)
    n_trim, _, _ = three_fold_counts(D, config.delta, S)
    rng = make_rng(config.seed, "three-fold")
    return _subsample_part(main, n_trim, S, rng), _subsample_part(var, n_trim, S, rng)


# -- JSON-lines files -----------------------------------------------------------

def save_dataset(D: OfflineDataset, path) -> None:
    lines = []
    for h, st in enumerate(D.steps):
        for j in range(len(st)):
            lines.append(json.dumps({
                "h": h, "s": int(st.s[j]), "a": int(st.a[j]), "r": float(st.r[j]),
                "s_next": int(st.s_next[j]), "traj": int(st.traj[j]),
            }))
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_dataset(path, S: int, A: int, H: int, K: int | None = None) -> OfflineDataset:
    """Read a JSON-lines dataset, checking every index against ``(S, A, H)``."""
    cols: list[list[tuple]] = [[] for _ in range(H)]
    keys = {"h", "s", "a", "r", "s_next", "traj"}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FileFormatError(f"line {lineno}: {exc}") from exc
            if set(rec) != keys:
                raise FileFormatError(f"line {lineno}: expected keys {sorted(keys)}")
            h, s, a, sn = rec["h"], rec["s"], rec["a"], rec["s_next"]
            if not (0 <= h < H and 0 <= s < S and 0 <= sn < S and 0 <= a < A):
                raise FileFormatError(f"line {lineno}: index out of range")
            if not 0.0 <= rec["r"] <= 1.0 or rec["traj"] < 0:
                raise FileFormatError(f"line {lineno}: reward or trajectory index out of range")
            cols[h].append((s, a, rec["r"], sn, rec["traj"]))
    steps = []
    for rows in cols:
        if not rows:
            steps.append(StepData.empty())
            continue
        s, a, r, sn, tr = zip(*rows)
        steps.append(StepData(
            np.array(s, dtype=np.int64), np.array(a, dtype=np.int64), np.array(r, dtype=float),
            np.array(sn, dtype=np.int64), np.array(tr, dtype=np.int64),
        ))
    if K is None:
        K = max((int(st.traj.max()) + 1 for st in steps if len(st)), default=0)
    return OfflineDataset(tuple(steps), K)
