import numpy as np
import pytest

from droprl.model import random_instance, tabular_embed


def grid_maximize(w, v, rho, floor, lo, hi, steps=100_001):
    """Dense alpha-grid search, the reference for breakpoint enumeration."""
    alphas = np.linspace(lo, hi, steps)
    obj = np.minimum(np.asarray(v)[None, :], alphas[:, None]) @ np.asarray(w) - rho * (alphas - floor)
    k = int(np.argmax(obj))
    return alphas[k], obj[k]


def plain_value_iteration(P, r):
    """Non-robust finite-horizon value iteration on an explicit kernel."""
    H, S, A, _ = P.shape
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    for h in reversed(range(H)):
        for s in range(S):
            for a in range(A):
                Q[h, s, a] = r[h, s, a] + sum(P[h, s, a, t] * V[h + 1, t] for t in range(S))
            V[h, s] = max(Q[h, s])
    return V, Q


def random_tabular(seed, S=3, A=2, H=3, rho=0.2):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(S), size=(H, S, A))
    P /= P.sum(axis=3, keepdims=True)
    r = rng.uniform(0, 1, size=(H, S, A))
    return tabular_embed(P, r, rho, np.full(S, 1.0 / S)), P, r


@pytest.fixture
def small_instance():
    return random_instance(7, S=4, A=3, H=3, d=5, rho=0.25)


def count_based_update(D0, S, A, H, gamma, lam=1.0):
    """Tabular pessimistic update from raw counts, written without linear algebra."""
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    for h in reversed(range(H)):
        st = D0.steps[h]
        for s in range(S):
            for a in range(A):
                n, r_sum, v_sum = 0, 0.0, 0.0
                for j in range(len(st)):
                    if st.s[j] == s and st.a[j] == a:
                        n += 1
                        r_sum += st.r[j]
                        v_sum += V[h + 1, st.s_next[j]]
                q = (r_sum + v_sum) / (n + lam) - gamma / np.sqrt(n + lam)
                Q[h, s, a] = min(max(q, 0.0), H - h)
            V[h, s] = max(Q[h, s])
    return Q, V
