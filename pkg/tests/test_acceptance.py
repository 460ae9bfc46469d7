"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``.  Tolerances, seed counts and
runtime budgets are pinned below and must not be relaxed.
"""
import time
from statistics import median

import numpy as np
import pytest

from conftest import count_based_update, plain_value_iteration
from droprl.drop import DropConfig, drop, fit
from droprl.dropv import DropVConfig, fit_weighted, run_pipeline, variance_weighted_covariance_star
from droprl.experiment import ExperimentConfig, benchmark_instance, diagnose, median_by_K, run, sweep_slope
from droprl.model import random_instance, uniform_policy
from droprl.numerics import sym_eigen_extremes
from droprl.offline_data import SubsampleConfig, generate, three_fold_subsample, two_fold_counts, two_fold_subsample
from droprl.oracle import (
    evaluate_policy,
    kappa,
    robust_policy_eval,
    robust_value_iteration,
    worst_case_kernel,
)
from droprl.rng import derive_seed, make_rng
from droprl.tv_dual import brute_force_inner, population_inner

BENCH_RHO = 0.2


@pytest.fixture
def report(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {name}: {detail}")
        assert ok, detail
    return emit


def bench_data(seed, K):
    inst = benchmark_instance(BENCH_RHO)
    return generate(inst, uniform_policy(inst.H, inst.S, inst.A), K, derive_seed(seed, K, "data"))


def test_criterion_01_tv_duality(report):
    rng = make_rng(1, "acceptance-duality")
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        S = int(rng.integers(1, 9))
        H = int(rng.integers(1, 11))
        mu = rng.dirichlet(np.ones(S))
        V = rng.uniform(0, H, size=S)
        rho = float(rng.uniform())
        worst = max(worst, abs(population_inner(mu, V, rho) - brute_force_inner(mu, V, rho)))
    elapsed = time.perf_counter() - start
    report(1, "TV duality", worst <= 1e-9 and elapsed < 5,
           f"max |dual - transport| = {worst:.2e} (tol 1e-9), {elapsed:.2f}s (< 5s)")


def test_criterion_02_oracle_zero_radius(report):
    rng = make_rng(2, "acceptance-oracle")
    start = time.perf_counter()
    worst = 0.0
    for k in range(100):
        S, A = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        H, d = int(rng.integers(1, 7)), int(rng.integers(1, 11))
        inst = random_instance(k, S, A, H, d, 0.0)
        V, _ = plain_value_iteration(inst.nominal_kernel(), inst.rewards())
        worst = max(worst, float(np.abs(robust_value_iteration(inst).V - V).max()))
    elapsed = time.perf_counter() - start
    report(2, "oracle at rho=0", worst <= 1e-10 and elapsed < 10,
           f"max |robust VI - plain VI| = {worst:.2e} (tol 1e-10), {elapsed:.2f}s (< 10s)")


def test_criterion_03_worst_case_certification(report):
    rng = make_rng(3, "acceptance-certify")
    worst = 0.0
    for k in range(100):
        S, A = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        H, d = int(rng.integers(1, 6)), int(rng.integers(1, 8))
        inst = random_instance(1000 + k, S, A, H, d, float(rng.uniform()))
        pi = rng.integers(0, A, size=(H, S))
        V = robust_policy_eval(inst, pi)
        V_plain = evaluate_policy(worst_case_kernel(inst, V), inst.rewards(), pi)
        worst = max(worst, float(np.abs(V_plain - V).max()))
    report(3, "worst-case kernel certification", worst <= 1e-9,
           f"max |plain eval under worst kernel - robust eval| = {worst:.2e} (tol 1e-9)")


def test_criterion_04_pessimism(report):
    inst = benchmark_instance(BENCH_RHO)
    K = 2000
    start = time.perf_counter()
    held = 0
    for seed in range(200):
        D = bench_data(seed, K)
        out, _ = drop(inst, D, DropConfig(BENCH_RHO, K), derive_seed(seed, K, "subsample"))
        V_pi = robust_policy_eval(inst, out.pi)
        held += bool(np.all(out.V[0] <= V_pi[0] + 1e-9))
    elapsed = time.perf_counter() - start
    rate = held / 200
    report(4, "pessimism", rate >= 0.95 and elapsed < 120,
           f"V_hat <= V^pi_hat in {held}/200 seeds ({rate:.1%}, need >= 95%), {elapsed:.1f}s (< 120s)")


def test_criterion_05_sqrt_k_scaling(report):
    Ks = [250, 1000, 4000, 16000]
    start = time.perf_counter()
    cfg = ExperimentConfig(instance="benchmark", solver="drop", rho=[BENCH_RHO], K=Ks,
                           seeds=list(range(20)), timing=False)
    records = run(cfg)
    elapsed = time.perf_counter() - start
    med = median_by_K(records)
    try:
        slope = sweep_slope(records)
        slope_text = f"{slope:.3f}"
    except ValueError as exc:
        slope, slope_text = float("nan"), f"undefined ({exc})"
    ok = -0.7 <= slope <= -0.3 and med[16000] < med[250] and elapsed < 600
    medians = ", ".join(f"K={K}: {m:.4g}" for K, m in med.items())
    report(5, "1/sqrt(K) scaling", ok,
           f"slope {slope_text} (need [-0.7, -0.3]); medians {medians}; {elapsed:.1f}s (< 600s)")


def test_criterion_06_tabular_reduction(report):
    inst = benchmark_instance(0.0)
    worst = 0.0
    for seed in range(50):
        K = 4000 + 500 * seed
        D = bench_data(seed, K)
        D0 = two_fold_subsample(D, SubsampleConfig(0.1, derive_seed(seed, K, "subsample")), inst.S)
        for data in (D0, D):
            for cfg in (DropConfig(0.0, K), DropConfig(0.0, K, gamma0=0.05)):
                out = fit(inst, data, cfg)
                Q, _ = count_based_update(data, inst.S, inst.A, inst.H, cfg.gamma(inst.H, inst.d))
                worst = max(worst, float(np.abs(out.Q - Q).max()))
    report(6, "tabular rho=0 reduction", worst <= 1e-10,
           f"max |Q_hat - count-based Q| = {worst:.2e} over 50 datasets (tol 1e-10)")


def test_criterion_07_dropv_consistency(report):
    inst = benchmark_instance(BENCH_RHO)
    H = inst.H
    V_star = robust_value_iteration(inst).V
    identical = True
    sigma_ok = True
    min_slack = np.inf
    for seed in range(50):
        K = 12000
        D = bench_data(seed, K)
        sub_seed = derive_seed(seed, K, "subsample")
        # unit variances with matched (lambda, gamma)
        for lam, gamma in ((1.0, None), (1.0, 0.3), (1.0 / H**2, 0.1)):
            a = fit(inst, D, DropConfig(BENCH_RHO, K, lam0=lam, gamma0=gamma))
            g = a.gamma
            b = fit_weighted(inst, D, np.ones((H, inst.S, inst.A)), DropVConfig(BENCH_RHO, K, lam1=lam, gamma1=g))
            identical &= all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("Q", "V", "pi", "penalty"))
        # learned variances, with default and with a small inner penalty
        for inner_gamma in (None, 0.1):
            cfg = DropVConfig(BENCH_RHO, K, gamma0=inner_gamma)
            out, D0, _ = run_pipeline(inst, D, cfg, sub_seed)
            sigma_ok &= bool(np.all((out.sigma2 >= 1.0) & (out.sigma2 <= H**2)))
            star = variance_weighted_covariance_star(inst, D0, V_star)
            for h in range(H):
                diff = H**2 * np.linalg.inv(out.gram[h]) - np.linalg.inv(star[h])
                min_slack = min(min_slack, sym_eigen_extremes(diff)[0])
    ok = identical and sigma_ok and min_slack >= -1e-9
    report(7, "DROP-V consistency", ok,
           f"unit-variance outputs identical: {identical}; sigma2 in [1, H^2]: {sigma_ok}; "
           f"min eigenvalue of H^2 Lambda^-1 - Sigma*^-1 = {min_slack:.2e} (>= -1e-9)")


def test_criterion_08_dropv_vs_drop(report):
    inst = benchmark_instance(BENCH_RHO)
    cov = kappa(inst, uniform_policy(inst.H, inst.S, inst.A))
    cfg = ExperimentConfig(instance="benchmark", solver=["drop", "drop-v"], rho=[BENCH_RHO], K=[16000],
                           seeds=list(range(50)), timing=False)
    records = run(cfg)
    med_drop = median(r.subopt for r in records if r.solver == "drop")
    med_v = median(r.subopt for r in records if r.solver == "drop-v")
    ok = med_v <= 1.2 * med_drop and cov > 0
    report(8, "DROP-V vs DROP", ok,
           f"median subopt DROP-V {med_v:.4g} vs 1.2 x DROP {1.2 * med_drop:.4g}; kappa {cov:.3g}")


def test_criterion_09_subsampling_bounds(report):
    inst = benchmark_instance(BENCH_RHO)
    K = 16000
    exceed = cells = 0
    for seed in range(200):
        D = bench_data(seed, K)
        n_trim, n_main = two_fold_counts(D, 0.1, inst.S)
        exceed += int(np.sum(n_trim > n_main))
        cells += n_trim.size
    rate = exceed / cells
    report(9, "subsampling lower bound", rate <= 0.2,
           f"N_trim > N_main in {exceed}/{cells} (s,h) cells = {rate:.2%} (<= 20%), K={K}")


def test_criterion_10_diagnostics(report):
    rng = make_rng(10, "acceptance-diagnostics")
    lower_ok = upper_ok = kappa_ok = True
    smallest = np.inf
    for k in range(100):
        S, A = int(rng.integers(2, 6)), int(rng.integers(1, 4))
        H, d = int(rng.integers(1, 5)), int(rng.integers(1, 7))
        inst = random_instance(5000 + k, S, A, H, d, float(rng.uniform()))
        rep = diagnose(inst, uniform_policy(H, S, A))
        c_rob, c_1 = rep["C_rob_lower_bound"], rep["C1_lower_bound"]
        smallest = min(smallest, c_rob)
        lower_ok &= c_rob >= 1.0 - 1e-9
        upper_ok &= c_rob <= d * c_1 * (1 + 1e-12)
        kappa_ok &= rep["kappa"] <= 1.0 / d + 1e-12
    report(10, "coverage diagnostics", lower_ok and upper_ok and kappa_ok,
           f"C_rob >= 1: {lower_ok} (min {smallest:.4g}); C_rob <= d*C1: {upper_ok}; kappa <= 1/d: {kappa_ok}")


def test_three_fold_split_keeps_parts_disjoint():
    # supporting check for criterion 7's variance split
    D = bench_data(0, 9000)
    D0, Dv = three_fold_subsample(D, SubsampleConfig(0.1, 0), 3)
    assert not ({int(t) for st in D0.steps for t in st.traj} & {int(t) for st in Dv.steps for t in st.traj})
