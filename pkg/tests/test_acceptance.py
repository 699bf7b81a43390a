"""Acceptance suite: one test per release criterion, each printing a
pass/fail line (run with ``pytest tests/test_acceptance.py -s`` to see them
inline).  Monte Carlo criteria use fixed seeds so the suite is
deterministic; every threshold is asserted exactly as documented."""

import hashlib
import math
import os
import time

import numpy as np
import pytest

from bellwether.granger import granger_test, tally
from bellwether.pipeline import RunConfig, run
from bellwether.regression import stepwise_prune
from bellwether.synthetic import (SyntheticScenario, fevd_oracle,
                                  recovery_experiment, write_scenario)
from bellwether.varfevd import (VarFit, adf_test, durbin_watson, fevd,
                                fit_var, irf, is_stable, jarque_bera,
                                select_lag_bic)

from test_granger import outcome_from_counts
from test_varfevd import make_fit, simulate_var


def report(criterion: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def random_stable_system(rng, k, p):
    while True:
        coefs = [rng.normal(scale=0.4, size=(k, k)) for _ in range(p)]
        fit = make_fit(coefs, np.eye(k))
        from bellwether.varfevd import companion_eigenvalues
        top = companion_eigenvalues(fit).max()
        if top < 0.95:
            break
    L = rng.normal(size=(k, k))
    sigma = L @ L.T + 0.4 * np.eye(k)
    return coefs, sigma


def test_01_fevd_share_normalization():
    rng = np.random.default_rng(101)
    start = time.monotonic()
    worst = 0.0
    for trial in range(100):
        k = 2 if trial % 2 == 0 else 3
        p = 1 if trial % 4 < 2 else 2
        coefs, sigma = random_stable_system(rng, k, p)
        data = simulate_var(coefs, 400, rng)
        fit = fit_var(data, p)
        decomp = fevd(fit, 12) if is_stable(fit) else None
        if decomp is None:
            continue
        worst = max(worst, np.abs(decomp.shares.sum(axis=2) - 1.0).max())
        assert (decomp.shares >= -1e-12).all()
    elapsed = time.monotonic() - start
    report("1 FEVD normalization", worst <= 1e-8 and elapsed < 5.0,
           f"max deviation {worst:.2e}, {elapsed:.1f}s")


def test_02_fevd_oracle_equivalence():
    rng = np.random.default_rng(202)
    start = time.monotonic()
    worst = 0.0
    for trial in range(20):
        coefs, sigma = random_stable_system(rng, 2, 1)
        analytic = fevd(make_fit(coefs, sigma), 12).shares
        oracle = fevd_oracle(coefs, sigma, 12, n_paths=1_000_000,
                             seed=7000 + trial)
        worst = max(worst, np.abs(analytic - oracle).max())
    elapsed = time.monotonic() - start
    report("2 FEVD oracle equivalence", worst <= 1e-3 and elapsed < 120.0,
           f"max |analytic - oracle| {worst:.2e}, {elapsed:.0f}s")


def test_03_closed_form_cross_share():
    worst = 0.0
    for rho in (0.2, 0.5, 0.8):
        fit = make_fit([np.zeros((2, 2))], np.array([[1.0, rho], [rho, 1.0]]))
        share = fevd(fit, 1, ordering=(0, 1)).share(1, 1, 0)
        worst = max(worst, abs(share - rho ** 2))
    report("3 closed-form cross-share", worst <= 1e-3,
           f"max |share - rho^2| {worst:.2e}")


def test_04_irf_matrix_power_fidelity():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(10):
        A = rng.normal(scale=0.4, size=(2, 2))
        A *= 0.85 / max(0.85, np.abs(np.linalg.eigvals(A)).max())
        responses = irf(make_fit([A], np.eye(2)), 12)
        power = np.eye(2)
        for h in range(13):
            worst = max(worst, np.abs(responses[h] - power).max())
            power = power @ A
    report("4 one-lag responses equal matrix powers", worst <= 1e-12,
           f"max deviation {worst:.2e}")


def test_05_stability_classifier():
    calm = make_fit([np.diag([0.36, 0.31])], np.eye(2))
    unit = make_fit([np.eye(2)], np.eye(2))
    ok = is_stable(calm) and not is_stable(unit)
    report("5 stability classifier", ok,
           "diag(0.36, 0.31) stable, identity unstable")


def test_06_granger_power_and_size():
    rng = np.random.default_rng(606)
    detections = 0
    for _ in range(200):
        x = rng.standard_normal(48)
        y = np.empty(48)
        y[0] = rng.standard_normal()
        y[1:] = 0.8 * x[:-1] + rng.standard_normal(47)
        detections += granger_test(y, x, 10)[0] < 0.01
    false_positives = 0
    for _ in range(2000):
        p, _, _ = granger_test(rng.standard_normal(48),
                               rng.standard_normal(48), 10)
        false_positives += p < 0.01
    power, size = detections / 200, false_positives / 2000
    report("6 Granger power/size", power >= 0.95 and size <= 0.03,
           f"power {power:.3f}, size {size:.4f}")


def test_07_bic_lag_recovery():
    rng = np.random.default_rng(707)
    A1 = np.array([[0.4, 0.15], [0.1, 0.2]])
    A2 = np.array([[0.25, 0.0], [0.1, 0.2]])
    correct = sum(select_lag_bic(simulate_var([A1, A2], 2000, rng), 5) == 2
                  for _ in range(200))
    report("7 BIC lag recovery", correct >= 180,
           f"{correct}/200 selected the true order")


def test_08_tally_semantics():
    tie_day = tally([outcome_from_counts("2021-01-04", [5, 5, 2, 0, 0, 0])])
    ties_ok = (tie_day["s0"].top_influencer_days == 1
               and tie_day["s1"].top_influencer_days == 1
               and tie_day["s2"].top_influencer_days == 0)
    zero_day = tally([outcome_from_counts("2021-01-04", [0, 0, 0])])
    zeros_ok = all(t.top_influencer_days == 0 for t in zero_day.values())
    days = [outcome_from_counts(f"2021-03-{d + 1:02d}", [2, 0, 0])
            for d in range(74)]
    log_ok = tally(days)["s0"].times_log == pytest.approx(math.log(148))
    report("8 tally semantics", ties_ok and zeros_ok and log_ok,
           "ties increment together, zero days skip, times_log = ln(total)")


def test_09_stepwise_pruning():
    # fixture A: the duplicated signal pair with modest noise keeps OLS
    # feasible throughout, so the duplicate/stars behavior is exact
    one_dup = with_stars = cond_ok = 0
    for seed in range(50):
        rng = np.random.default_rng(9000 + seed)
        x = rng.standard_normal(41)
        X = np.column_stack([x, x, rng.standard_normal((41, 10))])
        names = ["sig_a", "sig_b"] + [f"noise_{i:03d}" for i in range(10)]
        y = 3.0 * x + rng.standard_normal(41)
        res = stepwise_prune(X, y, names)
        survivors = [c for c in res.columns if c.startswith("sig")]
        one_dup += len(survivors) == 1
        if len(survivors) == 1:
            with_stars += res.stars[res.columns.index(survivors[0])] == "***"
        cond_ok += (res.final_condition_number < 100
                    or len(res.columns) < 2)
    # fixture B: 150 pure-noise columns on 41 rows; the pruning loop
    # (condition stage for feasibility, then the p > 0.5 screen) must shed
    # at least 80% of them on average
    removal = []
    for seed in range(50):
        rng = np.random.default_rng(9500 + seed)
        x = rng.standard_normal(41)
        X = np.column_stack([x, x, rng.standard_normal((41, 150))])
        names = ["sig_a", "sig_b"] + [f"noise_{i:03d}" for i in range(150)]
        y = 3.0 * x + rng.standard_normal(41)
        res = stepwise_prune(X, y, names)
        survivors = sum(1 for c in res.columns if c.startswith("noise"))
        removal.append((150 - survivors) / 150)
        assert res.final_condition_number < 100 or len(res.columns) < 2
    mean_removal = float(np.mean(removal))
    ok = one_dup == 50 and with_stars == 50 and cond_ok == 50 \
        and mean_removal >= 0.80
    report("9 stepwise pruning", ok,
           f"one duplicate survives {one_dup}/50 with *** {with_stars}/50, "
           f"avg noise removal {mean_removal:.1%}")


def test_10_end_to_end_recovery():
    start = time.monotonic()
    leader = "syn.000001"
    successes = 0
    for seed in range(20):
        scenario = SyntheticScenario(seed=100 + seed, n_stocks=10, n_days=40)
        rep = recovery_experiment(scenario)
        successes += (rep.leader_ranks["significant001_bool"].get(leader) == 1
                      and rep.leader_ranks["sum_fevd"].get(leader) == 1
                      and rep.linked_validated)
    elapsed = time.monotonic() - start
    report("10 end-to-end recovery", successes >= 18 and elapsed < 600.0,
           f"{successes}/20 seeds, {elapsed:.0f}s")


def test_11_diagnostics_sanity():
    rng = np.random.default_rng(1111)
    dw = durbin_watson(rng.standard_normal(10_000))
    dw_ok = abs(dw - 2.0) <= 0.1
    jb_rejections = sum(jarque_bera(rng.standard_normal(1000))[1] < 0.05
                        for _ in range(1000))
    jb_rate = jb_rejections / 1000
    jb_ok = 0.03 <= jb_rate <= 0.07
    ar_rejections = 0
    for _ in range(500):
        x = np.empty(1000)
        x[0] = 0.0
        shocks = rng.standard_normal(1000)
        for t in range(1, 1000):
            x[t] = 0.5 * x[t - 1] + shocks[t]
        ar_rejections += adf_test(x, max_lag=4).reject_unit_root
    walk_rejections = sum(
        adf_test(rng.standard_normal(1000).cumsum(), max_lag=4).reject_unit_root
        for _ in range(500))
    adf_ok = ar_rejections >= 495 and walk_rejections <= 35
    report("11 diagnostics sanity", dw_ok and jb_ok and adf_ok,
           f"DW {dw:.3f}, JB rate {jb_rate:.3f}, ADF power "
           f"{ar_rejections}/500, ADF size {walk_rejections}/500")


def test_12_pipeline_determinism(tmp_path):
    scenario = SyntheticScenario(seed=55, n_stocks=8, n_days=5)
    data = tmp_path / "data"
    write_scenario(scenario, str(data))
    config = RunConfig(bars_path=str(data / "bars.csv"),
                       factors_path=str(data / "factors.csv"),
                       calendar_path=str(data / "calendar.csv"),
                       fundamentals_path=str(data / "fundamentals.csv"),
                       output_dir=str(tmp_path / "out"))

    def run_and_digest():
        run("all", config)
        out = {}
        for name in sorted(os.listdir(tmp_path / "out")):
            with open(tmp_path / "out" / name, "rb") as fh:
                out[name] = hashlib.sha256(fh.read()).hexdigest()
        return out

    first = run_and_digest()
    second = run_and_digest()
    report("12 pipeline determinism", first == second,
           f"{len(first)} artifacts byte-identical across reruns")
