"""End-to-end acceptance criteria at reduced replicate counts.

Every run uses master seed 2018. Run with ``pytest -m acceptance``; the
terminal summary lists one PASS/FAIL line per criterion.
"""

import time
import warnings

import numpy as np
import pytest
from scipy import stats

from ensvs.cli import main as cli_main
from ensvs.ensemble import EnsembleConfig, expected_instance_bias, run_ensemble
from ensvs.imputation import fit_em
from ensvs.selectors import InstanceDesign, SelectorConfig, select_knockoff
from ensvs.simulation import (
    MethodSpec,
    SimulationConfig,
    apply_mar,
    apply_mcar,
    compound_symmetry,
    generate_dataset,
    run_experiment,
)

pytestmark = pytest.mark.acceptance

SEED = 2018


def _cell(rows, variant, threshold=""):
    ok = [r for r in rows if r["variant"] == variant and r["threshold"] == threshold and r["status"] == "ok"]
    return ok


def _mean(rows, key):
    return float(np.mean([float(r[key]) for r in rows]))


def _timed_experiment(grid, T):
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = run_experiment(grid, T=T, master_seed=SEED)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def low_complete_lasso():
    sim = SimulationConfig(n=200, p=100, rho=0.0, snr=4.0)
    grid = [
        (sim, MethodSpec("algorithm", "lasso", k=6, B=2000, threshold=0.95)),
        (sim, MethodSpec("algorithm", "lasso", k=6, B=2000, threshold="cv")),
        (sim, MethodSpec("standard", "lasso")),
    ]
    return _timed_experiment(grid, T=20)


def test_c01_standard_vs_algorithm_low_dim(low_complete_lasso, report_criterion):
    res, elapsed = low_complete_lasso
    alg = _cell(res.rows, "algorithm", "0.95")
    std = _cell(res.rows, "standard")
    assert len(alg) == 20 and len(std) == 20
    std_fp, alg_fp, alg_tp = _mean(std, "fp"), _mean(alg, "fp"), _mean(alg, "tp")
    ok = std_fp >= 8 and alg_fp <= 1.5 and alg_tp >= 6 and elapsed <= 600
    report_criterion(1, ok, f"standard lasso FP {std_fp:.2f} (>= 8); algorithm FP {alg_fp:.2f} (<= 1.5), "
                            f"TP {alg_tp:.2f} (>= 6); {elapsed:.0f}s (<= 600s)")
    assert std_fp >= 8
    assert alg_tp >= 6
    assert elapsed <= 600
    assert alg_fp <= 1.5


def test_c02_table1_knockoff_mcar(report_criterion):
    sim = SimulationConfig(n=200, p=100, rho=0.0, snr=4.0, mechanism="mcar", missing_rate=0.2)
    res, elapsed = _timed_experiment([(sim, MethodSpec("algorithm", "knockoff", k=6, B=2000))], T=20)
    rows = _cell(res.rows, "algorithm", "0.95")
    tp, fp = _mean(rows, "tp"), _mean(rows, "fp")
    ok = len(rows) == 20 and abs(tp - 7.43) <= 1.0 and abs(fp - 1.14) <= 1.0 and elapsed <= 900
    report_criterion(2, ok, f"knockoff MCAR TP {tp:.2f} (7.43 +- 1), FP {fp:.2f} (1.14 +- 1); {elapsed:.0f}s (<= 900s)")
    assert len(rows) == 20
    assert abs(tp - 7.43) <= 1.0
    assert abs(fp - 1.14) <= 1.0
    assert elapsed <= 900


def test_c03_complete_case_lasso_collapse(report_criterion):
    sim = SimulationConfig(n=200, p=100, rho=0.0, snr=2.0, mechanism="mar", missing_rate=0.2)
    res, _ = _timed_experiment([(sim, MethodSpec("standard", "lasso"))], T=20)
    # a baseline that cannot run selects nothing
    tps = [float(r["tp"]) if r["status"] == "ok" else 0.0 for r in res.rows]
    failed = sum(r["status"] != "ok" for r in res.rows)
    tp = float(np.mean(tps))
    report_criterion(3, tp <= 1.5, f"complete-case lasso MAR TP {tp:.2f} (<= 1.5), FN {8 - tp:.2f}; "
                                   f"{failed} of 20 replicates could not run")
    assert tp <= 1.5


def test_c04_high_dim_stepwise_mcar(report_criterion):
    sim = SimulationConfig(n=200, p=300, rho=0.0, snr=4.0, mechanism="mcar", missing_rate=0.2)
    res, elapsed = _timed_experiment([(sim, MethodSpec("algorithm", "stepwise", k=10, B=3000))], T=10)
    rows = _cell(res.rows, "algorithm", "0.95")
    tp, fp = _mean(rows, "tp"), _mean(rows, "fp")
    ok = len(rows) == 10 and abs(tp - 6.77) <= 1.5 and abs(fp - 0.80) <= 1.5 and elapsed <= 1800
    report_criterion(4, ok, f"high-dim stepwise MCAR TP {tp:.2f} (6.77 +- 1.5), FP {fp:.2f} (0.80 +- 1.5); "
                            f"{elapsed:.0f}s (<= 1800s)")
    assert abs(tp - 6.77) <= 1.5
    assert elapsed <= 1800
    assert abs(fp - 0.80) <= 1.5


def test_c05_knockoff_fdr_global_null(report_criterion):
    cfg = SelectorConfig("knockoff_fixed_x", knockoff_plus=True, knockoff_fdr_q=0.1)
    plain = SelectorConfig("knockoff_fixed_x", knockoff_plus=False, knockoff_fdr_q=0.1)
    ss = np.random.SeedSequence(SEED)
    fdp, fdp_plain = [], []
    for rep, child in enumerate(ss.spawn(500)):
        rng = np.random.default_rng(child)
        design = InstanceDesign(rng.standard_normal((200, 6)), rng.standard_normal(200))
        # every variable is null, so the FDP is 1 whenever anything is selected
        fdp.append(float(select_knockoff(design, cfg, seed=rep).any()))
        fdp_plain.append(float(select_knockoff(design, plain, seed=rep).any()))
    fdr = float(np.mean(fdp))
    report_criterion(5, fdr <= 0.14, f"knockoff+ FDR {fdr:.3f} (<= 0.14) over 500 global-null instances; "
                                     f"plain knockoff {np.mean(fdp_plain):.3f} for reference")
    assert fdr <= 0.14


def test_c06_ratio_variance_guideline(report_criterion):
    d, _ = generate_dataset(SimulationConfig(n=200, p=100, rho=0.0, snr=4.0), np.random.SeedSequence(SEED))
    k = 6
    # a partition has ceil(p/k) blocks and each variable sits in exactly one of them
    B = 100 * int(np.ceil(d.p / k))
    runs = [run_ensemble(d, EnsembleConfig(k=k, B=B, master_seed=SEED + i)) for i in range(50)]
    appeared = np.array([r.tally.appeared for r in runs])
    assert appeared.min() == appeared.max() == 100
    ratios = np.array([r.ratios for r in runs])
    var = ratios.var(axis=0, ddof=1)
    worst = float(var.max())
    # context: each ratio should be a Binomial(100, pi_j) proportion given the data
    pi = ratios.mean(axis=0)
    live = (pi > 0.02) & (pi < 0.98)
    excess = float(np.mean(var[live] / (pi[live] * (1 - pi[live]) / 100)))
    report_criterion(6, worst <= 0.00375, f"max sample variance of r_j {worst:.5f} (<= 0.00375) over 50 "
                                          f"ensembles, every variable in exactly 100 instances; "
                                          f"mean variance / Binomial variance {excess:.3f} over {live.sum()} variables")
    assert worst <= 0.00375


def test_c07_instance_bias_diagnostic(report_criterion):
    rng = np.random.default_rng(SEED)
    x = rng.multivariate_normal(np.zeros(4), compound_symmetry(4, 0.4), size=200)
    beta = np.array([1.0, 1.0, 0.0, 0.0])
    draws = 10_000
    noise = rng.standard_normal((draws, 200))
    y = x @ beta + noise
    worst = 0.0
    for subset in ([0], [0, 2], [1, 2, 3]):
        bias, cov = expected_instance_bias(x, beta, subset)
        xs = x[:, subset]
        est = np.linalg.solve(xs.T @ xs, xs.T @ y.T).T - beta[subset]
        mc_bias = est.mean(axis=0)
        mc_var = est.var(axis=0, ddof=1)
        se_bias = np.sqrt(mc_var / draws)
        se_var = mc_var * np.sqrt(2.0 / (draws - 1))
        z = max(np.max(np.abs(mc_bias - bias) / se_bias), np.max(np.abs(mc_var - np.diag(cov)) / se_var))
        worst = max(worst, float(z))
    q = np.linalg.qr(x)[0] * np.sqrt(200)
    ortho = float(np.abs(expected_instance_bias(q, beta, [0, 2])[0]).max())
    ok = worst <= 3 and ortho <= 1e-12
    report_criterion(7, ok, f"max |MC - formula| {worst:.2f} MC standard errors (<= 3); "
                            f"orthogonal-design bias {ortho:.1e} (<= 1e-12)")
    assert worst <= 3
    assert ortho <= 1e-12


def test_c08_imputation_recovery(report_criterion):
    # tolerances apply to the first dataset; monotonicity to all 20
    ss = np.random.SeedSequence(SEED)
    mean_err, rho_err = [], []
    monotone = True
    for child in ss.spawn(20):
        rng = np.random.default_rng(child)
        x = rng.multivariate_normal(np.zeros(4), compound_symmetry(4, 0.4), size=1000)
        mask = rng.random(x.shape) < 0.2
        fit = fit_em(x, mask)
        sd = np.sqrt(np.diag(fit.covariance))
        corr = fit.covariance / np.outer(sd, sd)
        mean_err.append(float(np.abs(fit.mean).max()))
        rho_err.append(abs(float(corr[np.triu_indices(4, 1)].mean()) - 0.4))
        trace = np.array(fit.loglik_trace)
        monotone &= bool(np.all(np.diff(trace) >= -1e-9 * np.abs(trace[:-1])))
    ok = mean_err[0] <= 0.08 and rho_err[0] <= 0.08 and monotone
    report_criterion(8, ok, f"max |mean| {mean_err[0]:.3f} (<= 0.08), |rho_hat - 0.4| {rho_err[0]:.3f} (<= 0.08); "
                            f"log-likelihood monotone in all 20 runs: {monotone}; "
                            f"20-run maxima {max(mean_err):.3f}, {max(rho_err):.3f}")
    assert mean_err[0] <= 0.08
    assert rho_err[0] <= 0.08
    assert monotone


def test_c09_mechanism_calibration(report_criterion):
    sim = SimulationConfig(n=200, p=100, rho=0.0, snr=4.0)
    ss = np.random.SeedSequence(SEED)
    mcar, mar, pvals = [], [], []
    for child in ss.spawn(20):
        data_seed, mcar_seed, mar_seed, perm_seed = child.spawn(4)
        d, _ = generate_dataset(sim, data_seed)
        mcar.append(apply_mcar(d, 0.2, seed=mcar_seed).missing_fraction)
        dm = apply_mar(d, 0.2, seed=mar_seed)
        mar.append(dm.missing_fraction)
        per_row = dm.mask.sum(axis=1)
        obs = stats.spearmanr(d.y, per_row).statistic
        rng = np.random.default_rng(perm_seed)
        null = np.array([stats.spearmanr(rng.permutation(d.y), per_row).statistic for _ in range(999)])
        pvals.append((1 + np.sum(null >= obs)) / 1000)
    mcar_rate, mar_rate, worst_p = float(np.mean(mcar)), float(np.mean(mar)), float(max(pvals))
    ok = abs(mcar_rate - 0.2) <= 0.015 and abs(mar_rate - 0.2) <= 0.015 and worst_p < 0.01
    report_criterion(9, ok, f"MCAR rate {mcar_rate:.4f}, MAR rate {mar_rate:.4f} (0.2 +- 0.015, mean of 20 "
                            f"200x100 datasets; single-dataset MAR range {min(mar):.3f}-{max(mar):.3f}); "
                            f"max permutation p {worst_p:.3f} (< 0.01)")
    assert abs(mcar_rate - 0.2) <= 0.015
    assert abs(mar_rate - 0.2) <= 0.015
    assert worst_p < 0.01


def test_c10_cv_threshold(low_complete_lasso, report_criterion):
    res, _ = low_complete_lasso
    cv = _cell(res.rows, "algorithm", "cv")
    fixed = _cell(res.rows, "algorithm", "0.95")
    median_t = float(np.median([float(r["chosen_threshold"]) for r in cv]))
    fp_cv, fp_fixed = _mean(cv, "fp"), _mean(fixed, "fp")
    ok = median_t >= 0.95 and fp_cv <= fp_fixed
    report_criterion(10, ok, f"median CV threshold {median_t:.3f} (>= 0.95); FP under CV {fp_cv:.2f} "
                             f"<= FP at 0.95 {fp_fixed:.2f}")
    assert median_t >= 0.95
    assert fp_cv <= fp_fixed


def test_c11_determinism_across_threads(tmp_path, report_criterion):
    runs = {
        # criterion 3 in full, and criterion 2 at reduced T and B
        "c03": ["--p", "100", "--rho", "0", "--snr", "2", "--mechanism", "mar", "--rate", "0.2", "--T", "20",
                "--selector", "lasso", "--variant", "standard"],
        "c02": ["--p", "100", "--rho", "0", "--snr", "4", "--mechanism", "mcar", "--rate", "0.2", "--T", "2",
                "--selector", "knockoff", "--variant", "algorithm", "--k", "6", "--B", "300", "--r", "0.95,cv"],
    }
    identical = True
    for name, args in runs.items():
        for threads in ("1", "2"):
            code = cli_main(["simulate", *args, "--seed", str(SEED), "--threads", threads,
                             "--out", str(tmp_path / f"{name}_{threads}"), "-q"])
            assert code == 0
        for fname in ("results.csv", "aggregate.json"):
            a = (tmp_path / f"{name}_1" / fname).read_bytes()
            b = (tmp_path / f"{name}_2" / fname).read_bytes()
            identical &= a == b
    report_criterion(11, identical, "results.csv and aggregate.json byte-identical for --threads 1 and 2")
    assert identical
