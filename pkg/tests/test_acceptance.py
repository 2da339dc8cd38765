"""End-to-end acceptance checks for the whole pipeline.

Each test covers one acceptance criterion with pinned tolerances and
prints a single PASS line on success (visible with -rA / -s); a failed
assert is the corresponding FAIL.  The heavier scenarios (synthetic
recovery, VI-vs-MCMC, detection) use small but honest problem sizes so
the full file runs in a few minutes.
"""

import os
import time

import numpy as np
import pytest
from scipy.stats import ttest_ind

from epifield import (
    AmcmcConfig,
    IncubationParams,
    ModelContext,
    NoiseParams,
    OptimizerConfig,
    ParamVector,
    PriorSpec,
    QuadratureRule,
    RegionParams,
    VariationalState,
    crps,
    crps_ratio_and_fit,
    crps_samples,
    detect,
    fit_mfvi,
    load_region_graph,
    path_graph,
    predict_daily,
    run_amcmc,
    sample_ppt,
    synthetic_counts,
    zscore_features,
)
from epifield.checks import elbo_gradient_max_relerr, loglik_gradient_max_relerr
from epifield.data import smooth_counts
from epifield.likelihood import _batched_covariances
from epifield.surveillance import cluster_regions
from epifield.vi import elbo_grad_reparam, elbo_grad_score, mle_fit

from conftest import make_context, random_paramvector
from test_forecast import crps_bruteforce
from test_model import trapezoid_prediction
from test_surveillance import naive_complete_linkage, scipy_merge_sets

INC = IncubationParams()
QUAD = QuadratureRule.gauss_legendre(64)


def _push_median(state, ctx, slot):
    """Posterior-median constrained value of one parameter slot."""
    return float(ctx.transforms.forward(state.mu)[slot])


def test_criterion_1_gradient_correctness():
    """Analytic log-lik and ELBO gradients vs central finite differences."""
    t_start = time.monotonic()
    ctx, _ = make_context(n_regions=3, n_days=30, seed=11)
    rng = np.random.default_rng(101)
    worst_loglik = 0.0
    worst_elbo = 0.0
    for _ in range(20):
        pv = random_paramvector(rng, 3, day_start=ctx.day_grid[0])
        xhat = ctx.transforms.inverse(pv.values)
        worst_loglik = max(worst_loglik, loglik_gradient_max_relerr(ctx, xhat))
        state = VariationalState.around(xhat, sigma=0.05)
        worst_elbo = max(
            worst_elbo, elbo_gradient_max_relerr(ctx, state, n_samples=8, seed=int(rng.integers(1 << 30)))
        )
    elapsed = time.monotonic() - t_start
    assert worst_loglik < 1e-5
    assert worst_elbo < 1e-4
    assert elapsed < 60.0
    print(
        f"CRITERION 1 PASS: loglik grad rel err {worst_loglik:.2e} < 1e-5, "
        f"ELBO grad rel err {worst_elbo:.2e} < 1e-4, {elapsed:.1f}s < 60s"
    )


def test_criterion_2_quadrature_fidelity():
    """predict_daily vs a 1e5-node trapezoid oracle; long-horizon mass -> N."""
    rng = np.random.default_rng(202)
    grid = np.arange(1.0, 41.0)
    worst = 0.0
    for _ in range(50):
        p = RegionParams(
            t0=-rng.uniform(2.0, 15.0),
            N=rng.uniform(50.0, 5000.0),
            k=rng.uniform(2.05, 6.0),
            theta=rng.uniform(1.0, 15.0),
        )
        y = predict_daily(p, INC, grid, QUAD)
        oracle = trapezoid_prediction(p, INC, grid)
        scale = np.maximum(oracle, 1e-9 * oracle.max())
        worst = max(worst, float(np.max(np.abs(y - oracle) / scale)))
    assert worst < 1e-6

    p = RegionParams(t0=0.0, N=777.0, k=3.0, theta=8.0)
    total = predict_daily(p, INC, np.arange(1.0, 3001.0), QUAD).sum()
    mass_err = abs(total - p.N) / p.N
    assert mass_err < 1e-3
    print(
        f"CRITERION 2 PASS: quadrature rel err {worst:.2e} < 1e-6 on 50 sets, "
        f"mass rel err {mass_err:.2e} < 1e-3"
    )


def test_criterion_3_crps_exactness():
    """Closed-form CRPS vs brute-force CDF integration; degenerate case exact."""
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 80))
        samples = rng.normal(rng.uniform(-5, 5), rng.uniform(0.3, 4.0), size=n)
        y = rng.normal(0.0, 5.0)
        worst = max(worst, abs(crps_samples(samples, y) - crps_bruteforce(samples, y)))
    assert worst < 1e-3

    degenerate = abs(crps_samples(np.full(25, 4.0), 1.5) - 2.5)
    assert degenerate == 0.0
    print(
        f"CRITERION 3 PASS: CRPS vs brute force err {worst:.2e} < 1e-3 on 100 ensembles, "
        f"degenerate ensemble exact"
    )


def test_criterion_4_synthetic_recovery():
    """3-region synthetic with sigma_m = 0.1: N, t0 recovery and IQR coverage."""
    t_start = time.monotonic()
    graph = path_graph(("r0", "r1", "r2"))
    grid = np.arange(1.0, 101.0)
    regions = [
        RegionParams(t0=-12.0, N=6000.0, k=3.0, theta=7.0),
        RegionParams(t0=-8.0, N=3000.0, k=2.5, theta=9.0),
        RegionParams(t0=-10.0, N=1500.0, k=3.5, theta=6.0),
    ]
    truth = ParamVector.from_parts(regions, NoiseParams(1.0, 0.5, 1.0, 0.1))
    obs, _ = synthetic_counts(truth, graph, INC, grid, seed=2)
    ctx = ModelContext(graph=graph, day_grid=grid, y_obs=obs, incubation=INC, prior=PriorSpec())
    state, _ = fit_mfvi(ctx, OptimizerConfig(step_size=0.02, max_iters=1200, n_samples=10, seed=0))

    est = ctx.transforms.forward(state.mu)
    n_errs, t0_errs = [], []
    for r, p in enumerate(regions):
        t0_errs.append(abs(est[4 * r] - p.t0))
        n_errs.append(abs(est[4 * r + 1] - p.N) / p.N)
    assert max(n_errs) < 0.10
    assert max(t0_errs) < 3.0

    ens = sample_ppt(state, ctx, grid, n_samples=200, seed=1)
    bands = ens.bands()
    covered = (obs >= bands["p25"]) & (obs <= bands["p75"])
    coverage = float(covered.mean())
    assert 0.40 <= coverage <= 0.60
    elapsed = time.monotonic() - t_start
    assert elapsed < 300.0
    print(
        f"CRITERION 4 PASS: N rel err {max(n_errs):.3f} < 0.10, "
        f"t0 err {max(t0_errs):.2f}d < 3d, IQR coverage {coverage:.2f} in [0.40, 0.60], "
        f"{elapsed:.0f}s < 300s"
    )


def _vi_vs_amcmc(regions, noise, grid, data_seed):
    graph = path_graph(tuple(f"r{i}" for i in range(len(regions))))
    truth = ParamVector.from_parts(regions, noise)
    obs, _ = synthetic_counts(truth, graph, INC, grid, seed=data_seed)
    ctx = ModelContext(graph=graph, day_grid=grid, y_obs=obs, incubation=INC, prior=PriorSpec())

    state, _ = fit_mfvi(ctx, OptimizerConfig(step_size=0.015, max_iters=1500, n_samples=10, seed=0))
    x0, _ = mle_fit(ctx)
    chain = run_amcmc(ctx, x0, AmcmcConfig(n_total=20_000, seed=1))

    ens_vi = sample_ppt(state, ctx, grid, n_samples=200, seed=2)
    ens_mc = sample_ppt(chain, ctx, grid, n_samples=200, seed=3)
    med_vi = ens_vi.bands()["p50"]
    med_mc = ens_mc.bands()["p50"]
    rel = np.abs(med_vi - med_mc) / np.maximum(np.abs(med_mc), 1.0)
    agree = (rel <= 0.10).mean(axis=0)  # per region fraction of days

    _, c_vi = crps(ens_vi, obs)
    _, c_mc = crps(ens_mc, obs)
    crps_gap = np.abs(c_vi - c_mc) / c_mc
    return agree, crps_gap


def test_criterion_5_mfvi_vs_amcmc():
    """MFVI and adaptive MCMC agree on posterior-predictive medians and CRPS."""
    # Single region: the graph has one (isolated) node, so the spatial noise
    # component is switched off in the generating truth.
    agree1, gap1 = _vi_vs_amcmc(
        [RegionParams(t0=-10.0, N=4000.0, k=3.0, theta=7.0)],
        NoiseParams(0.0, 0.5, 1.0, 0.1),
        np.arange(1.0, 61.0),
        data_seed=0,
    )
    agree2, gap2 = _vi_vs_amcmc(
        [
            RegionParams(t0=-10.0, N=4000.0, k=3.0, theta=7.0),
            RegionParams(t0=-7.0, N=2500.0, k=2.5, theta=8.0),
        ],
        NoiseParams(1.0, 0.5, 1.0, 0.1),
        np.arange(1.0, 61.0),
        data_seed=0,
    )
    for agree, gap in ((agree1, gap1), (agree2, gap2)):
        assert np.all(agree >= 0.80)
        assert np.all(gap < 0.10)
    print(
        f"CRITERION 5 PASS: median agreement 1-region {agree1.min():.3f}, "
        f"2-region {agree2.min():.3f} (both >= 0.80 of days within 10%); "
        f"CRPS rel gap {max(gap1.max(), gap2.max()):.3f} < 0.10"
    )


def test_criterion_6_estimator_comparison():
    """Reparametrization vs score-function gradients: variance and mean equality."""
    ctx, _ = make_context(n_regions=1, n_days=40, seed=6)
    x0, _ = mle_fit(ctx)
    state = VariationalState.around(x0, sigma=0.05)
    d = state.dim
    n_rep = 400
    n_samples = 20
    g_rep = np.empty((n_rep, 2 * d))
    g_sco = np.empty((n_rep, 2 * d))
    for i in range(n_rep):
        _, gm, gr = elbo_grad_reparam(state, ctx, n_samples, seed=[7, i])
        g_rep[i] = np.concatenate([gm, gr])
        _, gm, gr = elbo_grad_score(state, ctx, n_samples, seed=[8, i])
        g_sco[i] = np.concatenate([gm, gr])

    var_rep = g_rep.var(axis=0, ddof=1)
    var_sco = g_sco.var(axis=0, ddof=1)
    ratio = var_sco / var_rep
    assert np.all(ratio >= 10.0)

    # Two-sample Welch test per coordinate with a Bonferroni-corrected
    # alpha = 0.01: equality passes when no coordinate rejects.
    pvals = np.array([ttest_ind(g_rep[:, j], g_sco[:, j], equal_var=False).pvalue for j in range(2 * d)])
    alpha = 0.01 / (2 * d)
    assert np.all(pvals >= alpha)
    print(
        f"CRITERION 6 PASS: score/reparam variance ratio min {ratio.min():.1f} >= 10, "
        f"mean-equality min p-value {pvals.min():.3f} >= Bonferroni alpha {alpha:.1e}"
    )


def test_criterion_7_detection_performance():
    """Second-wave alarms within a week; no false alarms on stationary data."""
    graph = path_graph(("r0", "r1", "r2"))
    fit_grid = np.arange(1.0, 76.0)
    full_grid = np.arange(1.0, 90.0)  # 75 fit days + 14 forecast days
    regions = [
        RegionParams(t0=-12.0, N=6000.0, k=3.0, theta=7.0),
        RegionParams(t0=-8.0, N=3000.0, k=2.5, theta=9.0),
        RegionParams(t0=-10.0, N=1500.0, k=3.5, theta=6.0),
    ]
    truth = ParamVector.from_parts(regions, NoiseParams(1.0, 0.5, 1.0, 0.1))
    obs_fit, _ = synthetic_counts(truth, graph, INC, fit_grid, seed=2)
    ctx = ModelContext(graph=graph, day_grid=fit_grid, y_obs=obs_fit, incubation=INC, prior=PriorSpec())
    state, _ = fit_mfvi(ctx, OptimizerConfig(step_size=0.015, max_iters=1200, n_samples=10, seed=0))
    ens = sample_ppt(state, ctx, full_grid, n_samples=200, seed=1)

    y_true = np.column_stack([predict_daily(r, INC, full_grid, QUAD) for r in regions])
    # 3x-amplitude second wave starting on the first forecast day.
    wave = np.column_stack(
        [predict_daily(RegionParams(t0=75.0, N=3.0 * r.N, k=2.0, theta=3.0), INC, full_grid, QUAD) for r in regions]
    )
    fc = slice(75, 89)

    def replicate(seed, with_wave):
        y = y_true + (wave if with_wave else 0.0)
        _, chol, _ = _batched_covariances(graph, truth.noise, y)
        rng = np.random.default_rng(seed)
        noise = np.einsum("irs,is->ir", chol, rng.standard_normal(y.shape))
        observed = np.maximum(y + noise, 0.0)
        return detect(ens, smooth_counts(observed[fc], 7), forecast_start=75)

    hits = 0
    for s in range(100):
        result = replicate(s, with_wave=True)
        first = min((day for (_, day, _) in result.alarms), default=10**9)
        hits += first <= 6  # alarm within the first 7 forecast days
    clean = sum(not replicate(10_000 + s, with_wave=False).alarms for s in range(500))
    assert hits >= 95
    assert clean >= 495
    print(
        f"CRITERION 7 PASS: wave alarmed within 7 days in {hits}/100 (>= 95), "
        f"no false alarm in {clean}/500 stationary replicates (>= 495)"
    )


def test_criterion_8_clustering_oracle():
    """Merge sequence matches a naive O(R^3) agglomeration; Z-score invariance."""
    rng = np.random.default_rng(808)
    for _ in range(50):
        X = np.column_stack(
            [rng.uniform(31.0, 37.0, 10), rng.uniform(-109.0, -103.0, 10), rng.uniform(0.0, 3.0, 10)]
        )
        _, Z = cluster_regions(X, cut=0.6)
        oracle = naive_complete_linkage(zscore_features(X))
        got = scipy_merge_sets(Z, 10)
        for (h_o, set_o), (h_g, set_g) in zip(oracle, got):
            assert set_o == set_g
            assert h_g == pytest.approx(h_o, rel=1e-10)

        scale = rng.uniform(0.5, 4.0, 3)
        shift = rng.uniform(-10.0, 10.0, 3)
        assert np.allclose(zscore_features(X * scale + shift), zscore_features(X), atol=1e-9)
    print(
        "CRITERION 8 PASS: merge sequences match the naive oracle on 50 "
        "10-region instances; Z-scoring is affine invariant"
    )


NM_CASES = os.environ.get("EPIFIELD_NM_CASES", "")


@pytest.mark.skipif(
    not os.path.isfile(NM_CASES),
    reason="tracked benchmark, not a gate: set EPIFIELD_NM_CASES to a New Mexico "
    "county daily-cases CSV to run the real-data loose check",
)
def test_criterion_9_real_data_benchmark():
    """Loose real-data check against published per-county CRPS and the
    CRPS-vs-total power law; runs only when the external dataset is present."""
    import datetime
    import importlib.resources

    from epifield import ingest_cases

    fix = importlib.resources.files("epifield") / "fixtures"
    graph = load_region_graph(str(fix / "nm_regions.csv"), str(fix / "nm_edges.csv"))
    data = ingest_cases(NM_CASES, graph).window(
        datetime.date(2020, 6, 1), datetime.date(2020, 9, 15)
    )

    targets = {"bernalillo": 10.75, "santa fe": 2.54, "valencia": 1.70}
    idx = [graph.region_ids.index(r) for r in targets]
    sub = path_graph(tuple(targets))
    grid = np.arange(1.0, data.n_days + 1.0)
    ctx = ModelContext(
        graph=sub, day_grid=grid, y_obs=smooth_counts(data.counts[:, idx], 7),
        incubation=INC, prior=PriorSpec(),
    )
    state, _ = fit_mfvi(ctx, OptimizerConfig(step_size=0.01, max_iters=3000, n_samples=50, seed=0))
    ens = sample_ppt(state, ctx, grid, n_samples=200, seed=1)
    _, C = crps(ens, data.counts[:, idx])
    for r, (name, ref) in enumerate(targets.items()):
        assert abs(C[r] - ref) / ref < 0.25, name

    # 33-county fit for the CRPS-vs-total-cases scaling exponent.
    ctx_all = ModelContext(
        graph=graph, day_grid=grid, y_obs=smooth_counts(data.counts, 7),
        incubation=INC, prior=PriorSpec(),
    )
    state_all, _ = fit_mfvi(ctx_all, OptimizerConfig(step_size=0.01, max_iters=3000, n_samples=50, seed=0))
    ens_all = sample_ppt(state_all, ctx_all, grid, n_samples=200, seed=1)
    _, C_all = crps(ens_all, data.counts)
    fit = crps_ratio_and_fit(C_all, data.counts.sum(axis=0))
    slope = fit["slope"]
    assert -0.40 <= slope <= -0.16
    print(f"CRITERION 9 PASS: per-county CRPS within 25%, power-law slope {slope:.3f}")
