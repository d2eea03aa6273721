"""Acceptance criteria 1-9.  Each test records one PASS/FAIL line per
criterion (printed in the terminal summary) and then asserts it."""
import math
import time

import numpy as np
import pytest
from scipy import stats
from scipy.special import zeta

from slowbond.cli import main
from slowbond.config import ExperimentConfig
from slowbond.harness import compare_ensemble, predicted_flux, run_experiment, simulate_stage, solve_stage
from slowbond.kernel import BarrierSpec, KernelSpec, build_kernel, untruncated_constants
from slowbond.observables import crossing_flux
from slowbond.pde import PdeProblem, self_convergence, solve
from slowbond.profiles import BumpProfile, Constant, Step
from slowbond.simulator import SLOW_LR, SLOW_RL, ModelConfig, TrajectoryPlan, run_ensemble
from slowbond.weakform import (SUITE_KINDS, Bump, TestFunction, convergence_suite, default_test_function,
                               eval_F_dif, eval_F_rob, weak_test_function)

pytestmark = pytest.mark.acceptance

N_BIG = 512
TIMES = (0.05, 0.1)
L1_TOL = 0.05


# -- 1. kernel constants ------------------------------------------------------

def test_criterion_1_kernel_constants(criterion):
    start = time.perf_counter()
    c, sigma2, m = untruncated_constants(3.0, 10**5)
    elapsed = time.perf_counter() - start
    exact_sigma2 = zeta(2) / zeta(4)
    exact_m = zeta(3) / (2 * zeta(4))
    err = max(abs(sigma2 / exact_sigma2 - 1), abs(m / exact_m - 1), abs(c * 2 * zeta(4) - 1))
    ok = err < 1e-6 and elapsed < 1.0
    criterion(1, ok, f"sigma2={sigma2:.8f} m={m:.8f} max rel err {err:.1e} (<1e-6) in {elapsed:.3f}s (<1s)")
    assert ok


# -- 2-4. particle system against the PDE ---------------------------------------

def experiment(**changes):
    base = ExperimentConfig(n_list=(N_BIG,), replicas=50, snapshot_times=TIMES, horizon=0.1, window_factor=2.0,
                            profile="step(1,0)")
    return base.replace(**changes).validate()


@pytest.fixture(scope="module")
def free_beta_half():
    cfg = experiment(barrier=BarrierSpec("full", 1.0, 0.5), n_list=(128, 256, N_BIG))
    start = time.perf_counter()
    report = run_experiment(cfg, emit=False)
    return report, time.perf_counter() - start


def test_criterion_2_free_regime(criterion, free_beta_half):
    report, elapsed = free_beta_half
    cfg = experiment(kernel=KernelSpec.long_range(3.0), barrier=BarrierSpec("bridges", 1.0, 10.0, ((-1, 0),)))
    start = time.perf_counter()
    bridge = run_experiment(cfg, emit=False)
    bridge_time = time.perf_counter() - start
    ok = True
    for name, rep, secs in (("beta=0.5", report, elapsed), ("bridge {-1,0} gamma=3 beta=10", bridge, bridge_time)):
        assert rep.regime.name == "free"
        l1 = [rep.row(N_BIG, t).l1 for t in TIMES]
        good = max(l1) <= L1_TOL and secs <= 600
        ok &= good
        criterion(2, good, f"{name}: L1 at t={TIMES} = {l1[0]:.4f}, {l1[1]:.4f} (<= {L1_TOL}) in {secs:.0f}s")
    assert ok


def test_free_regime_l1_non_increasing_in_n(free_beta_half):
    report, _ = free_beta_half
    for t in TIMES:
        rows = [report.row(n, t) for n in (128, 256, N_BIG)]
        for a, b in zip(rows, rows[1:]):
            assert b.l1 <= a.l1 + max(a.l1_se, b.l1_se), (t, a, b)


def test_criterion_3_neumann_regime(criterion):
    cfg = experiment(barrier=BarrierSpec("full", 1.0, 2.0))
    start = time.perf_counter()
    regime, solution = solve_stage(cfg)
    ensemble = simulate_stage(cfg, N_BIG)
    rows, _ = compare_ensemble(ensemble, solution, regime, cfg, N_BIG)
    elapsed = time.perf_counter() - start
    assert regime.name == "neumann"
    jumps = [abs(r.jump) for r in rows]
    halves = [max(r.l1_left, r.l1_right) for r in rows]
    crossings = int(ensemble.crossings[:, -1, [SLOW_LR, SLOW_RL]].sum(axis=1).max())
    ok = all(0.9 <= j <= 1.1 for j in jumps) and max(halves) <= L1_TOL and crossings <= 5 and elapsed <= 600
    criterion(3, ok, f"|jump| {min(jumps):.3f}..{max(jumps):.3f} in [0.9,1.1]; per-half L1 <= {max(halves):.4f} "
                     f"(<= {L1_TOL}); max crossings/replica {crossings} (<= 5) in {elapsed:.0f}s")
    assert ok


def test_criterion_4_robin_regime(criterion):
    cfg = experiment(kernel=KernelSpec.nearest_neighbor(), barrier=BarrierSpec("full", 1.0, 1.0), replicas=100,
                     log_events=True)
    start = time.perf_counter()
    regime, solution = solve_stage(cfg)
    ensemble = simulate_stage(cfg, N_BIG)
    rows, _ = compare_ensemble(ensemble, solution, regime, cfg, N_BIG)
    T = cfg.horizon
    flux = np.array([crossing_flux(ev, N_BIG, [T]).cumulative_net_crossings[0] for ev in ensemble.events])
    elapsed = time.perf_counter() - start
    assert regime.name == "robin" and regime.kappa == pytest.approx(1.0)
    predicted = predicted_flux(solution, regime, T)
    rel = abs(flux.mean() / predicted - 1)
    l1 = max(r.l1 for r in rows)
    ok = l1 <= L1_TOL and rel <= 0.15 and elapsed <= 1200
    criterion(4, ok, f"L1 <= {l1:.4f} (<= {L1_TOL}); flux {flux.mean():.5f} +- {flux.std(ddof=1) / math.sqrt(flux.size):.5f}"
                     f" vs PDE {predicted:.5f}, rel err {rel:.3f} (<= 0.15) in {elapsed:.0f}s")
    assert ok


# -- 5. PDE solver ---------------------------------------------------------------

def test_criterion_5_pde_order(criterion):
    ok = True
    cases = [("free", 0.0, Step(1.0, 0.0)), ("robin", 1.0, Step(1.0, 0.0)), ("neumann", 0.0, BumpProfile(0.0, 0.1, 0.5))]
    for regime, kappa, g in cases:
        errors, ratios = self_convergence(PdeProblem(regime, 1.0, g, du=1 / 256, kappa=kappa))
        good = all(3.5 <= r <= 4.5 for r in ratios)
        ok &= good
        criterion(5, good, f"{regime} ratio {ratios[0]:.2f} on {g.descriptor}")
    # step data is an exact stationary solution of the neumann problem
    neu = solve(PdeProblem("neumann", 1.0, Step(1.0, 0.0), du=1 / 256))
    exact = np.max(np.abs(neu.values - neu.values[0]))
    ok &= criterion(5, exact <= 1e-12, f"neumann step data unchanged to {exact:.1e}")
    drift = 0.0
    for regime, kappa, g in cases + [("neumann", 0.0, Step(1.0, 0.0))]:
        mass = solve(PdeProblem(regime, 1.0, g, du=1 / 256, kappa=kappa)).mass()
        drift = max(drift, float(np.max(np.abs(mass - mass[0]))))
    ok &= criterion(5, drift <= 1e-8, f"mass drift {drift:.1e} (<= 1e-8)")
    g = BumpProfile(0.2, 0.1, 0.5)
    a = solve(PdeProblem("robin", 1.0, g, du=1 / 256, kappa=0.0))
    b = solve(PdeProblem("neumann", 1.0, g, du=1 / 256))
    gap = float(np.max(np.abs(a.values - b.values)))
    ok &= criterion(5, gap <= 1e-12, f"robin(0) vs neumann {gap:.1e} (<= 1e-12)")
    assert ok


# -- 6. weak-form residuals ------------------------------------------------------

def test_criterion_6_weak_residuals(criterion):
    grids = (1 / 256, 1 / 512, 1 / 1024)
    G_dif, G_rob = weak_test_function("dif"), weak_test_function("rob")
    free = [solve(PdeProblem("free", 1.0, Step(1, 0), du=du)) for du in grids]
    robin = [solve(PdeProblem("robin", 1.0, Step(1, 0), du=du, kappa=1.0)) for du in grids]
    r_dif = [abs(eval_F_dif(s, G_dif).value) for s in free]
    r_rob = [abs(eval_F_rob(s, G_rob, 1.0).value) for s in robin]
    ok = True
    for name, res in (("F_Dif", r_dif), ("F_Rob", r_rob)):
        ratios = [a / b for a, b in zip(res, res[1:])]
        good = all(3.5 <= r <= 4.5 for r in ratios)
        ok &= criterion(6, good, f"{name} {res[-1]:.1e} at du=1/1024, ratios {', '.join(f'{r:.2f}' for r in ratios)}")
    # negative controls on the finest grid
    neumann = solve(PdeProblem("neumann", 1.0, Step(1, 0), du=grids[-1]))
    G_slope = TestFunction.continuous((Bump(0.1, 0.6), 0))
    wrong_regime = abs(eval_F_dif(neumann, G_slope).value)
    matched = abs(eval_F_dif(free[-1], G_slope).value)
    ok &= criterion(6, wrong_regime >= 10 * matched,
                    f"neumann in F_Dif {wrong_regime:.1e} vs matched {matched:.1e} (>= 10x)")
    wrong_kappa = abs(eval_F_rob(robin[-1], G_rob, 2.0).value)
    ok &= criterion(6, wrong_kappa >= 10 * r_rob[-1], f"kappa'=2 in F_Rob {wrong_kappa:.1e} vs {r_rob[-1]:.1e} (>= 10x)")
    assert ok


# -- 7. discrete convergence suites ------------------------------------------------

SUITE_N = (32, 64, 128, 256)
KERNELS = {"nn": KernelSpec.nearest_neighbor(), "gamma3": KernelSpec.long_range(3.0)}


@pytest.mark.parametrize("kind", [k for k in SUITE_KINDS if k != "tight2condaux"])
@pytest.mark.parametrize("kernel_name", list(KERNELS))
def test_criterion_7_suites(criterion, kind, kernel_name):
    kernel = build_kernel(KERNELS[kernel_name])
    G = default_test_function("dif" if kind in ("convdisc", "neum1") else "rob")
    rows = convergence_suite(kind, G, kernel, BarrierSpec("full", 1.0, 1.0), SUITE_N)
    series = {}
    for _, n, eps, stat in rows:
        series.setdefault(eps, []).append(stat)
    bad = [eps for eps, s in series.items() if not all(a > b for a, b in zip(s, s[1:]))]
    ok = not bad
    shown = None if None in series else min(series)
    text = ", ".join(f"{s:.3g}" for s in series[shown])
    detail = f"{kernel_name} {kind}{'' if shown is None else f' eps={shown:g}'}: {text}"
    if kind == "convdisc":
        s = series[None]
        ok = ok and s[-1] <= s[0] / 4
        detail += f" (n=256/n=32 = {s[-1] / s[0]:.3f} <= 0.25)"
    if bad:
        detail += f" not decreasing at eps={', '.join(f'{e:g}' for e in bad)}"
    criterion(7, ok, detail)
    assert ok


@pytest.mark.parametrize("kind", ["lemconvneum", "princneu"])
def test_epsilon_suites_iterated_limit(kind):
    """These statistics vanish in the iterated limit (n first, then eps); at fixed eps the n-limit exists
    and shrinks with eps.  Diagnostic beside criterion 7."""
    kernel = build_kernel(KernelSpec.nearest_neighbor())
    G = default_test_function("rob")
    rows = convergence_suite(kind, G, kernel, BarrierSpec("full", 1.0, 1.0), (256, 512, 1024))
    table = {}
    for _, n, eps, stat in rows:
        table.setdefault(eps, {})[n] = stat
    for eps, by_n in table.items():
        # Cauchy in n: the last increment is smaller than the previous one
        assert abs(by_n[1024] - by_n[512]) < abs(by_n[512] - by_n[256]) or abs(by_n[1024] - by_n[512]) < 1e-3
    limits = [table[eps][1024] for eps in sorted(table)]
    assert all(a < b for a, b in zip(limits, limits[1:]))


# -- 8. invariants -----------------------------------------------------------------

def test_criterion_8_invariants(criterion, tmp_path):
    ok = True
    # particle conservation along every trajectory
    cases = [(KernelSpec.nearest_neighbor(), BarrierSpec("full", 1.0, 1.0), Step(1.0, 0.0)),
             (KernelSpec.long_range(3.0, 64), BarrierSpec("bridges", 2.0, 0.5, ((-1, 0), (-2, 1))), Step(0.8, 0.1)),
             (KernelSpec.long_range(2.5, 32), BarrierSpec("full", 1.0, 2.0), BumpProfile(0.2, -0.3, 0.5))]
    worst = 0
    for spec, barrier, g in cases:
        model = ModelConfig(build_kernel(spec), barrier, 64, window_factor=2.0, horizon=0.1)
        ens = run_ensemble(TrajectoryPlan(model, g, (0.0, 0.02, 0.05, 0.1), seed=3, replicas=20))
        counts = ens.snapshots.sum(axis=2, dtype=np.int64)
        worst = max(worst, int(np.max(np.abs(counts - counts[:, :1]))))
    ok &= criterion(8, worst == 0, f"particle count change {worst} over {len(cases)} models x 20 replicas")

    # stationarity of product Bernoulli(a): site marginals and the pair across the barrier
    a, M = 0.3, 1000
    for spec, barrier in ((KernelSpec.nearest_neighbor(), BarrierSpec("full", 1.0, 1.0)),
                          (KernelSpec.long_range(3.0, 32), BarrierSpec("bridges", 1.0, 0.5, ((-1, 0),)))):
        model = ModelConfig(build_kernel(spec), barrier, 32, window_factor=2.0, horizon=0.1)
        ens = run_ensemble(TrajectoryPlan(model, Constant(a), (0.1,), seed=11, replicas=M))
        snap = ens.snapshots[:, 0, :].astype(np.int64)
        k = snap.sum(axis=0)
        chi2_sites = float(np.sum((k - M * a) ** 2 / (M * a * (1 - a))))
        p_sites = float(stats.chi2.sf(chi2_sites, df=k.size))
        W = model.half_width
        pattern = np.bincount(2 * snap[:, W - 1] + snap[:, W], minlength=4)
        expected = M * np.array([(1 - a) ** 2, (1 - a) * a, a * (1 - a), a * a])
        p_pair = float(stats.chisquare(pattern, expected).pvalue)
        good = p_sites > 0.001 and p_pair > 0.001
        ok &= criterion(8, good, f"{spec.kind} {barrier.mode} stationarity p(sites)={p_sites:.3f} p(pair)={p_pair:.3f} (> 0.001)")

    # same-seed reproducibility of simulate and compare outputs
    common = ["--n-list", "32,64", "--replicas", "4", "--bin-width", "0.0625", "--du", "0.015625", "--log-events"]
    identical = True
    for command in ("simulate", "compare"):
        dirs = [tmp_path / f"{command}{i}" for i in range(2)]
        for d in dirs:
            assert main([command, *common, "--out", str(d)]) == 0
        files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*.csv"))
        assert files
        identical &= all((dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes() for f in files)
    ok &= criterion(8, identical, "simulate/compare CSVs byte-identical under the same seed")
    assert ok


# -- 9. crossing scaling -------------------------------------------------------------

@pytest.mark.parametrize("beta,alpha", [(0.5, 1.0), (1.0, 1.0), (2.0, 64.0)])
def test_criterion_9_crossing_scaling(criterion, beta, alpha):
    kernel = build_kernel(KernelSpec.nearest_neighbor())
    ns = (64, 128, 256, 512)
    start = time.perf_counter()
    mean_flux = []
    for n in ns:
        # stationary density 1/2 on a fixed 128-site window: the crossing rate is exact at every n
        model = ModelConfig(kernel, BarrierSpec("full", alpha, beta), n, window_factor=64 / n, horizon=0.1)
        ens = run_ensemble(TrajectoryPlan(model, Constant(0.5), (0.1,), seed=7, replicas=200))
        gross = ens.crossings[:, -1, [SLOW_LR, SLOW_RL]].sum(axis=1)
        mean_flux.append(gross.mean() / n)  # crossings in macroscopic units
    slope = float(np.polyfit(np.log(ns), np.log(mean_flux), 1)[0])
    elapsed = time.perf_counter() - start
    ok = abs(slope - (1 - beta)) <= 0.15 and elapsed <= 900
    criterion(9, ok, f"beta={beta}: slope {slope:.3f} vs {1 - beta:g} (+-0.15) in {elapsed:.0f}s")
    assert ok
