"""End-to-end experiments: simulate, observe, solve, compare, emit.

Output layout of one experiment directory::

    manifest.json            resolved config, regime, per-n seeds, sha256 of every CSV
    config.json              the resolved config alone (re-runnable)
    pde/density.csv          time,u,rho at the snapshot times (0 appears twice when split)
    pde/traces.csv           time,rho_left,rho_right,grad_left,grad_right
    n<n>/density.csv         time,u,rho ensemble-mean binned density
    n<n>/crossings.csv       replica,time,slow_lr,slow_rl,bridge_lr,bridge_rl
    n<n>/flux.csv            time,flux ensemble mean (only with event logging)
    n<n>/snapshots/*.bin     run-length encoded dumps (only with dump_snapshots)
    comparison.csv           one row per (n, time), see ComparisonRow
    profiles.csv             n,time,u,rho_empirical,rho_pde
    profile_n<n>_t<t>.svg    overlay plot per (n, time)
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from . import __version__
from .config import ExperimentConfig, n_seed, save_config
from .errors import ConfigurationError, StageError
from .kernel import BarrierSpec, JumpKernel, build_kernel, has_complete_barrier
from .observables import (DensityField, FluxSeries, crossing_flux, density_field, empirical_density, net_slow_crossings,
                          write_density_csv, write_flux_csv)
from .pde import PdeProblem, PdeSolution, robin_kappa, solve, write_trace_csv
from .profiles import parse_profile
from .simulator import ModelConfig, TrajectoryPlan, run_ensemble
from .snapshots import write_snapshots

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class Regime:
    name: str
    kappa: float = 0.0

    @property
    def label(self):
        return f"robin(kappa={self.kappa:.6g})" if self.name == "robin" else self.name


def select_regime(kernel: JumpKernel, barrier: BarrierSpec) -> Regime:
    """Case split of the hydrodynamic limit: free, robin(kappa) or neumann.

    Depends only on whether the barrier is complete and on beta; alpha only
    sets kappa at beta = 1.
    """
    if not has_complete_barrier(kernel, barrier):
        return Regime("free")
    if math.isclose(barrier.beta, 1.0, rel_tol=0.0, abs_tol=1e-12):
        return Regime("robin", robin_kappa(kernel, barrier.alpha))
    if barrier.beta < 1:
        return Regime("free")
    return Regime("neumann")


def pde_problem(cfg: ExperimentConfig, kernel: JumpKernel, regime: Regime) -> PdeProblem:
    return PdeProblem(regime=regime.name, sigma2=kernel.sigma2, initial=parse_profile(cfg.profile),
                      horizon=cfg.horizon, half_length=cfg.window_factor, du=cfg.pde_du,
                      kappa=regime.kappa, output_times=tuple(cfg.snapshot_times))


def predicted_flux(solution: PdeSolution, regime: Regime, t):
    """Net mass through the origin over [0, t] according to the PDE."""
    i = solution.time_index(t)
    times = solution.times[: i + 1]
    D = solution.problem.sigma2 / 2
    if regime.name == "neumann":
        return 0.0
    if regime.name == "robin":
        return D * regime.kappa * float(trapezoid(solution.rho_left[: i + 1] - solution.rho_right[: i + 1], times))
    grad = 0.5 * (solution.grad_left + solution.grad_right)[: i + 1]
    return -D * float(trapezoid(grad, times))


@dataclass
class ComparisonRow:
    n: int
    time: float
    l1: float
    l1_se: float
    l1_left: float
    l1_right: float
    jump: float
    jump_se: float
    flux_mc: float
    flux_mc_se: float
    flux_pde: float

    FIELDS = ("n", "time", "l1", "l1_se", "l1_left", "l1_right", "jump", "jump_se", "flux_mc", "flux_mc_se",
              "flux_pde")


@dataclass
class ProfileOverlay:
    n: int
    time: float
    u: np.ndarray
    empirical: np.ndarray
    pde: np.ndarray


@dataclass
class ComparisonReport:
    regime: Regime | None = None
    rows: list = field(default_factory=list)
    overlays: list = field(default_factory=list)
    solution: PdeSolution | None = None

    def row(self, n, t):
        for r in self.rows:
            if r.n == n and abs(r.time - t) < 1e-12:
                return r
        raise KeyError((n, t))


def _jackknife_se(per_replica_bins, reference, h):
    """Jackknife standard error of sum_j |mean_j - reference_j| * h over replicas."""
    M = per_replica_bins.shape[0]
    if M < 2:
        return float("nan")
    total = per_replica_bins.sum(axis=0)
    loo = (total[None, :] - per_replica_bins) / (M - 1)
    stats = np.abs(loo - reference[None, :]).sum(axis=1) * h
    return float(math.sqrt((M - 1) / M * np.sum((stats - stats.mean()) ** 2)))


def _standard_error(values):
    if values.size < 2:
        return float("nan")
    return float(values.std(ddof=1) / math.sqrt(values.size))


def pde_bin_averages(solution: PdeSolution, t, n, half_width, b):
    """PDE interpolated at every site x/n, averaged over the same bins as the data."""
    x = np.arange(-half_width, half_width)
    site = solution.evaluate(t, x / n)
    return site.reshape(-1, b).mean(axis=1)


def compare_ensemble(ensemble, solution: PdeSolution, regime: Regime, cfg: ExperimentConfig, n):
    b = cfg.bin_sites(n)
    W = ensemble.half_width
    h = b / n
    bins, edges = empirical_density(ensemble.snapshots, n, b)  # (M, times, bins)
    centers = 0.5 * (edges[1:] + edges[:-1])
    j0 = int(np.searchsorted(edges, 0.0))
    half = j0
    rows, overlays = [], []
    for i, t in enumerate(ensemble.times):
        per = bins[:, i, :]
        mean = per.mean(axis=0)
        ref = pde_bin_averages(solution, t, n, W, b)
        diff = np.abs(mean - ref) * h
        jumps = per[:, j0] - per[:, j0 - 1]
        flux = net_slow_crossings(ensemble.crossings[:, i, :], n)
        rows.append(ComparisonRow(
            n=int(n), time=float(t), l1=float(diff.sum()), l1_se=_jackknife_se(per, ref, h),
            l1_left=float(diff[:half].sum()), l1_right=float(diff[half:].sum()),
            jump=float(jumps.mean()), jump_se=_standard_error(jumps), flux_mc=float(flux.mean()), flux_mc_se=_standard_error(flux),
            flux_pde=predicted_flux(solution, regime, t)))
        overlays.append(ProfileOverlay(n=int(n), time=float(t), u=centers, empirical=mean, pde=ref))
    return rows, overlays


def _staged(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (ConfigurationError, ValueError, RuntimeError, OSError, KeyError) as exc:
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc


def solve_stage(cfg: ExperimentConfig, out_dir=None):
    kernel = build_kernel(cfg.kernel)
    regime = select_regime(kernel, cfg.barrier)
    solution = _staged("solve", solve, pde_problem(cfg, kernel, regime))
    if out_dir is not None:
        pdir = Path(out_dir) / "pde"
        pdir.mkdir(parents=True, exist_ok=True)
        times, values = solution.output()
        _staged("emit", write_density_csv, pdir / "density.csv", DensityField(times=times, u=solution.u, values=values))
        _staged("emit", write_trace_csv, pdir / "traces.csv", solution)
    return regime, solution


def simulate_stage(cfg: ExperimentConfig, n, out_dir=None):
    kernel = build_kernel(cfg.kernel)
    model = ModelConfig(kernel=kernel, barrier=cfg.barrier, n=int(n), window_factor=cfg.window_factor,
                        horizon=cfg.horizon)
    plan = TrajectoryPlan(model=model, initial_profile=parse_profile(cfg.profile),
                          snapshot_times=tuple(cfg.snapshot_times), seed=n_seed(cfg.seed, n),
                          replicas=cfg.replicas, log_events=cfg.log_events)
    log.info("simulating n=%d with %d replicas", n, cfg.replicas)
    ensemble = _staged("simulate", run_ensemble, plan, workers=cfg.workers)
    if out_dir is not None:
        _staged("emit", _write_ensemble, ensemble, cfg, n, Path(out_dir) / f"n{n}")
    return ensemble


def _write_ensemble(ensemble, cfg, n, ndir):
    ndir.mkdir(parents=True, exist_ok=True)
    write_density_csv(ndir / "density.csv", density_field(ensemble.times, ensemble.snapshots, n, cfg.bin_sites(n)))
    with open(ndir / "crossings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "time", "slow_lr", "slow_rl", "bridge_lr", "bridge_rl"])
        for r in range(ensemble.crossings.shape[0]):
            for i, t in enumerate(ensemble.times):
                w.writerow([r, repr(float(t)), *map(int, ensemble.crossings[r, i])])
    if ensemble.events is not None:
        grid = np.linspace(0.0, cfg.horizon, 101)
        series = [crossing_flux(ev, n, grid).cumulative_net_crossings for ev in ensemble.events]
        write_flux_csv(ndir / "flux.csv", FluxSeries(times=grid, cumulative_net_crossings=np.mean(series, axis=0)))
    if cfg.dump_snapshots:
        sdir = ndir / "snapshots"
        sdir.mkdir(exist_ok=True)
        for r in range(ensemble.snapshots.shape[0]):
            write_snapshots(sdir / f"replica_{r:04d}.bin", n, ensemble.half_width, ensemble.plan.seed, r,
                            ensemble.times, ensemble.snapshots[r])


def run_experiment(cfg: ExperimentConfig, out_dir=None, emit=True) -> ComparisonReport:
    """Simulate every n, solve the regime's PDE once, compare and (optionally) write everything."""
    _staged("config", cfg.validate)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    if emit:
        out.mkdir(parents=True, exist_ok=True)
    regime, solution = solve_stage(cfg, out if emit else None)
    report = ComparisonReport(regime=regime, solution=solution)
    for n in cfg.n_list:
        ensemble = simulate_stage(cfg, n, out if emit else None)
        rows, overlays = _staged("compare", compare_ensemble, ensemble, solution, regime, cfg, n)
        report.rows.extend(rows)
        report.overlays.extend(overlays)
    if emit:
        _staged("emit", emit_profiles, report, out)
        _staged("emit", write_manifest, cfg, report, out, "compare")
    return report


def write_comparison_csv(path, report: ComparisonReport):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ComparisonRow.FIELDS)
        for r in report.rows:
            w.writerow([r.n] + [repr(float(getattr(r, f))) for f in ComparisonRow.FIELDS[1:]])


def emit_profiles(report: ComparisonReport, out_dir):
    """comparison.csv, profiles.csv and one SVG overlay per (n, time)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_comparison_csv(out / "comparison.csv", report)
    with open(out / "profiles.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "time", "u", "rho_empirical", "rho_pde"])
        for ov in report.overlays:
            for u, e, p in zip(ov.u, ov.empirical, ov.pde):
                w.writerow([ov.n, repr(ov.time), repr(float(u)), repr(float(e)), repr(float(p))])
    paths = []
    if report.overlays:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        matplotlib.rcParams["svg.hashsalt"] = "slowbond"
        label = report.regime.label if report.regime else "pde"
        for ov in report.overlays:
            fig, ax = plt.subplots(figsize=(6, 3.5))
            ax.plot(ov.u, ov.empirical, ".", ms=3, label=f"particles, n={ov.n}")
            ax.plot(ov.u, ov.pde, "-", lw=1.2, label=label)
            ax.set_xlabel("u")
            ax.set_ylabel("density")
            ax.set_title(f"t = {ov.time:g}")
            ax.legend(loc="best", fontsize=8)
            fig.tight_layout()
            path = out / f"profile_n{ov.n}_t{ov.time:g}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            paths.append(path)
    return paths


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(cfg: ExperimentConfig, report: ComparisonReport | None, out_dir, command):
    out = Path(out_dir)
    save_config(cfg, out / "config.json")
    files = {p.relative_to(out).as_posix(): sha256(p) for p in sorted(out.rglob("*.csv"))}
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "package_version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "regime": None if report is None or report.regime is None else
        {"name": report.regime.name, "kappa": report.regime.kappa},
        "seeds": {str(n): n_seed(cfg.seed, n) for n in cfg.n_list},
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def verify_manifest(manifest, out_dir):
    """Files whose sha256 differs from (or is missing relative to) the manifest."""
    out = Path(out_dir)
    bad = []
    for rel, digest in manifest["files"].items():
        path = out / rel
        if not path.exists() or sha256(path) != digest:
            bad.append(rel)
    return bad
