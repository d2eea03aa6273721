"""Command line entry point: ``slowbond <subcommand>``.

Exit codes: 0 success, 2 bad configuration, 3 simulate, 4 solve,
5 compare, 6 emit (I/O), 7 reproduction mismatch.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config, parse_bridges, parse_kernel
from .errors import ConfigurationError, StageError
from .harness import (run_experiment, select_regime, simulate_stage, solve_stage, verify_manifest,
                      write_manifest)
from .kernel import BarrierSpec, build_kernel, describe
from .pde import robin_kappa
from .weakform import SUITE_KINDS, convergence_suite, default_test_function, write_suite_csv

EXIT_CODES = {"config": 2, "simulate": 3, "solve": 4, "compare": 5, "emit": 6}
EXIT_MISMATCH = 7


def _barrier_from_args(args, base: BarrierSpec | None = None):
    base = base or BarrierSpec("full", 1.0, 1.0)
    mode, bridges = base.mode, base.bridges
    if args.bridges is not None:
        bridges = parse_bridges(args.bridges)
        mode = "bridges" if bridges else "full"
    alpha = base.alpha if args.alpha is None else args.alpha
    beta = base.beta if args.beta is None else args.beta
    return BarrierSpec(mode=mode, alpha=alpha, beta=beta, bridges=bridges)


def _add_model_flags(p):
    p.add_argument("--kernel", help="nn | finite:p1,p2,... | power:gamma[:z_max]")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--bridges", help='bridge bonds, e.g. --bridges=-1,0 or --bridges="-1,0;-2,1" (empty for the full barrier)')


def _add_experiment_flags(p):
    p.add_argument("--config", help="JSON experiment config (schema_version 1)")
    _add_model_flags(p)
    p.add_argument("--n-list", type=lambda s: tuple(int(v) for v in s.split(",")))
    p.add_argument("--replicas", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--window", type=float, dest="window_factor", help="half length L of the window")
    p.add_argument("--profile", help="step(a,b) | bump(a,c,r) | constant(a)")
    p.add_argument("--times", type=lambda s: tuple(float(v) for v in s.split(",")), dest="snapshot_times")
    p.add_argument("--bin-width", type=float, help="macroscopic width of comparison bins")
    p.add_argument("--du", type=float, dest="pde_du", help="PDE grid spacing")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--log-events", action="store_true", default=None)
    p.add_argument("--dump-snapshots", action="store_true", default=None)
    p.add_argument("--out", dest="output_dir")


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    kernel = parse_kernel(args.kernel) if args.kernel else None
    cfg = cfg.replace(kernel=kernel, barrier=_barrier_from_args(args, cfg.barrier),
                      n_list=args.n_list, replicas=args.replicas, horizon=args.horizon,
                      window_factor=args.window_factor, profile=args.profile, snapshot_times=args.snapshot_times,
                      bin_width=args.bin_width, pde_du=args.pde_du, seed=args.seed, workers=args.workers,
                      log_events=args.log_events, dump_snapshots=args.dump_snapshots, output_dir=args.output_dir)
    return cfg.validate()


def cmd_kernel_info(args):
    kernel = build_kernel(parse_kernel(args.kernel or "nn"))
    barrier = _barrier_from_args(args)
    barrier.validate(kernel)
    rows = describe(kernel, barrier)
    rows.append(("kappa", robin_kappa(kernel, barrier.alpha)))
    rows.append(("regime", select_regime(kernel, barrier).label))
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v:.12g}" if isinstance(v, float) else f"{k:<{width}}  {v}")
    return 0


def cmd_simulate(args):
    cfg = resolve_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for n in cfg.n_list:
        simulate_stage(cfg, n, out)
    write_manifest(cfg, None, out, "simulate")
    print(f"wrote {out}")
    return 0


def cmd_solve(args):
    cfg = resolve_config(args)
    out = Path(cfg.output_dir)
    regime, _ = solve_stage(cfg, out)
    write_manifest(cfg, None, out, "solve")
    print(f"{regime.label}: wrote {out / 'pde'}")
    return 0


def cmd_compare(args):
    cfg = resolve_config(args)
    report = run_experiment(cfg)
    print(f"regime {report.regime.label}")
    print(f"{'n':>5} {'t':>6} {'L1':>9} {'se':>9} {'jump':>8} {'flux':>9} {'pde flux':>9}")
    for r in report.rows:
        print(f"{r.n:>5} {r.time:>6g} {r.l1:>9.5f} {r.l1_se:>9.5f} {r.jump:>8.4f} {r.flux_mc:>9.5f} {r.flux_pde:>9.5f}")
    print(f"wrote {cfg.output_dir}")
    return 0


def cmd_convergence(args):
    kernel = build_kernel(parse_kernel(args.kernel or "power:3"))
    barrier = _barrier_from_args(args)
    kinds = SUITE_KINDS if args.kind == "all" else (args.kind,)
    rows = []
    for kind in kinds:
        space = "dif" if kind in ("convdisc", "neum1", "tight2condaux") else "rob"
        rows.extend(convergence_suite(kind, default_test_function(space), kernel, barrier, args.n_list))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_suite_csv(out, rows)
    for kind, n, eps, stat in rows:
        print(f"{kind:<14} n={n:<5} eps={'' if eps is None else f'{eps:g}':<8} {stat:.6e}")
    return 0


def cmd_reproduce(args):
    manifest_path = Path(args.manifest)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise StageError("config", f"cannot read manifest: {exc}") from exc
    out = Path(args.out) if args.out else manifest_path.parent / "reproduced"
    cfg = ExperimentConfig.from_dict(manifest["config"]).replace(output_dir=str(out)).validate()
    command = manifest.get("command", "compare")
    out.mkdir(parents=True, exist_ok=True)
    if command == "compare":
        run_experiment(cfg)
    elif command == "simulate":
        for n in cfg.n_list:
            simulate_stage(cfg, n, out)
    elif command == "solve":
        solve_stage(cfg, out)
    else:
        raise StageError("config", f"manifest command {command!r} cannot be reproduced")
    bad = verify_manifest(manifest, out)
    if bad:
        print("mismatch: " + ", ".join(bad), file=sys.stderr)
        return EXIT_MISMATCH
    print(f"reproduced {len(manifest['files'])} files byte-for-byte in {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="slowbond", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel-info", help="print kernel constants, sigma_S2, kappa and the regime")
    _add_model_flags(p)
    p.set_defaults(func=cmd_kernel_info)

    for name, func, text in (("simulate", cmd_simulate, "run the particle ensembles and write densities"),
                             ("solve", cmd_solve, "solve the regime's PDE and write profiles and traces"),
                             ("compare", cmd_compare, "full experiment with comparison report and SVG plots")):
        p = sub.add_parser(name, help=text)
        _add_experiment_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("convergence", help="discrete convergence suites for K_n")
    _add_model_flags(p)
    p.add_argument("--kind", default="all", choices=("all",) + SUITE_KINDS)
    p.add_argument("--n-list", type=lambda s: tuple(int(v) for v in s.split(",")), default=(32, 64, 128, 256))
    p.add_argument("--out", default="convergence.csv")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("reproduce", help="re-run a manifest and check every CSV byte-for-byte")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.stage, 1)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]


if __name__ == "__main__":
    sys.exit(main())
