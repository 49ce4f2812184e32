"""Main entry point for the Krylov chain statistics pipeline."""

import argparse
import os
import sys

# single-threaded BLAS keeps reductions independent of thread scheduling
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

# Add code directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import logging

from billiard_spectrum import make_geometry, valid_a_range, weyl_count
from config import ENSEMBLES, PRESETS, RAW_OUTPUTS_DIR, RESULTS_DIR
from evaluator import evaluate_run, format_separation, save_evaluation
from exporter import export, load_run, record_from_stored
from orchestrator import configure_logging, run_experiment, sweep
from run_config import resolve_config
from spectrum_cache import SpectrumCache, load_spectrum, save_spectrum

logger = logging.getLogger(__name__)


def add_run_arguments(parser):
    """Flags mapping 1:1 onto RunConfig fields (unset flags leave lower layers in place)."""
    parser.add_argument('--preset', choices=sorted(PRESETS), help='Start from a named experiment preset')
    parser.add_argument('--config', help='KEY=VALUE run config file (see run_config.md)')
    parser.add_argument('--kind', choices=['sinai', 'stadium'], help='Billiard kind')
    parser.add_argument('--a', type=float, help='Chaos parameter a = l/L in [0, 1]')
    parser.add_argument('--placement', choices=['vertex', 'centroid'], help='Sinai disk placement')
    parser.add_argument('--cut-scale', type=float, help='Sinai radius l = a * cut_scale * L')
    parser.add_argument('--n-max', type=int, help='Number of energy levels N_max')
    parser.add_argument('--h', type=float, help='Grid spacing (default: converged grid)')
    parser.add_argument('--spectrum-file', help='Use a stored spectrum instead of solving')
    parser.add_argument('--ensembles', help=f'Comma-separated subset of {",".join(ENSEMBLES)}')
    parser.add_argument('--n-samples', type=int, help='Number of initial operators per ensemble')
    parser.add_argument('--window', type=int, nargs=2, metavar=('START', 'END'),
                        help='Absolute half-open window b_START..b_{END-1}')
    parser.add_argument('--window-multiples', type=int, nargs=2, metavar=('LO', 'HI'),
                        help='Window (LO*N_max, HI*N_max)')
    parser.add_argument('--window-phase', type=int, choices=[0, 1], help='Shift the x_i pairing by one')
    parser.add_argument('--max-steps', type=int, help='Lanczos steps')
    parser.add_argument('--reorth', choices=['none', 'full', 'partial'], help='Reorthogonalization mode')
    parser.add_argument('--breakdown-tol', type=float, help='Breakdown tolerance relative to b_1')
    parser.add_argument('--seed', type=int, dest='master_seed', help='Master seed')
    parser.add_argument('--output-dir', help='Output directory')
    parser.add_argument('--workers', type=int, help='Worker processes')
    parser.add_argument('--unit-norm', action='store_true', default=None, help='Normalize the zero mode')
    parser.add_argument('--dump-bn', action='store_true', default=None, help='Write n b_n files for the first samples')
    parser.add_argument('--ck-t-max', type=float, help='Write a K-complexity trace on [0, T]')
    parser.add_argument('--ck-points', type=int, help='Time points of the K-complexity trace')
    parser.add_argument('--premature-limit', type=float, help='Allowed fraction of samples breaking down early')


def overrides_from_args(args) -> dict:
    names = ['kind', 'a', 'placement', 'cut_scale', 'n_max', 'h', 'spectrum_file', 'n_samples',
             'window_phase', 'max_steps', 'reorth', 'breakdown_tol', 'master_seed', 'output_dir',
             'workers', 'unit_norm', 'dump_bn', 'ck_t_max', 'ck_points', 'premature_limit']
    overrides = {name: getattr(args, name) for name in names}
    if args.ensembles:
        overrides['ensembles'] = tuple(e.strip().upper() for e in args.ensembles.split(',') if e.strip())
    if args.window:
        overrides['window'] = tuple(args.window)
    if args.window_multiples:
        overrides['window_multiples'] = tuple(args.window_multiples)
    return overrides


def cmd_spectrum(args) -> int:
    if args.action == 'range':
        info = valid_a_range(args.kind, args.placement, args.cut_scale)
        bracket = ']' if info['high_inclusive'] else ')'
        print(f"{args.kind} ({args.placement}): a in [{info['low']}, {info['high']:.6g}{bracket}")
        return 0

    if args.action == 'inspect':
        spectrum = load_spectrum(args.file)
        prov = spectrum.provenance
        print(f"File: {args.file}")
        for key in ('kind', 'a', 'placement', 'cut_scale', 'h', 'richardson'):
            print(f"  {key}: {prov[key]}")
        print(f"  n_max: {spectrum.n_max}")
        for n, e in enumerate(spectrum.energies, start=1):
            print(f"  E_{n} = {e!r}")
        if prov['kind'] in ('sinai', 'stadium'):
            geom = make_geometry(prov['kind'], prov['a'],
                                 placement=prov['placement'] if prov['kind'] == 'sinai' else 'vertex',
                                 cut_scale=prov['cut_scale'] if prov['kind'] == 'sinai' else None)
            estimate = weyl_count(geom, spectrum.energies[-1])
            print(f"  Weyl estimate at E_N: {estimate:.2f} levels (computed {spectrum.n_max})")
        return 0

    # solve
    cache = SpectrumCache()
    if args.out:
        spectrum = cache.solve(args.kind, args.a, args.n_max, args.placement,
                               args.cut_scale, args.h)
        save_spectrum(spectrum, args.out)
        path = args.out
    else:
        spectrum = cache.get(args.kind, args.a, args.n_max, args.placement, args.cut_scale, args.h)
        path = cache.path_for(cache.request_key(args.kind, args.a, args.n_max, args.placement, args.cut_scale, args.h))
    logger.info(f"Spectrum: E_1={spectrum.energies[0]:.6g} ... E_{spectrum.n_max}={spectrum.energies[-1]:.6g}")
    if spectrum.discrepancy is not None:
        logger.info(f"Richardson discrepancy at level {spectrum.n_max}: {spectrum.discrepancy[-1]:.3g}")
    print(path)
    return 0


def cmd_run(args) -> int:
    config = resolve_config(args.preset, args.config, overrides_from_args(args))
    result = run_experiment(config)
    if result.get("success"):
        logger.info(f"\n✓ Run complete: {config.output_dir}")
        return 0
    logger.error(f"\n✗ Run failed: {result['errors']}")
    return 1


def cmd_sweep(args) -> int:
    config = resolve_config(args.preset, args.config, overrides_from_args(args))
    a_values = [float(v) for v in args.a_values.split(',')]
    summary = sweep(config, a_values, output_root=args.output_root)
    for a, separation in summary["separation"].items():
        print(f"a = {a}")
        print(format_separation(separation))
    return 0 if summary["failed"] == 0 and summary["processed"] == summary["total_members"] else 1


def cmd_fit(args) -> int:
    evaluation = evaluate_run(args.run_dir, rule=args.rule)
    save_evaluation(evaluation, args.out or args.run_dir)
    for row in evaluation["table"]:
        print(f"{row['ensemble']:>4} {row['row']:>4}  mu0={row['mu0']:.6g}  sigma0={row['sigma0']:.6g}")
    if "separation" in evaluation:
        print(format_separation(evaluation["separation"]))
    return 0


def cmd_export(args) -> int:
    record = record_from_stored(load_run(args.run_dir))
    written = export(record, args.out, fmt=args.format, head=args.head)
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Krylov chain statistics of billiard Liouvillians"
    )
    parser.add_argument('--log-dir', default=RAW_OUTPUTS_DIR, help='Directory for orchestrator.log')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('spectrum', help='Solve, cache, inspect or range-check billiard spectra')
    p.add_argument('action', choices=['solve', 'inspect', 'range'])
    p.add_argument('file', nargs='?', help='Spectrum file (inspect)')
    p.add_argument('--kind', choices=['sinai', 'stadium'], default='sinai')
    p.add_argument('--a', type=float, default=1.0)
    p.add_argument('--placement', choices=['vertex', 'centroid'], default='vertex')
    p.add_argument('--cut-scale', type=float)
    p.add_argument('--n-max', type=int, default=50)
    p.add_argument('--h', type=float, help='Grid spacing (default: converged grid)')
    p.add_argument('--out', help='Write the spectrum to this file instead of the cache')
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser('run', help='Run one configuration')
    add_run_arguments(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser('sweep', help='Sweep a over a grid for every ensemble')
    add_run_arguments(p)
    p.add_argument('--a-values', required=True, help='Comma-separated a grid, e.g. 0,0.05,0.1')
    p.add_argument('--output-root', default=os.path.join(RESULTS_DIR, 'sweep'))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('fit', help='Re-fit the stored samples of a run')
    p.add_argument('run_dir')
    p.add_argument('--rule', choices=['freedman_diaconis', 'sqrt'], default='freedman_diaconis')
    p.add_argument('--out', help='Directory for evaluation.json (default: the run directory)')
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser('export', help='Re-export a stored run')
    p.add_argument('run_dir')
    p.add_argument('--format', choices=['csv', 'json'], default='csv')
    p.add_argument('--head', type=int, help='Keep only the first M per-sample rows')
    p.add_argument('--out', required=True, help='Target directory')
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_dir)

    try:
        if args.command == 'spectrum' and args.action == 'inspect' and not args.file:
            parser.error("spectrum inspect needs a file")
        sys.exit(args.func(args))

    except KeyboardInterrupt:
        logger.warning("\nInterrupted by user")
        sys.exit(130)
    except Exception as e:
        logger.error(f"Fatal error: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)


if __name__ == "__main__":
    main()
