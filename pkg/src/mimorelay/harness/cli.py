"""Command-line entry point.

Exit status is 0 on success, 1 when a ``minimize`` run finds the targets
infeasible and 2 on errors (bad input, unreadable config, solver failure).
"""

import argparse
import sys
from dataclasses import replace

import numpy as np

from ..af import af_feasibility
from ..channel import db_to_linear, generate, trial_seed
from ..errors import RelayError
from ..svd_relay import HopCinr, pair_subchannels, pairing_power, svd_feasibility
from .config import Config, load_config
from .experiment import (AXES, ExperimentSpec, emit_csv, run_experiment, run_scheme,
                         summarize, trial_record)


def _csv_floats(text):
    return [float(v) for v in text.replace(' ', '').split(',') if v]


def _common(p, trials):
    p.add_argument('--config', help='scenario file (key = value lines)')
    p.add_argument('--scheme', choices=('af', 'svd', 'both'), default='both')
    p.add_argument('--trials', type=int, default=trials, help='channel draws per point')
    p.add_argument('--seed', type=int, default=0, help='base seed; draw i uses seed XOR i')
    p.add_argument('--out', help="CSV output path ('-' for stdout)")
    p.add_argument('--pairing', choices=('on', 'off'), default='off',
                   help='CINR-based subchannel pairing for the svd scheme')
    p.add_argument('--workers', type=int, default=1, help='parallel worker processes')


def build_parser():
    parser = argparse.ArgumentParser(
        prog='mimorelay',
        description='Joint beamforming and power allocation for MIMO relay broadcast channels.')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('feasibility', help='feasibility test on seeded draws')
    _common(p, 1)
    p = sub.add_parser('minimize', help='feasibility test then sum-power minimization')
    _common(p, 1)
    p = sub.add_parser('sweep', help='Monte Carlo sweep over one parameter')
    _common(p, 200)
    p.add_argument('--axis', choices=AXES, required=True)
    p.add_argument('--values', type=_csv_floats, required=True, help='comma-separated, ascending')
    p = sub.add_parser('pairing', help='svd scheme with and without subchannel pairing')
    _common(p, 200)
    p.add_argument('--cinr1', type=_csv_floats,
                   help='first-hop CINRs in dB; with --cinr2, evaluate the coupling-free model only')
    p.add_argument('--cinr2', type=_csv_floats, help='second-hop CINRs in dB')
    p.add_argument('--gamma', type=_csv_floats, default=[0.0],
                   help='SINR targets in dB for the coupling-free model')
    p = sub.add_parser('multihop', help='svd cascade over hop counts (total distance 2)')
    _common(p, 200)
    p.add_argument('--values', type=_csv_floats, default=[1, 2, 3, 4], help='hop counts')
    return parser


def _config(args):
    return load_config(args.config) if args.config else Config()


def _print_summary(records, to_stderr=False):
    out = sys.stderr if to_stderr else sys.stdout
    print(f"{'axis':>10} {'scheme':>12} {'trials':>6} {'feas':>5} {'paired':>6} "
          f"{'mean_power':>12} {'avg_iters':>9}", file=out)
    for row in summarize(records):
        print(f"{row['axis']:>10g} {row['scheme']:>12} {row['trials']:>6d} {row['feasible']:>5d} "
              f"{row['paired']:>6d} {row['mean_sum_power']:>12.6g} {row['avg_iterations']:>9.3g}",
              file=out)


def _single(args, minimize):
    cfg = _config(args)
    s = cfg.scenario()
    schemes = ['af', 'svd'] if args.scheme == 'both' else [args.scheme]
    records = []
    failed = False
    for trial in range(args.trials):
        seed = trial_seed(args.seed, trial)
        for scheme in schemes:
            if minimize:
                feas, final = run_scheme(scheme, cfg, 'sinr_target', seed, args.pairing == 'on')
            else:
                ch = generate(s, seed)
                pairing = 'heuristic' if args.pairing == 'on' else None
                feas = af_feasibility(s, ch) if scheme == 'af' else \
                    svd_feasibility(s, ch, pairing=pairing)
                final = feas
            rec = trial_record(0.0, trial, seed, scheme, feas, final)
            records.append(rec)
            failed |= minimize and not rec.feasible
            sinr = ' '.join(f'{x:.6g}' for x in rec.sinr)
            print(f'trial {trial} seed {seed} {scheme}: {rec.status} t={rec.t:.6g} '
                  f'C={rec.balanced_level:.6g} P_b={rec.p_b:.6g} P_r={rec.p_r:.6g} '
                  f'sum={rec.sum_power:.6g} outer={rec.outer_iters} sinr=[{sinr}]')
    if args.out:
        emit_csv(records, args.out)
    return 1 if failed else 0


def _sweep(args, axis, values, pairing=None):
    spec = ExperimentSpec(scheme=args.scheme, axis=axis, values=values, trials=args.trials,
                          config=_config(args), seed=args.seed,
                          pairing=(args.pairing == 'on') if pairing is None else pairing,
                          workers=args.workers)
    return run_experiment(spec)


def _pairing(args):
    if args.cinr1 is not None or args.cinr2 is not None:
        if args.cinr1 is None or args.cinr2 is None or len(args.cinr1) != len(args.cinr2):
            raise RelayError('--cinr1 and --cinr2 need the same number of entries')
        c1, c2 = db_to_linear(args.cinr1), db_to_linear(args.cinr2)
        gamma = np.broadcast_to(db_to_linear(args.gamma), c1.shape)
        perm = pair_subchannels(HopCinr(c1, c2))
        ident, _, _, _ = pairing_power(c1, c2, gamma)
        paired, _, _, _ = pairing_power(c1[perm], c2, gamma)
        print(f'pairing {perm.tolist()} total power {paired:.6g} (identity {ident:.6g})')
        return 0
    args = _with_scheme(args, 'svd')
    gamma_db = [float(_config(args).get('gamma')[0])]
    off = _sweep(args, 'sinr_target', gamma_db, pairing=False)
    on = _sweep(args, 'sinr_target', gamma_db, pairing=True)
    records = sorted(off + [replace(r, scheme='svd-pairing') for r in on], key=lambda r: r.key)
    if args.out:
        emit_csv(records, args.out)
    _print_summary(records, args.out == '-')
    return 0


def _with_scheme(args, scheme):
    ns = argparse.Namespace(**vars(args))
    ns.scheme = scheme
    return ns


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.trials < 1:
            raise RelayError('--trials must be at least 1')
        if args.command == 'feasibility':
            return _single(args, minimize=False)
        if args.command == 'minimize':
            return _single(args, minimize=True)
        if args.command == 'pairing':
            return _pairing(args)
        if args.command == 'multihop':
            records = _sweep(_with_scheme(args, 'svd'), 'hops', args.values)
        else:
            records = _sweep(args, args.axis, args.values)
        if args.out:
            emit_csv(records, args.out)
        _print_summary(records, args.out == '-')
        return 0
    except (RelayError, OSError, np.linalg.LinAlgError) as exc:
        print(f'error: {exc}', file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(main())
