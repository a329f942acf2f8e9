"""Command line: ``wqiga --cmd assemble|convergence|bench ...``."""
import argparse
import logging
import sys

from .studies import RunConfig, fit_exponent, run_assemble, run_bench, run_convergence_1d


def int_list(text):
    """Parse ``"3"``, ``"2,4,8"`` or an inclusive range ``"2-8"``."""
    out = []
    for part in text.split(','):
        part = part.strip()
        if '-' in part[1:]:
            lo, hi = part.split('-', 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError('empty list: %r' % text)
    return out


def build_parser():
    ap = argparse.ArgumentParser(
        prog='wqiga',
        description='Weighted-quadrature assembly of isogeometric mass and stiffness '
                    'matrices, with an element-loop Gauss reference.')
    ap.add_argument('--cmd', required=True, choices=('assemble', 'convergence', 'bench'))
    ap.add_argument('--d', type=int, default=1, help='parametric dimension (1-3)')
    ap.add_argument('--p', type=int_list, default=None,
                    help='degree(s), e.g. 3, 2,4 or 2-8')
    ap.add_argument('--nel', type=int_list, default=None,
                    help='elements per direction, list or range')
    ap.add_argument('--geometry', default='identity',
                    help="'identity' or a JSON spline geometry file")
    ap.add_argument('--rule', default=None, choices=('wq', 'sgq', 'both'))
    ap.add_argument('--matrix', default='mass', choices=('mass', 'stiffness', 'both'))
    ap.add_argument('--out', default='out', help='output directory')
    ap.add_argument('--threads', type=int, default=1)
    ap.add_argument('--trials', type=int, default=3, help='bench repetitions (min is kept)')
    ap.add_argument('--dump-rules', default=None, metavar='PATH',
                    help='write WQ points and weights as CSV (assemble only)')
    ap.add_argument('--seed', type=int, default=0)
    ap.add_argument('-v', '--verbose', action='store_true')
    return ap


_DEFAULTS = {
    'assemble': dict(p=[2], nel=[10], rule='wq'),
    'convergence': dict(p=[1, 2, 3, 4], nel=[8, 16, 32, 64, 128], rule='both'),
    'bench': dict(p=list(range(2, 9)), nel=[8], rule='both'),
}


def config_from_args(args):
    defaults = _DEFAULTS[args.cmd]
    return RunConfig(command=args.cmd, d=args.d,
                     p=args.p or defaults['p'], nel=args.nel or defaults['nel'],
                     geometry=args.geometry, rule=args.rule or defaults['rule'],
                     matrix=args.matrix, out=args.out, threads=args.threads,
                     trials=args.trials, dump_rules=args.dump_rules, seed=args.seed)


def _print_convergence(records):
    print('rule  p  nel        Linf          L2          H1   rate_L2  rate_H1')
    for r in records:
        print('%-4s %2d %4d  %.4e  %.4e  %.4e  %7.3f  %7.3f'
              % (r.rule, r.p, r.nel, r.linf, r.l2, r.h1, r.rate_l2, r.rate_h1))


def _print_bench(records, d):
    print('p  nel    ndof  WQ total  products   sparse   SGQ total        flops')
    for r in records:
        print('%d %4d %7d  %8.3f  %8.3f  %7.3f  %10.3f  %11d'
              % (r.p, r.nel, r.ndof, r.wq_total, r.wq_products, r.wq_sparse,
                 r.sgq_total, r.wq_flops))
    if len(records) > 1 and len({r.nel for r in records}) == 1:
        ps = [r.p for r in records]
        print('fitted p-exponent (d=%d): flops %.2f, sparse build %.2f'
              % (d, fit_exponent(ps, [r.wq_flops for r in records]),
                 fit_exponent(ps, [r.wq_sparse for r in records])))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(message)s')
    try:
        cfg = config_from_args(args).validate()
        if cfg.command == 'assemble':
            for info in run_assemble(cfg):
                print('%(path)s  nnz=%(nnz)d  %(seconds).3fs  residual=%(exactness_residual).2e'
                      % info)
        elif cfg.command == 'convergence':
            _print_convergence(run_convergence_1d(cfg))
        else:
            _print_bench(run_bench(cfg, sgq=cfg.rule != 'wq'), cfg.d)
    except (ValueError, OSError, ArithmeticError) as exc:
        print('wqiga: error: %s' % exc, file=sys.stderr)
        return 2
    return 0


if __name__ == '__main__':
    sys.exit(main())
