"""Command-line interface.

One subcommand per artifact: dataset diagnosis, representability
census, single fits with either engine, the two error tables, the
greedy error bound, and adjacency certificates.  Exit codes: 0 success,
1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .datasets import fishing_space, load_dataset
from .errors import DataError, NumericError
from .fitters import (
    EmConfig,
    GreedyConfig,
    GridSpec,
    em_fit,
    greedy_bound,
    greedy_fit,
)
from .rankings import Ranking, adjacency_certificate, mixture_target, vertex_choice
from .represent import census
from .reports import run_diagnose, run_table1, run_table2
from .serialize import dumps_compact
from .space import build_space

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default is exit code 2
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _space_of(args):
    if args.data is not None:
        return build_space(load_dataset(args.data))
    return fishing_space()


def _ranking_of(args, space):
    return Ranking.from_word(args.ranking, n=space.n)


def _eta_of(args, space):
    if args.eta is None:
        return None
    try:
        values = np.array([float(v) for v in args.eta.split(",")])
    except ValueError:
        raise DataError(f"bad --eta {args.eta!r}: expected comma-separated numbers")
    if values.shape != (space.n,):
        raise DataError(f"--eta needs {space.n} comma-separated values")
    return values


def _greedy_config(args, space):
    return GreedyConfig(
        steps=args.steps,
        restarts=args.restarts,
        inner_iters=args.inner_iters,
        stop_tol=args.stop_tol,
        seed=args.seed,
        eta=_eta_of(args, space) if hasattr(args, "eta") else None,
    )


def _em_config(args, space):
    return EmConfig(
        mixtures=args.mixtures,
        inits=args.inits,
        tol=args.tol,
        max_sweeps=args.max_sweeps,
        newton_steps=args.newton_steps,
        seed=args.seed,
        eta=_eta_of(args, space) if hasattr(args, "eta") else None,
    )


def _grid_of(args):
    return GridSpec(eta_min=args.eta_min, eta_max=args.eta_max, eta_step=args.eta_step)


def _degrees_of(args):
    return (args.degree,) if args.degree is not None else (1, 2)


def _render_fit(report, label, out):
    if out == "json":
        return report.to_json()
    if out == "csv":
        head = "ranking,degree,engine,error,seed,steps,eta"
        eta = " ".join(f"{v:g}" for v in report.eta)
        return (
            head + "\n"
            f"{label},{report.degree},{report.engine},{report.error:.17g},"
            f"{report.seed},{report.steps},{eta}\n"
        )
    eta = " ".join(f"{v:g}" for v in report.eta)
    return (
        f"target:  {label}\n"
        f"engine:  {report.engine}\n"
        f"degree:  {report.degree}\n"
        f"error:   {report.error:.3f}\n"
        f"steps:   {report.steps}\n"
        f"seed:    {report.seed}\n"
        f"eta:     {eta}\n"
    )


def _target_of(args, space):
    ranking = _ranking_of(args, space)
    if args.mix_reverse:
        return mixture_target(ranking, 0.5, space), f"{ranking.word()}/{ranking.reverse().word()}"
    return vertex_choice(ranking, space), ranking.word()


def _cmd_diagnose(args):
    space = _space_of(args)
    report = run_diagnose(space, args.degree if args.degree is not None else 1,
                          jobs=args.jobs)
    return report.to_json() if args.out == "json" else report.to_text()


def _cmd_census(args):
    space = _space_of(args)
    degree = args.degree if args.degree is not None else 1
    result = census(degree, space, jobs=args.jobs)
    if args.out == "json":
        return dumps_compact(
            {
                "degree": degree,
                "representable": [r.word() for r in result.representable],
                "unrepresentable": [r.word() for r in result.unrepresentable],
            }
        )
    if args.out == "csv":
        lines = ["ranking,degree,representable,margin"]
        lines += [
            f"{r.ranking.word()},{degree},{int(r.representable)},{r.margin:.17g}"
            for r in result.results
        ]
        return "\n".join(lines) + "\n"
    unrep = result.unrepresentable
    lines = [
        f"census at degree {degree}: {len(unrep)} of {len(result.results)} "
        "rankings unrepresentable"
    ]
    if unrep:
        lines.append("unrepresentable: " + " ".join(r.word() for r in unrep))
    lines.append("representable:   " + " ".join(r.word() for r in result.representable))
    return "\n".join(lines) + "\n"


def _cmd_fit_greedy(args):
    space = _space_of(args)
    target, label = _target_of(args, space)
    degree = args.degree if args.degree is not None else 1
    report = greedy_fit(target, degree, _greedy_config(args, space))
    return _render_fit(report, label, args.out)


def _cmd_fit_em(args):
    space = _space_of(args)
    target, label = _target_of(args, space)
    degree = args.degree if args.degree is not None else 1
    report = em_fit(target, degree, _em_config(args, space))
    return _render_fit(report, label, args.out)


def _cmd_table1(args):
    space = _space_of(args)
    report = run_table1(
        space,
        degrees=_degrees_of(args),
        greedy_config=_greedy_config(args, space),
        em_config=_em_config(args, space),
        jobs=args.jobs,
    )
    return _render_table(report, args.out)


def _cmd_table2(args):
    space = _space_of(args)
    report = run_table2(
        space,
        degrees=_degrees_of(args),
        grid=_grid_of(args),
        greedy_config=_greedy_config(args, space),
        em_config=_em_config(args, space),
        jobs=args.jobs,
    )
    return _render_table(report, args.out)


def _render_table(report, out):
    if out == "json":
        return report.to_json()
    if out == "csv":
        return report.to_csv()
    return report.to_text()


def _cmd_bound(args):
    space = _space_of(args)
    value = greedy_bound(args.steps, space)
    if args.out == "json":
        return dumps_compact({"steps": args.steps, "bound": value})
    if args.out == "csv":
        return f"steps,bound\n{args.steps},{value:.17g}\n"
    return f"greedy error bound after {args.steps} steps: {value:.6g}\n"


def _cmd_certificate(args):
    space = _space_of(args)
    ranking = _ranking_of(args, space)
    cert = adjacency_certificate(ranking, space)
    if args.out == "json":
        return dumps_compact(
            {
                "ranking": ranking.word(),
                "reverse": ranking.reverse().word(),
                "level": cert.level,
                "margin": cert.margin,
                "entries": [
                    {"menu": [space.ids[i] for i in menu], "alternative": space.ids[alt],
                     "value": value}
                    for (menu, alt), value in sorted(cert.entries.items())
                ],
            }
        )
    lines = [
        f"adjacency certificate for {ranking.word()} and its reverse "
        f"{ranking.reverse().word()}",
        f"shared level {cert.level:.6g}; every other ranking exceeds it "
        f"by at least {cert.margin:.6g}",
    ]
    if args.out == "csv":
        rows = ["menu,alternative,value"]
        rows += [
            f"{'+'.join(space.ids[i] for i in menu)},{space.ids[alt]},{value:.17g}"
            for (menu, alt), value in sorted(cert.entries.items())
        ]
        return "\n".join(rows) + "\n"
    for (menu, alt), value in sorted(cert.entries.items()):
        menu_txt = "{" + ", ".join(space.ids[i] for i in menu) + "}"
        lines.append(f"  {menu_txt} -> {space.ids[alt]}: {value:+.6g}")
    return "\n".join(lines) + "\n"


def _add_common(sub):
    sub.add_argument("--data", help="alternatives CSV (id,<char_1>,...)")
    sub.add_argument(
        "--builtin", choices=["fishing"], default="fishing",
        help="builtin dataset used when --data is absent",
    )
    sub.add_argument("--degree", type=int, default=None,
                     help="monomial degree (tables default to both 1 and 2)")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", choices=["text", "csv", "json"], default="text")
    sub.add_argument("--jobs", type=int, default=1,
                     help="parallel worker processes for independent tasks")


def _add_greedy(sub):
    sub.add_argument("--steps", type=int, default=1000)
    sub.add_argument("--restarts", type=int, default=20)
    sub.add_argument("--inner-iters", type=int, default=500)
    sub.add_argument("--stop-tol", type=float, default=0.0)


def _add_em(sub):
    sub.add_argument("--mixtures", type=int, default=None,
                     help="component count (default: saturation bound of the space)")
    sub.add_argument("--inits", type=int, default=10)
    sub.add_argument("--tol", type=float, default=1e-6)
    sub.add_argument("--max-sweeps", type=int, default=5000)
    sub.add_argument("--newton-steps", type=int, default=6)


def _add_grid(sub):
    sub.add_argument("--eta-min", type=float, default=-10.0)
    sub.add_argument("--eta-max", type=float, default=10.0)
    sub.add_argument("--eta-step", type=float, default=1.0)


def _add_target(sub):
    sub.add_argument("--ranking", required=True, help="ranking word, e.g. 1234")
    sub.add_argument(
        "--mix-reverse", action="store_true",
        help="fit the half/half blend of the ranking and its reverse",
    )
    sub.add_argument("--eta", default=None,
                     help="fixed effects, comma-separated, one per alternative")


def build_parser():
    parser = _Parser(prog="rumapprox", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("diagnose", help="independence diagnostics and census")
    _add_common(p)
    p.set_defaults(handler=_cmd_diagnose)

    p = subs.add_parser("census", help="classify every ranking of the space")
    _add_common(p)
    p.set_defaults(handler=_cmd_census)

    p = subs.add_parser("fit-greedy", help="greedy fit of one target")
    _add_common(p)
    _add_target(p)
    _add_greedy(p)
    p.set_defaults(handler=_cmd_fit_greedy)

    p = subs.add_parser("fit-em", help="EM fit of one target")
    _add_common(p)
    _add_target(p)
    _add_em(p)
    p.set_defaults(handler=_cmd_fit_em)

    p = subs.add_parser("table1", help="per-ranking error table, both engines")
    _add_common(p)
    _add_greedy(p)
    _add_em(p)
    p.set_defaults(handler=_cmd_table1)

    p = subs.add_parser("table2", help="reversed-pair mixtures with searched fixed effects")
    _add_common(p)
    _add_greedy(p)
    _add_em(p)
    _add_grid(p)
    p.set_defaults(handler=_cmd_table2)

    p = subs.add_parser("bound", help="greedy error bound for a step count")
    _add_common(p)
    p.add_argument("--steps", type=int, default=1000)
    p.set_defaults(handler=_cmd_bound)

    p = subs.add_parser("certificate", help="adjacency certificate for a ranking")
    _add_common(p)
    p.add_argument("--ranking", required=True, help="ranking word, e.g. 1234")
    p.set_defaults(handler=_cmd_certificate)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        output = args.handler(args)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    sys.stdout.write(output if output.endswith("\n") else output + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
