"""Command line entry point: ``fedlf run | ablate | gradcheck``."""

from __future__ import annotations

import argparse
import logging
import sys
import time

from fedlf.config import dump_config, parse_config
from fedlf.errors import ConfigError, FormatError, InputError, NumericError


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _toggles(text):
    return {"on": (True,), "off": (False,), "both": (True, False)}[text]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedlf", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file (see configs/)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
        sp.add_argument("--format", choices=("csv", "jsonl"))

    run = sub.add_parser("run", help="run one experiment")
    common(run)
    run.add_argument("--out", help="report path (checkpoint written to <out>.params)")
    run.add_argument("--print-config", action="store_true", help="print the resolved config and exit")

    abl = sub.add_parser("ablate", help="run a lambda x gamma x component matrix")
    common(abl)
    abl.add_argument("--out", default="ablation", help="output directory")
    abl.add_argument("--lambdas", type=_floats, default=[0.0, 0.01, 0.1])
    abl.add_argument("--gammas", type=_floats, default=[0.0, 0.01, 0.1])
    abl.add_argument("--center", choices=("on", "off", "both"), default="on",
                     help="class-center loss toggle(s)")
    abl.add_argument("--decorrelation", choices=("on", "off", "both"), default="on",
                     help="decorrelation loss toggle(s)")
    abl.add_argument("--seeds", type=lambda s: [int(v) for v in s.split(",")], default=None,
                     help="comma-separated seeds; medians are reported")

    gc = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    gc.add_argument("--instances", type=int, default=20)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--tol", type=float, default=1e-4)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gradcheck":
            return _gradcheck(args)
        overrides = list(args.set)
        if args.format:
            overrides.append(f"format={args.format}")
        cfg = parse_config(args.config, overrides)
        if args.command == "run":
            if args.print_config:
                print(dump_config(cfg), end="")
                return 0
            from fedlf.experiment import run_experiment
            run_experiment(cfg, out=args.out)
            return 0
        from fedlf.experiment import run_ablation
        rows = run_ablation(cfg, args.lambdas, args.gammas, _toggles(args.center),
                            _toggles(args.decorrelation),
                            seeds=args.seeds or [cfg.seed], out_dir=args.out)
        return 0 if all(r["status"] == "ok" for r in rows) else 1
    except ConfigError as exc:
        print(f"fedlf: {exc}", file=sys.stderr)
        return 2
    except (InputError, FormatError, NumericError, OSError) as exc:
        print(f"fedlf: error: {exc}", file=sys.stderr)
        return 1


def _gradcheck(args) -> int:
    from fedlf.gradsuite import run_suite

    t0 = time.perf_counter()
    results = run_suite(args.instances, args.seed)
    worst = {}
    for name, i, rep in results:
        if name not in worst or rep.max_rel_error > worst[name][1].max_rel_error:
            worst[name] = (i, rep)
    ok = True
    for name, (i, rep) in worst.items():
        flag = "ok" if rep.passed(args.tol) else "FAIL"
        ok &= rep.passed(args.tol)
        print(f"{name:15s} worst rel {rep.max_rel_error:.3e} abs {rep.max_abs_error:.3e} "
              f"(instance {i}, {rep.worst_param}) {flag}")
    overall = max(rep.max_rel_error for _, _, rep in results)
    print(f"worst relative error {overall:.3e} over {len(results)} checks "
          f"in {time.perf_counter() - t0:.1f}s")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
