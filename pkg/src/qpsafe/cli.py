"""Command-line interface: run scenarios, batch suites, validation.

Commands:
  run <config>            one scenario, CSV + metrics JSON to the output dir
  suite <paths...>        many scenarios (dirs expand to *.toml), summary
                          table, exit 1 on failed [assert] sections
  validate [--tol X]      fast numerical oracle suites
  dump-qp <config> --tick N   full QP matrices at one tick, plain text
  bench-qp [--repeat N]   time the available QP solver backends

The output root is taken from --output-root, then the QPSAFE_OUTPUT_ROOT
environment variable, then ./qpsafe_runs; a scenario's output_dir key
overrides the root for that scenario.
"""

import argparse
import json
import sys

from . import bench


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="qpsafe",
        description="Safety-critical QP controller benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--output-root", default=None)

    p_suite = sub.add_parser("suite", help="run a scenario batch")
    p_suite.add_argument("paths", nargs="+",
                         help="config files or directories of *.toml")
    p_suite.add_argument("--jobs", type=int, default=1)
    p_suite.add_argument("--output-root", default=None)

    p_val = sub.add_parser("validate", help="run numerical oracle suites")
    p_val.add_argument("--tol", type=float, default=1.0,
                       help="tolerance scale; < 1 tightens all thresholds")

    p_dump = sub.add_parser("dump-qp",
                            help="dump the assembled QP at one tick")
    p_dump.add_argument("config")
    p_dump.add_argument("--tick", type=int, required=True)
    p_dump.add_argument("--output-root", default=None)

    p_bench = sub.add_parser("bench-qp",
                             help="benchmark the QP solver backends")
    p_bench.add_argument("--repeat", type=int, default=200)
    return parser


def _cmd_run(args):
    cfg = bench.ScenarioConfig.from_file(args.config)
    _, metrics = bench.run_scenario(cfg, output_root=args.output_root)
    print(json.dumps(metrics.as_dict(), indent=2, sort_keys=True))
    failures = bench.check_assertions(cfg, metrics)
    for line in failures:
        print("ASSERT FAIL " + line, file=sys.stderr)
    return 1 if failures else 0


def _cmd_suite(args):
    result = bench.run_suite(args.paths, output_root=args.output_root,
                             jobs=args.jobs)
    print(result.table())
    for line in result.failures:
        print("ASSERT FAIL " + line, file=sys.stderr)
    return result.exit_code


def _cmd_validate(args):
    report = bench.validate(tol_scale=args.tol)
    print(report.format())
    return 0 if report.ok else 1


def _cmd_dump_qp(args):
    cfg = bench.ScenarioConfig.from_file(args.config)
    path = bench.dump_qp(cfg, args.tick, output_root=args.output_root)
    print(path)
    return 0


def _cmd_bench_qp(args):
    stats = bench.bench_qp(repeat=args.repeat)
    for backend, row in stats.items():
        print("%-8s solves=%d  mean=%.3e s  p95=%.3e s  max=%.3e s"
              % (backend, row["solves"], row["mean_s"], row["p95_s"],
                 row["max_s"]))
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "suite": _cmd_suite,
        "validate": _cmd_validate,
        "dump-qp": _cmd_dump_qp,
        "bench-qp": _cmd_bench_qp,
    }
    try:
        return handlers[args.command](args)
    except (bench.ConfigError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
