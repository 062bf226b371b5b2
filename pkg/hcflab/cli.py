"""Command-line front end: run, check, resume, probe and inspect.

Exit codes: 0 success, 2 configuration error, 3 numerical abort, 4 check
failure, 5 storage failure, 1 anything unexpected.
"""

import argparse
import json
import logging
import os
import sys

import pandas as pd

from . import __version__
from .checkpoint import check_compatible, inspect_checkpoint, latest_checkpoint, load_checkpoint
from .common import CheckFailure, ConfigError, GridError, HcfError, NumericalError, StorageError, setup_logging
from .config import CHECK_KINDS, config_hash, load_config, parse_config
from .flow import FlowState, run_flow
from .grid import DERIVATIVE_MODES, PROBE_RESOLUTIONS, convergence_probe
from .trig import ANALYTIC_PRESETS, analytic_preset
from .verify import run_checks, write_report

logger = logging.getLogger("hcflab.cli")

EXIT_OK = 0
EXIT_UNEXPECTED = 1


def cmd_run(args):
    cfg = load_config(args.config, args.set)
    directory = cfg.run_directory
    setup_logging(cfg.name, directory, args.verbose)
    digest = config_hash(cfg)
    logger.info("Run %s (config %s, seed %d) into %s", cfg.name, digest[:12], cfg.seed, directory)
    result = run_flow(cfg, directory, config_hash=digest)
    summary = result.summary
    logger.info("Finished at t=%.6g after %d steps", summary.t_final, summary.steps)
    return EXIT_OK


def cmd_check(args):
    cfg = load_config(args.config, args.set)
    directory = cfg.run_directory
    setup_logging(cfg.name + "-check", directory, args.verbose)
    which = args.which or None
    report = run_checks(cfg, which, config_hash(cfg))
    write_report(report, directory)
    if not report.passed:
        names = ", ".join(r.name for r in report.failures)
        raise CheckFailure("{0} of {1} residuals failed: {2}".format(len(report.failures), len(report.records), names))
    logger.info("All %d residuals passed", len(report.records))
    return EXIT_OK


def _resolve_checkpoint(path):
    if os.path.isdir(path):
        found = latest_checkpoint(os.path.join(path, "checkpoints")) or latest_checkpoint(path)
        if found is None:
            raise StorageError("no checkpoint found under {0}".format(path))
        return found
    return path


def cmd_resume(args):
    path = _resolve_checkpoint(args.checkpoint)
    data = load_checkpoint(path)
    if args.config is not None:
        cfg = load_config(args.config, args.set)
    else:
        cfg = parse_config(data.config_yaml, args.set, source=path)
    directory = cfg.run_directory
    setup_logging(cfg.name, directory, args.verbose)
    digest = config_hash(cfg)
    check_compatible(data, cfg, digest, args.force)
    state = FlowState.from_checkpoint(data)
    logger.info("Resuming %s from step %d (t=%.6g)", cfg.name, data.step, data.t)
    result = run_flow(cfg, directory, state, config_hash=digest, K0=data.K0, resumed=True,
                      monitors=data.monitors)
    logger.info("Finished at t=%.6g after %d steps", result.summary.t_final, result.summary.steps)
    return EXIT_OK


def cmd_probe(args):
    setup_logging("probe", None, args.verbose)
    field = analytic_preset(args.preset, args.n)
    rows = convergence_probe(field, args.modes, args.resolutions, args.axis)
    frame = pd.DataFrame([{"mode": r.mode, "resolution": r.resolution, "error": r.error,
                           "ratio": r.ratio, "order": r.order} for r in rows])
    for line in frame.to_string(index=False).splitlines():
        logger.info(line)
    if args.output:
        try:
            frame.to_csv(args.output, index=False)
        except OSError as err:
            raise StorageError("cannot write probe table {0}: {1}".format(args.output, err))
        logger.info("Probe table written to %s", args.output)
    return EXIT_OK


def cmd_inspect(args):
    header = inspect_checkpoint(_resolve_checkpoint(args.checkpoint))
    json.dump(header, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="hcflab", description="Numerical laboratory for the flow dg/dt = -S.")
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p, config_required=False):
        p.add_argument('-v', '--verbose', action='store_true', help='print DEBUG records')
        p.add_argument('--set', action='append', default=[], metavar='SECTION.KEY=VALUE',
                       help='override a configuration value (repeatable)')
        if config_required:
            p.add_argument('config', nargs='?', default=None, help='YAML run configuration')

    p = sub.add_parser('run', help='integrate the flow and record monitors')
    common(p, True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser('check', help='run residual suites and write verification.json')
    common(p, True)
    p.add_argument('--which', action='append', choices=CHECK_KINDS,
                   help='suite to run (repeatable); defaults to checks.which')
    p.set_defaults(func=cmd_check)

    p = sub.add_parser('resume', help='continue a run from a checkpoint')
    common(p)
    p.add_argument('checkpoint', help='checkpoint file, or a run directory for its newest checkpoint')
    p.add_argument('--config', default=None, help='configuration to use instead of the embedded one')
    p.add_argument('--force', action='store_true', help='resume despite a configuration hash mismatch')
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser('probe', help='grid convergence table of the derivative operators')
    p.add_argument('-v', '--verbose', action='store_true')
    p.add_argument('--preset', default='sin_cos', choices=sorted(ANALYTIC_PRESETS))
    p.add_argument('--n', type=int, default=1)
    p.add_argument('--axis', type=int, default=0)
    p.add_argument('--modes', nargs='+', default=list(DERIVATIVE_MODES), choices=DERIVATIVE_MODES)
    p.add_argument('--resolutions', nargs='+', type=int, default=list(PROBE_RESOLUTIONS))
    p.add_argument('-o', '--output', default=None, help='write the table as CSV')
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser('inspect', help='print a checkpoint header as JSON')
    p.add_argument('checkpoint')
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None):
    """Parse `argv`, dispatch, and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HcfError as err:
        logger.error("%s", err)
        return err.exit_code
    except GridError as err:
        logger.error("%s", err)
        return ConfigError.exit_code
    except ValueError as err:
        # out-of-domain input to a numerical routine
        logger.error("Numerical failure: %s", err)
        return NumericalError.exit_code
    except OSError as err:
        logger.error("I/O failure: %s", err)
        return StorageError.exit_code
    except Exception:
        logger.exception("Unexpected failure")
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
