"""Command-line entry point: ``distbell run|list|validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, load_config, run_experiment

log = logging.getLogger("distbell")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="distbell", description="Distributional Bellman experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one experiment and write its report")
    run.add_argument("--experiment", choices=EXPERIMENTS)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory (default: $DISTBELL_OUT or ./results/<experiment>)")
    run.add_argument("--atoms", type=_int_list, help="atom counts, e.g. 2,5,11")
    run.add_argument("--sweeps", type=int)
    run.add_argument("--rollouts", type=int)
    run.add_argument("--epsilon", type=float)
    run.add_argument("--jobs", type=int, help="worker processes for cliffwalk_atoms")
    run.add_argument("--config", help="JSON config file; flags override its values")

    sub.add_parser("list", help="list experiment names")

    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("--config", required=True)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else None
    experiment = args.experiment or (cfg.experiment if cfg else None)
    if experiment is None:
        raise ConfigError("run needs --experiment or a --config naming one")
    if cfg is not None and cfg.experiment != experiment:
        raise ConfigError(f"--experiment {experiment} disagrees with the config file ({cfg.experiment})")
    params = dict(cfg.params) if cfg else {}
    overrides = {"atoms": args.atoms, "sweeps": args.sweeps, "rollouts": args.rollouts,
                 "epsilon": args.epsilon, "jobs": args.jobs}
    for key, value in overrides.items():
        if value is not None:
            params[key] = value
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    out = args.out or (cfg.out if cfg else None)
    config = ExperimentConfig(experiment, seed, out, params)
    config.validate()
    return config


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")

    if args.command == "list":
        for name in EXPERIMENTS:
            print(name)
        return EXIT_OK

    if args.command == "validate":
        try:
            config = load_config(args.config)
        except ConfigError as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK

    try:
        config = _config_from_args(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = config.output_dir()
    if not (args.out or config.out):
        out_dir = out_dir / config.experiment
    log.info("running %s (seed %d) into %s", config.experiment, config.seed, out_dir)
    report = run_experiment(config)
    path = report.write(out_dir)
    for e in report.expectations:
        print(f"{'PASS' if e.passed else 'FAIL'} [{e.criterion}] {e.name}: value={e.to_dict()['value']} "
              f"bound={e.to_dict()['bound']}")
    print(f"report: {path} ({report.duration:.1f}s)")
    return EXIT_OK if report.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
