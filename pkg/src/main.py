"""
Command-line entry point for t1track experiments
"""

import argparse
import sys
from typing import List, Optional

import yaml
from pydantic import ValidationError

from .errors import ConfigError, NumericalError
from .experiments import COMMANDS, config_hash, resolve_config, run_command
from .utils.config import get_config
from .utils.logger import get_run_logger, log_banner, resolve_level

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="t1",
        description="t1track - adaptive Bayesian T1 estimation experiments"
    )

    parser.add_argument(
        'command',
        choices=list(COMMANDS),
        help='Experiment to run'
    )

    parser.add_argument(
        '--config',
        type=str,
        default=None,
        help='Experiment YAML file'
    )

    parser.add_argument(
        '--seed',
        type=int,
        default=None,
        help='Unsigned 64-bit seed'
    )

    parser.add_argument(
        '--out',
        type=str,
        default=None,
        help='Output directory'
    )

    parser.add_argument(
        '--preset',
        type=str,
        default=None,
        help='Named parameter preset'
    )

    parser.add_argument(
        '--quiet',
        action='store_true',
        help='Hide progress bars'
    )

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_CONFIG

    defaults = get_config()
    logger = get_run_logger(args.command, base_log_dir=defaults.log_dir, level=resolve_level(defaults.log_level),
                            quiet=args.quiet)

    try:
        log_banner(logger, f"Starting t1 {args.command}")

        logger.info("STAGE 1: Resolving configuration...")
        config = resolve_config(
            config_file=args.config,
            preset=args.preset,
            seed=args.seed,
            out=args.out,
            defaults_path=defaults.config_path,
            default_output_dir=defaults.output_dir
        )
        logger.info(f"Preset: {config.preset or 'none'}, seed: {config.seed}, output: {config.output_dir}")
        logger.info(f"Config hash: {config_hash(config)}")

        logger.info(f"STAGE 2: Running {args.command}...")
        summary = run_command(args.command, config, logger, max_workers=defaults.max_workers,
                              progress=not args.quiet)

        log_banner(logger, f"{args.command.upper()} COMPLETED SUCCESSFULLY")
        for key, value in summary.items():
            logger.info(f"{key}: {value}")

        if not args.quiet:
            print(f"\n✓ {args.command} completed successfully!")
            print(f"Results saved to: {config.output_dir}")
        return EXIT_OK

    except (ConfigError, ValidationError, yaml.YAMLError, FileNotFoundError) as e:
        logger.error(f"Configuration error: {str(e)}", exc_info=True)
        print(f"\n✗ Configuration error: {str(e)}", file=sys.stderr)
        return EXIT_CONFIG

    except NumericalError as e:
        logger.error(f"Numerical failure: {str(e)}", exc_info=True)
        print(f"\n✗ Numerical failure: {str(e)}", file=sys.stderr)
        return EXIT_NUMERICAL

    except KeyboardInterrupt:
        print("\n\nRun interrupted by user", file=sys.stderr)
        return EXIT_FAILURE

    except Exception as e:
        logger.error(f"Run failed: {str(e)}", exc_info=True)
        print(f"\n✗ Run failed: {str(e)}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
