import argparse
import logging.config
import os
import sys

import yaml

from chronolens.utils.experiment import COMMANDS, EXIT_FAILURE, run_command

logger = logging.getLogger('bin.chronolens')

LOGGING_CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'logging.yaml')


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Passive spacetime tomography and wave interaction experiments")
    parser.add_argument('command', choices=COMMANDS, help="stage to run, 'all' chains every stage")
    parser.add_argument('--config', required=True, help="scenario JSON file")
    parser.add_argument('--out', default=None, help="directory of the run directories, overrides the scenario")
    parser.add_argument('--seed', type=int, default=None, help="replaces the seed of the scenario")
    parser.add_argument('--force', action='store_true',
                        help="reconstruct datasets whose configuration hash differs from the scenario")
    parser.add_argument('--jobs', type=int, default=None,
                        help="worker processes, defaults to $CHRONO_LENS_JOBS or 1")
    parser.add_argument('--dataset', default=None, help="dataset read by reconstruct and plots")
    parser.add_argument('--report', default=None, help="reconstruction report read by plots")
    return parser.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    with open(LOGGING_CONFIG) as f:
        logging.config.dictConfig(yaml.safe_load(f))

    jobs = args.jobs
    if jobs is None:
        try:
            jobs = int(os.environ.get('CHRONO_LENS_JOBS', 1))
        except ValueError:
            logger.error("CHRONO_LENS_JOBS must be an integer, got '%s'", os.environ['CHRONO_LENS_JOBS'])
            return EXIT_FAILURE
    return run_command(args.command, args.config, out=args.out, seed=args.seed, force=args.force,
                       jobs=max(jobs, 1), dataset=args.dataset, report=args.report)


if __name__ == '__main__':
    sys.exit(main())
