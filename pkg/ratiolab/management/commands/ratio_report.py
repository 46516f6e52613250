import json
import logging
import sys
from functools import partial
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from ...exceptions import ConfigurationError, RatioLabError
from ...report import (
    CONFIG_KEYS,
    RunConfig,
    parse_config_file,
    render_text,
    run_report,
    write_records,
    write_table_records,
)

logger = logging.getLogger(__name__)


def usage_error(parser, message: str):
    """
    Report an argument parsing error as a configuration error

    :param parser: the command's parser
    :type parser: CommandParser
    :param message: argparse's message
    :type message: str
    """
    error = ConfigurationError(f"usage: {message}", module="cli")
    record = json.dumps(error.as_record(), sort_keys=True)
    logger.error("ratio_report: %s (%s)", error.message, type(error).__name__)
    if parser.called_from_command_line:
        parser.print_usage(sys.stderr)
        parser.exit(error.exit_code, f"CommandError: {record}\n")
    raise CommandError(record, returncode=error.exit_code)


class Command(BaseCommand):
    help = "Report first-order, second-order and oracle MSEs of the t1-t5 estimators"

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.error = partial(usage_error, parser)
        return parser

    def add_arguments(self, parser):
        parser.add_argument("--config", type=Path, help="key = value file; flags override its keys")
        source = parser.add_mutually_exclusive_group()
        source.add_argument("--data", help="population CSV with header y,x,z")
        source.add_argument("--fixture", help="literal V-value fixture (Vpqr = value per line)")
        parser.add_argument("--n", help="sample size")
        parser.add_argument("--estimators", help="comma-separated families, e.g. t1,t4")
        parser.add_argument(
            "--params",
            help="explicit | optimal-published | optimal-quadratic | optimal-search, "
            "then ';family:key=value,...' overrides",
        )
        parser.add_argument("--mode", help="as-published | re-derived | both")
        parser.add_argument("--reps", help="Monte Carlo replications")
        parser.add_argument("--seed", help="Monte Carlo seed")
        parser.add_argument("--budget", help="largest subset count enumerated exactly")
        parser.add_argument("--out", help="write one JSON record per report cell to this file")
        parser.add_argument("--policy", help="V-table policy: closed-form-where-listed | enumerate-everything | closed-form-all")
        parser.add_argument("--workers", help="parallel Monte Carlo workers (results do not depend on it)")
        parser.add_argument("--dump-v", help="write the V table as 'p q r value provenance' lines to this file")
        parser.add_argument("--dump-moments", help="write the central-moment sums as 'p q r value provenance' lines (--data only)")

    def handle(self, *args, **options):
        try:
            values = parse_config_file(options["config"]) if options.get("config") else {}
            for key in CONFIG_KEYS:
                if options.get(key) is not None:
                    values[key] = options[key]
            config = RunConfig.from_values(values)
            report = run_report(config)
            self.stdout.write(render_text(report), ending="")
            for warning in report.warnings:
                self.stderr.write(f"warning: {warning}")
            if config.out is not None:
                count = write_records(report, config.out)
                self.stderr.write(f"wrote {count} records to {config.out}")
            if config.dump_v is not None:
                count = write_table_records(report.v_table, config.dump_v)
                self.stderr.write(f"wrote {count} V records to {config.dump_v}")
            if config.dump_moments is not None:
                count = write_table_records(report.moments, config.dump_moments)
                self.stderr.write(f"wrote {count} moment records to {config.dump_moments}")
        except RatioLabError as e:
            logger.error("ratio_report: %s (%s)", e.message, type(e).__name__)
            raise CommandError(json.dumps(e.as_record(), sort_keys=True), returncode=e.exit_code)
