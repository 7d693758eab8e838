import json
import logging
import sys
from functools import partial

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.core.serializers.json import DjangoJSONEncoder

from dapstore.env import KINDS
from dapstore.exceptions import DapError
from dapstore.pipeline.config import config_keys, load_config

logger = logging.getLogger(__name__)


class DapCommand(BaseCommand):
    """
    Base of the dap commands.

    Every command takes --config, --task, --seed, --out and one --<section>.<field>
    flag per config key, prints exactly one JSON line to stdout and exits with
    0 (success), 1 (usage), 2 (data or config) or 3 (numeric or convergence).
    """
    requires_system_checks = []

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.error = partial(self._usage_error, parser)
        return parser

    def _usage_error(self, parser, message):
        if parser.called_from_command_line:
            parser.print_usage(sys.stderr)
            parser.exit(1, f"{parser.prog}: error: {message}\n")
        raise CommandError(f"Error: {message}", returncode=1)

    def add_arguments(self, parser):
        parser.add_argument(
            '--config',
            help='JSON config file with flat dotted keys (nested sections also accepted)',
        )
        parser.add_argument(
            '--task',
            choices=KINDS,
            help='Scene family',
        )
        parser.add_argument(
            '--seed',
            type=int,
            help='Run seed, 0 <= seed < 2**64 (default: 0)',
        )
        parser.add_argument(
            '--out',
            help='Output root for paths not set explicitly (default: DAP_OUTPUT_ROOT)',
        )
        overrides = parser.add_argument_group('config overrides')
        for key in config_keys():
            if '.' in key:
                overrides.add_argument(f'--{key}', dest=key, metavar='VALUE', help=f'Override {key}')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        overrides = {key: options.get(key) for key in config_keys()}
        try:
            cfg = load_config(options['config'], overrides, out=options['out'])
            logger.info(f"{self.__module__.rsplit('.', 1)[-1]} started for task {cfg.task}, seed {cfg.seed}")
            summary = self.run(cfg, **options)
        except DapError as e:
            raise CommandError(f"{e.code}: {e}", returncode=e.exit_code)
        except OSError as e:
            raise CommandError(f"I/O error: {e}", returncode=2)

        self.stdout.write(json.dumps(summary, cls=DjangoJSONEncoder, sort_keys=True))
        if options['verbosity'] > 1:
            self.stderr.write('Done', style_func=self.style.SUCCESS)

    def run(self, cfg, **options) -> dict:
        raise NotImplementedError('subclasses of DapCommand must provide a run() method')

    @property
    def max_workers(self) -> int:
        return settings.DAP_THREADS
