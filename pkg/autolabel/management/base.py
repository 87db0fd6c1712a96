import json
import logging
from pathlib import Path

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from autolabel.conf import load_config
from autolabel.exceptions import AutolabelError
from autolabel.formats import atomic_write

logger = logging.getLogger('autolabel.commands')

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INVALID = 4


class PipelineCommand(BaseCommand):
    """
    Shared ``--config``/``--set`` handling. Subclasses implement
    ``run(config, **options)``; failures become exit codes 2 (config),
    3 (I/O) and 4 (malformed input or failed validation).
    """
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--config', default=None, help='JSON pipeline config')
        parser.add_argument(
            '--set', action='append', default=[], dest='overrides', metavar='SECTION.KEY=VALUE',
            help='override one config key; repeatable',
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            config = load_config(options.pop('config'), options['overrides'])
            return self.run(config, **options)
        except ValidationError as exc:
            raise CommandError('; '.join(exc.messages), returncode=EXIT_CONFIG)
        except OSError as exc:
            target = f" {exc.filename}" if exc.filename else ''
            raise CommandError(f"I/O error{target}: {exc.strerror or exc}", returncode=EXIT_IO)
        except AutolabelError as exc:
            raise CommandError(str(exc), returncode=EXIT_INVALID)

    def run(self, config, **options):
        raise NotImplementedError

    def write(self, path, data):
        atomic_write(path, data)
        logger.info("wrote %s", path)

    def write_resolved_config(self, out_dir, config):
        """Snapshot of the effective configuration next to the outputs."""
        path = Path(out_dir) / 'resolved_config.json'
        self.write(path, json.dumps(config.to_dict(), indent=2) + '\n')
        return path
