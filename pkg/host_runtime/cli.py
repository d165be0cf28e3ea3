"""Command-line entry point and the shared base of the management commands.

Subcommands are Django management commands; `schedule-dump` and
`export-models` are accepted as spellings of their command names. Exit codes:
0 on success, 1 when a model, configuration or design is invalid, 2 when a
file cannot be read or parsed (and for usage errors).
"""

import logging
import os

from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management import (BaseCommand, CommandError,
                                     ManagementUtility)

from arch_core.config import ArchConfig, validate_arch
from arch_core.errors import MissingWeightsError
from dse.explore import select_vec_fac

from .descriptors import DescriptorError, load_fpga, load_model
from .reports import to_json
from .weights import WeightFormatError


logger = logging.getLogger(__name__)

ALIASES = {
    'schedule-dump': 'schedule_dump',
    'export-models': 'export_models',
}

DEFAULT_PE_NUM = 16
DEFAULT_REUSE_FAC = 4


def cli(argv):
    """Run the subcommand named by argv[1]; return the exit code."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'scnn.settings')

    argv = list(argv)
    if len(argv) > 1:
        argv[1] = ALIASES.get(argv[1], argv[1])
    try:
        ManagementUtility(argv).execute()
    except SystemExit as e:
        if e.code is None or isinstance(e.code, int):
            return e.code or 0
        return 1
    return 0


def format_validation_error(error):
    if hasattr(error, 'error_dict'):
        return '\n'.join(f"{field}: {' '.join(messages)}"
                         for field, messages in error.message_dict.items())
    return ' '.join(error.messages)


class ScnnCommand(BaseCommand):
    """Maps simulator exceptions to CommandError exit codes."""

    requires_system_checks = []

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except CommandError:
            raise
        except (OSError, DescriptorError, WeightFormatError,
                MissingWeightsError) as e:
            logger.warning('%s failed: %s', self.__module__, e)
            raise CommandError(str(e), returncode=2) from e
        except ValidationError as e:
            raise CommandError(format_validation_error(e),
                               returncode=1) from e
        except ValueError as e:
            raise CommandError(str(e), returncode=1) from e

    def add_model_argument(self, parser):
        parser.add_argument(
            '--model', required=True,
            help='Model descriptor: a JSON path or a bundled name.')

    def add_fpga_argument(self, parser):
        parser.add_argument(
            '--fpga', default=settings.DEFAULT_FPGA,
            help='Board description: a JSON path or a bundled name '
                 '(default: %(default)s).')

    def add_arch_arguments(self, parser):
        parser.add_argument(
            '--pe', type=int, default=DEFAULT_PE_NUM, dest='pe_num',
            help='pe_num (default: %(default)s).')
        parser.add_argument(
            '--vec', type=int, default=None, dest='vec_fac',
            help='vec_fac (default: burst width of the board / 32).')
        parser.add_argument(
            '--reuse', type=int, default=DEFAULT_REUSE_FAC, dest='reuse_fac',
            help='reuse_fac (default: %(default)s).')

    def add_json_argument(self, parser):
        parser.add_argument('--json', action='store_true',
                            help='Print a machine-readable JSON report.')

    def load_model(self, options):
        return load_model(options['model'])

    def load_fpga(self, options):
        return load_fpga(options['fpga'])

    def arch_config(self, options, fpga):
        vec_fac = options['vec_fac']
        if vec_fac is None:
            vec_fac = select_vec_fac(fpga)
        return validate_arch(ArchConfig(options['pe_num'], vec_fac,
                                        options['reuse_fac']))

    def write_json(self, report):
        self.stdout.write(to_json(report))
