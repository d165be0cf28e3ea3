from django.core.exceptions import ValidationError
from django.core.management import CommandError

from arch_core.config import ArchConfig, validate_arch
from arch_core.errors import ShapeError
from host_runtime.cli import ScnnCommand
from host_runtime.reports import validation_report
from perf_model.model import dsp_usage


def _collect(errors, prefix, error):
    if hasattr(error, 'error_dict'):
        for field, messages in error.message_dict.items():
            errors[f"{prefix}.{field}"] = messages
    else:
        errors[prefix] = error.messages


class Command(ScnnCommand):
    help = ('Check a model descriptor, a board description and an '
            'architecture configuration, and whether the configuration fits '
            'on the board.')

    def add_arguments(self, parser):
        parser.add_argument(
            '--model', help='Model descriptor: a JSON path or a bundled name.')
        self.add_fpga_argument(parser)
        self.add_arch_arguments(parser)
        self.add_json_argument(parser)

    def handle(self, *args, **options):
        errors = {}
        model = fpga = cfg = None

        if options['model']:
            try:
                model = self.load_model(options)
            except ValidationError as e:
                _collect(errors, 'model', e)
            except ShapeError as e:
                errors[f"model.{e.layer}" if e.layer else 'model'] = [str(e)]

        try:
            fpga = self.load_fpga(options)
        except ValidationError as e:
            _collect(errors, 'fpga', e)

        try:
            if fpga is not None:
                cfg = self.arch_config(options, fpga)
            elif options['vec_fac'] is not None:
                cfg = validate_arch(ArchConfig(options['pe_num'],
                                               options['vec_fac'],
                                               options['reuse_fac']))
        except ValidationError as e:
            _collect(errors, 'cfg', e)

        if cfg is not None and fpga is not None:
            resources = dsp_usage(cfg, fpga)
            if not resources.feasible:
                errors['cfg'] = [f"{cfg} needs {resources.dsp_used:g} DSP "
                                 f"blocks, {fpga.name} has {fpga.dsp_count}."]

        if options['json']:
            self.write_json(validation_report(model, cfg, fpga, errors))
        elif not errors:
            for what in (model and model.name, fpga and fpga.name, cfg):
                if what:
                    self.stdout.write(f"{what}: valid")
        if errors:
            raise CommandError(
                '\n'.join(f"{field}: {' '.join(messages)}"
                          for field, messages in errors.items()),
                returncode=1)
