from pathlib import Path

from django.conf import settings

from arch_core.layers import validate_model
from arch_core.zoo import BUNDLED
from host_runtime.cli import ScnnCommand
from host_runtime.descriptors import dump_model


class Command(ScnnCommand):
    help = 'Write the bundled model descriptors from the model zoo.'

    def add_arguments(self, parser):
        parser.add_argument('names', nargs='*', metavar='name',
                            help=f"Models to export (default: all of "
                                 f"{', '.join(BUNDLED)}).")
        parser.add_argument('--output-dir', type=Path,
                            default=settings.MODELS_DIR,
                            help='Directory to write to (default: '
                                 '%(default)s).')

    def handle(self, *args, **options):
        names = options['names'] or list(BUNDLED)
        unknown = [name for name in names if name not in BUNDLED]
        if unknown:
            raise ValueError(f"no zoo builder for {', '.join(unknown)}")
        options['output_dir'].mkdir(parents=True, exist_ok=True)
        for name in names:
            path = options['output_dir'] / f"{name}.json"
            dump_model(validate_model(BUNDLED[name]()), path)
            self.stdout.write(f"Wrote {path}")
