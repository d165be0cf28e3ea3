from host_runtime.cli import ScnnCommand
from host_runtime.reports import flops_report


class Command(ScnnCommand):
    help = 'Count the multiply-accumulate FLOPs of a model.'

    def add_arguments(self, parser):
        parser.add_argument('model', nargs='+',
                            help='Model descriptors: JSON paths or bundled '
                                 'names.')
        parser.add_argument('--layers', action='store_true',
                            help='Also list the FLOPs of every layer.')
        self.add_json_argument(parser)

    def handle(self, *args, **options):
        reports = [flops_report(self.load_model({'model': model}))
                   for model in options['model']]
        if options['json']:
            self.write_json(reports[0] if len(reports) == 1 else reports)
            return

        for report in reports:
            self.stdout.write(f"{report['model']}: {report['gflops']:.2f} "
                              'GFLOPs')
            if options['layers']:
                for layer in report['layers']:
                    if layer['flops']:
                        self.stdout.write(f"  {layer['name']:<24} "
                                          f"{layer['flops'] / 1e9:10.4f}")
