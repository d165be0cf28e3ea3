from dse.explore import (PE_NUM_VALUES, REUSE_FAC_VALUES, explore,
                         write_dse_csv)
from host_runtime.cli import ScnnCommand
from host_runtime.reports import exploration_report


def _values(text):
    return sorted({int(value) for value in text.split(',')})


class Command(ScnnCommand):
    help = ('Pick vec_fac, pe_num and reuse_fac for a model on a board and '
            'print every swept point as CSV.')

    def add_arguments(self, parser):
        self.add_model_argument(parser)
        self.add_fpga_argument(parser)
        parser.add_argument(
            '--pe-values', type=_values,
            default=list(PE_NUM_VALUES),
            help='Comma-separated pe_num candidates (default: 2,4,...,20).')
        parser.add_argument(
            '--reuse-values', type=_values,
            default=list(REUSE_FAC_VALUES),
            help='Comma-separated reuse_fac candidates (default: 1..32).')
        parser.add_argument(
            '--threads', type=int, default=None,
            help='Sweep points evaluated concurrently (default: '
                 'SCNN_THREADS).')
        self.add_json_argument(parser)

    def handle(self, *args, **options):
        model = self.load_model(options)
        fpga = self.load_fpga(options)
        exploration = explore(model, fpga, options['pe_values'],
                              options['reuse_values'], options['threads'])
        if options['json']:
            self.write_json(exploration_report(model, fpga, exploration))
        else:
            write_dse_csv(exploration, self.stdout)
