from django.core.management import CommandError

from arch_core.layers import LayerKind, input_shapes
from host_runtime.cli import ScnnCommand
from memrd.schedule import (iter_events, ifm_offchip_bytes, load_event_count,
                            write_schedule_csv)


class Command(ScnnCommand):
    help = ('Write the IFM load schedule of one conv layer as CSV: cycle, '
            'ofm_group, tile, channel_group, row, col, is_padding.')

    def add_arguments(self, parser):
        self.add_model_argument(parser)
        parser.add_argument('--layer', required=True,
                            help='Name of a conv layer of the model.')
        self.add_fpga_argument(parser)
        self.add_arch_arguments(parser)
        parser.add_argument('--output', '-o',
                            help='CSV file to write (default: stdout).')
        parser.add_argument('--json', action='store_true',
                            help='Print the schedule totals as JSON instead '
                                 'of the events.')

    def handle(self, *args, **options):
        model = self.load_model(options)
        cfg = self.arch_config(options, self.load_fpga(options))
        try:
            layer = model.layer(options['layer'])
        except KeyError as e:
            raise CommandError(e.args[0], returncode=1)
        if layer.kind != LayerKind.CONV:
            raise CommandError(f"layer {layer.name!r} is a {layer.kind} "
                               'layer; only conv layers have a load schedule',
                               returncode=1)
        ifm_shape = input_shapes(model)[layer.name]

        if options['json']:
            self.write_json({
                'model': model.name, 'layer': layer.name,
                'cfg': cfg.as_dict(), 'ifm_shape': list(ifm_shape),
                'load_cycles': load_event_count(layer, cfg, ifm_shape),
                'ifm_offchip_bytes': ifm_offchip_bytes(layer, cfg,
                                                       ifm_shape)})
            return

        events = iter_events(layer, cfg, ifm_shape)
        if options['output']:
            with open(options['output'], 'w', newline='',
                      encoding='utf-8') as f:
                write_schedule_csv(events, f)
        else:
            write_schedule_csv(events, self.stdout)
