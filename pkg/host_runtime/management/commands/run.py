from django.conf import settings
from django.core.management import CommandError

from arch_core.tensor import Tensor
from host_runtime.cli import ScnnCommand
from host_runtime.runtime import (Mode, RunOptions, reference_mismatches,
                                  run_inference, synthetic_inputs)
from host_runtime.weights import load_weights, save_weights, synthetic_weights


class Command(ScnnCommand):
    help = ('Run a model layer by layer through the simulated accelerator '
            'and report per-layer cycles and modeled latency.')

    def add_arguments(self, parser):
        self.add_model_argument(parser)
        self.add_fpga_argument(parser)
        self.add_arch_arguments(parser)
        parser.add_argument('--mode', choices=Mode.values,
                            default=Mode.SIMULATE.value,
                            help='simulate runs every kernel, model-only '
                                 'evaluates the latency model alone.')
        parser.add_argument('--batch', type=int, default=1,
                            help='Images per run, at most reuse_fac.')
        parser.add_argument('--seed', type=int, default=settings.DEFAULT_SEED,
                            help='Seed of synthetic weights and inputs.')
        parser.add_argument('--weights',
                            help='Weight file; synthetic weights otherwise.')
        parser.add_argument('--save-weights', metavar='PATH',
                            help='Write the weights used to PATH.')
        parser.add_argument('--input', action='append', default=[],
                            help='Raw little-endian float32 C x H x W image; '
                                 'repeat once per image of the batch.')
        parser.add_argument('--check', action='store_true',
                            help='Compare every layer with the double '
                                 'precision reference.')
        self.add_json_argument(parser)

    def handle(self, *args, **options):
        model = self.load_model(options)
        fpga = self.load_fpga(options)
        opts = RunOptions(self.arch_config(options, fpga), fpga,
                          options['mode'], options['batch'], options['seed'])

        weights = inputs = None
        if opts.mode == Mode.SIMULATE:
            if options['weights']:
                weights = load_weights(options['weights'], model)
            else:
                weights = synthetic_weights(model, opts.seed)
            if options['save_weights']:
                save_weights(options['save_weights'], model, weights)
            if options['input']:
                inputs = [Tensor.from_file(path, model.input_shape)
                          for path in options['input']]
            else:
                inputs = synthetic_inputs(model.input_shape, opts.batch,
                                          opts.seed)

        report = run_inference(model, weights, inputs, opts)
        result = report.as_dict()
        mismatched = []
        if options['check']:
            if opts.mode != Mode.SIMULATE:
                raise CommandError('--check needs --mode simulate',
                                   returncode=1)
            mismatched = reference_mismatches(report, model, weights, inputs)
            result['reference'] = {'mismatched_layers': mismatched}

        if options['json']:
            self.write_json(result)
        else:
            self.write_table(result)
        if mismatched:
            raise CommandError('simulation disagrees with the reference at '
                               f"{', '.join(mismatched)}", returncode=1)

    def write_table(self, result):
        options = result['options']
        self.stdout.write(f"{result['model']} on {options['fpga']} "
                          f"{options['cfg']} batch {options['batch']}")
        self.stdout.write(f"{'layer':<24} {'kind':<8} {'shape':<16} "
                          f"{'cycles':>12} {'seconds':>12} bound")
        for layer in result['layers']:
            shape = 'x'.join(map(str, layer['shape']))
            latency = layer['latency']
            self.stdout.write(f"{layer['name']:<24} {layer['kind']:<8} "
                              f"{shape:<16} {latency['cycles']:>12} "
                              f"{latency['seconds']:>12.6g} "
                              f"{latency['bound']}")
        totals = result['totals']
        line = f"total: {totals['modeled_seconds']:.6g} s modeled"
        if totals['simulated_cycles'] is not None:
            line += f", {totals['simulated_cycles']} cycles simulated"
        self.stdout.write(line)
        if 'reference' in result:
            mismatched = result['reference']['mismatched_layers']
            self.stdout.write('reference: ' + ('mismatch at '
                                               + ', '.join(mismatched)
                                               if mismatched else 'match'))
