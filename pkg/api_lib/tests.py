from django.test import SimpleTestCase

from arch_core import zoo
from arch_core.layers import flop_count


class FlopsEndpointTests(SimpleTestCase):
    def test_bundled_model(self):
        response = self.client.get('/api/v0/flops/alexnet')
        self.assertEqual(response.status_code, 200)
        body = response.json()
        self.assertEqual(body['status'], 'OK')
        self.assertEqual(body['payload']['flops'], flop_count(zoo.alexnet()))

    def test_unknown_model(self):
        response = self.client.get('/api/v0/flops/vgg16')
        self.assertEqual(response.status_code, 404)
        self.assertEqual(response.json(), {'status': 'Unknown model',
                                           'payload': None})

    def test_paths_are_not_models(self):
        response = self.client.get('/api/v0/flops/..%2Ffpga%2Farria10')
        self.assertEqual(response.status_code, 404)

    def test_unsupported_parameter(self):
        response = self.client.get('/api/v0/flops/alexnet?ids=all')
        self.assertEqual(response.status_code, 400)

    def test_only_safe_methods(self):
        response = self.client.post('/api/v0/flops/alexnet')
        self.assertEqual(response.status_code, 405)


class LatencyEndpointTests(SimpleTestCase):
    def test_defaults(self):
        response = self.client.get('/api/v0/latency/alexnet')
        self.assertEqual(response.status_code, 200)
        payload = response.json()['payload']
        self.assertEqual(payload['options']['cfg'],
                         {'pe_num': 16, 'vec_fac': 16, 'reuse_fac': 4})
        self.assertEqual(payload['options']['mode'], 'model-only')
        self.assertEqual(len(payload['layers']), len(zoo.alexnet()))

    def test_batch_shrinks_fc_time(self):
        single = self.client.get('/api/v0/latency/alexnet?batch=1').json()
        batched = self.client.get('/api/v0/latency/alexnet?batch=4').json()
        fc6 = [[layer for layer in report['payload']['layers']
                if layer['name'] == 'fc6'][0]['latency']['seconds']
               for report in (single, batched)]
        self.assertAlmostEqual(fc6[0] / fc6[1], 4, delta=0.04)

    def test_explicit_config_and_board(self):
        response = self.client.get(
            '/api/v0/latency/resnet_toy?pe=4&vec=8&reuse=2&fpga=stratix10')
        options = response.json()['payload']['options']
        self.assertEqual(options['fpga'], 'stratix10')
        self.assertEqual(options['cfg'],
                         {'pe_num': 4, 'vec_fac': 8, 'reuse_fac': 2})

    def test_bad_parameters(self):
        for query in ('pe=0', 'pe=x', 'batch=5', 'fpga=virtex',
                      'colour=red'):
            with self.subTest(query):
                response = self.client.get(
                    f"/api/v0/latency/alexnet?{query}")
                self.assertEqual(response.status_code, 400)
                self.assertIsNone(response.json()['payload'])


class DseEndpointTests(SimpleTestCase):
    def test_arria10(self):
        response = self.client.get('/api/v0/dse/alexnet?fpga=arria10')
        self.assertEqual(response.status_code, 200)
        payload = response.json()['payload']
        self.assertEqual(payload['chosen'],
                         {'pe_num': 16, 'vec_fac': 16, 'reuse_fac': 4})
        self.assertIn('Synthetic', payload['profile_note'])
        self.assertEqual([sweep['parameter'] for sweep in payload['sweeps']],
                         ['vec_fac', 'pe_num', 'reuse_fac'])

    def test_unknown_model(self):
        self.assertEqual(self.client.get('/api/v0/dse/nope').status_code,
                         404)
