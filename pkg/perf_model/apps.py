from django.apps import AppConfig


class PerfModelConfig(AppConfig):
    name = 'perf_model'
    verbose_name = 'Performance model'
