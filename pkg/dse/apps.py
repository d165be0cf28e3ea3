from django.apps import AppConfig


class DseConfig(AppConfig):
    name = 'dse'
    verbose_name = 'Design space exploration'
