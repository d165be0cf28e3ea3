from django.apps import AppConfig


class PeArrayConfig(AppConfig):
    name = 'pe_array'
    verbose_name = 'Systolic PE array'
