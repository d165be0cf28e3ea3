from django.apps import AppConfig


class MemrdConfig(AppConfig):
    name = 'memrd'
    verbose_name = 'IFM load scheduling'
