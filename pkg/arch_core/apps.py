from django.apps import AppConfig


class ArchCoreConfig(AppConfig):
    name = 'arch_core'
    verbose_name = 'Architecture core types'
