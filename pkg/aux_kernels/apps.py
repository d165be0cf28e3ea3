from django.apps import AppConfig


class AuxKernelsConfig(AppConfig):
    name = 'aux_kernels'
    verbose_name = 'Auxiliary kernels'
