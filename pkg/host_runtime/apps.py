from django.apps import AppConfig


class HostRuntimeConfig(AppConfig):
    name = 'host_runtime'
    verbose_name = 'Host runtime'
