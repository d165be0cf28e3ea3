from django.apps import AppConfig


class ApiLibConfig(AppConfig):
    name = 'api_lib'
    verbose_name = 'Report API'
