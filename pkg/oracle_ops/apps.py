from django.apps import AppConfig


class OracleOpsConfig(AppConfig):
    name = 'oracle_ops'
    verbose_name = 'Reference operators'
