"""Configure Django before pytest collects the per-app ``tests.py`` modules.

Mirrors what ``./manage.py test`` does: set up Django, then the test
environment (test email backend, ``testserver`` in ALLOWED_HOSTS, ...).
"""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'scnn.settings')
django.setup()


def pytest_configure(config):
    from django.test.utils import setup_test_environment
    setup_test_environment()


def pytest_unconfigure(config):
    from django.test.utils import teardown_test_environment
    teardown_test_environment()
