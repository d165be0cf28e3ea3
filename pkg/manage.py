#!/usr/bin/env python
"""Command-line entry point of the systolic CNN accelerator simulator."""
import os
import sys


def main():
    """Run a simulator subcommand or a Django administrative task."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'scnn.settings')
    try:
        from host_runtime.cli import cli
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    sys.exit(cli(sys.argv))


if __name__ == '__main__':
    main()
