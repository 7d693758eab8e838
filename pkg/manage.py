#!/usr/bin/env python
"""
DAPStore command-line utility.

Runs the Django management commands, including the storage pipeline:
gen_data, train_afford, train_cap, train_corr, eval and infer.
"""
import os
import sys


def main():
    # Settings hold the run ledger database, worker count and output root
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'dapstore.settings')

    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Install the packages in requirements.txt "
            "(pip install -r requirements.txt) or activate the virtual environment."
        ) from exc

    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
