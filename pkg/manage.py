#!/usr/bin/env python
"""Command-line utility for caption engine tasks."""
import sys


def main():
    """Run caption engine subcommands."""
    try:
        from cli.main import run
    except ImportError as exc:
        raise ImportError(
            "Couldn't import the caption engine. Are its dependencies installed "
            "and available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
