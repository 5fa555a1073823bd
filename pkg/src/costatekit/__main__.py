"""Module entry point: ``python -m costatekit`` forwards to the CLI."""

from .cli import main

if __name__ == "__main__":
    raise SystemExit(main())
