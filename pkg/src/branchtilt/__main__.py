"""Module entry point so ``python -m branchtilt`` works uninstalled."""

from .cli import main

if __name__ == "__main__":
    raise SystemExit(main())
