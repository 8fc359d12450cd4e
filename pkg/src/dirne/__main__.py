"""Run the command-line interface via ``python -m dirne``."""

from .cli import main

raise SystemExit(main())
