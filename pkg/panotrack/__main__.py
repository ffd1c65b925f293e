"""Allow ``python -m panotrack``."""

from .cli import main

raise SystemExit(main())
