"""Allow ``python -m ptlsi``."""

import sys

from .cli import main

sys.exit(main())
