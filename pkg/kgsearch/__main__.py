"""Allow `python -m kgsearch`."""

import sys

from .cli import main

sys.exit(main())
