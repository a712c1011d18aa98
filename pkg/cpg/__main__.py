"""Allow ``python -m cpg``."""

import sys

from .cli import main

sys.exit(main())
