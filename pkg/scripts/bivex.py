#!/usr/bin/env python3
"""Run the bivex command line from a source checkout.

Usage examples:
    ./scripts/bivex.py rate --rho 0.5 --u1 2 --u2 2
    ./scripts/bivex.py verify --quick --criterion QP
"""

import sys
from pathlib import Path

# Make the local package importable when it isn't installed.
repo_root = Path(__file__).resolve().parent.parent
if str(repo_root) not in sys.path:
    sys.path.insert(0, str(repo_root))

from bivex.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
