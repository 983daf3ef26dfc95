"""Allows `python -m symnet` as an alternative to the console script."""

import sys

from symnet.harness import main

if __name__ == "__main__":
    sys.exit(main())
