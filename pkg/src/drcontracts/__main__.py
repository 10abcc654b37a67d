"""Allow ``python -m drcontracts`` as an alternative to the console script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
