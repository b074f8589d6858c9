"""Run one experiment; arguments are passed straight to the ``ribp`` command line."""
import sys

from ribp.cli import main

if __name__ == "__main__":
    sys.exit(main())
