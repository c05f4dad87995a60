"""``python -m crossfoot`` exits with the audit status (0 clean, 1 findings, 2 errors)."""

import sys

from crossfoot.cli import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
