"""Integrates one landing (or PLAM) flow; flags as for ``landingflow run``."""
import sys

from landingflow.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", *sys.argv[1:]]))
