"""Writes the St(1, 2) landing trajectories and their manifest; flags as for ``landingflow figure1``."""
import sys

from landingflow.cli import main

if __name__ == "__main__":
    sys.exit(main(["figure1", *sys.argv[1:]]))
