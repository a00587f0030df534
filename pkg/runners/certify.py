import sys

from landingflow.cli import main

if __name__ == "__main__":
    sys.exit(main(["certify", *sys.argv[1:]]))
