"""Rerun the five-agent benchmark and write its CSVs (wraps ``cpl reproduce-paper``).

    python3 scripts/reproduce.py --out reproduction --jobs 2
"""
import sys

from cpl.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce-paper", *sys.argv[1:]]))
