#!/usr/bin/env python3
"""Run the acceptance checks and print one PASS/FAIL line per criterion.

    python scripts/run_acceptance.py          # all eight
    python scripts/run_acceptance.py 6 7 8    # the fast ones
"""
import runpy
import sys
from pathlib import Path

if __name__ == "__main__":
    runpy.run_path(str(Path(__file__).resolve().parent.parent / "tests" / "test_acceptance.py"),
                   run_name="__main__")
