#!/usr/bin/env python3
"""Run the full experiment battery into ./runs and report overall status."""

import sys

from mdcontrol import cli


def main() -> int:
    status = 0
    for name in ("lq", "quartic", "highdim", "gradcheck"):
        print(f"== mdcontrol {name} ==")
        status = max(status, cli.main([name, "--out", "runs"]))
    return status


if __name__ == "__main__":
    sys.exit(main())
