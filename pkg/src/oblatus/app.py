from __future__ import annotations

import sys

from oblatus.cli import main as cli_main


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))
