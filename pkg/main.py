from __future__ import annotations

import sys

from orcabehavior_hub.cli.interface import main as cli_main


def main() -> int:
    return cli_main(sys.argv[1:])


if __name__ == '__main__':
    sys.exit(main())
