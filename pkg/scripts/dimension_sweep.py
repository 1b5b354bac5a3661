"""Detection quality and MCU cost over the input/output dimension grid.

Thin wrapper around ``shm-edge sweep`` that generates the campaign in memory.
"""

import argparse
import sys

from shm_edge.cli import main as cli_main


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="YAML run configuration")
    ap.add_argument("--input-dims", default="1,2,5,10")
    ap.add_argument("--output-dims", default="15,30,60,120,240")
    ap.add_argument("--cf", default="16", help="compression factor, or 'none' to keep k fixed")
    ap.add_argument("--out")
    args = ap.parse_args()
    argv = (["--config", args.config] if args.config else []) + [
        "sweep", "--input-dims", args.input_dims, "--output-dims", args.output_dims]
    if args.cf != "none":
        argv += ["--cf", args.cf]
    if args.out:
        argv += ["--out", args.out]
    sys.exit(cli_main(argv))


if __name__ == "__main__":
    main()
