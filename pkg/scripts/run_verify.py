#!/usr/bin/env python3
"""Run the full oracle/property verification sweep (same as
`leafkit verify`) with configurable trial counts."""

import argparse

from leafkit import cli


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--metric-trials", type=int, default=1000)
    parser.add_argument("--gradient-points", type=int, default=100)
    parser.add_argument("--kernel-trials", type=int, default=100)
    args = parser.parse_args()
    return cli.cmd_verify(metric_trials=args.metric_trials,
                          gradient_points=args.gradient_points,
                          kernel_trials=args.kernel_trials)


if __name__ == "__main__":
    raise SystemExit(main())
