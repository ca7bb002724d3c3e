#!/usr/bin/env python3
"""Generate the synthetic leaf corpus used by the demo and the
determinism checks."""

import argparse

from leafkit.synthetic import make_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", help="directory to write the corpus into")
    parser.add_argument("--images", type=int, default=50)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    paths = make_corpus(args.out_dir, n_images=args.images, size=args.size,
                        seed=args.seed)
    for key, value in paths.items():
        print(f"{key}: {value}")


if __name__ == "__main__":
    main()
