#!/usr/bin/env python3
"""Penalization-convergence study: distance to the projected reference
solution as epsilon is halved repeatedly on the contact-pair problem."""

import argparse
from pathlib import Path

from nmembranes.config import load_config
from nmembranes.experiments import run_oracle_compare

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config",
                        default=ROOT / "configs" / "contact_pair.ini")
    parser.add_argument("--levels", type=int, default=4)
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    config = load_config(args.config)
    eps_list = [config.epsilon / 2 ** k for k in range(args.levels)]
    rows = run_oracle_compare(config, eps_list, jobs=args.jobs)
    print(f"{'eps':>12} {'max|diff|':>12} {'grad-p dist':>12} {'ratio':>8}")
    prev = None
    for row in rows:
        ratio = "" if prev is None else f"{row['max_norm_dist'] / prev:8.3f}"
        print(f"{row['eps']:12.3e} {row['max_norm_dist']:12.3e} "
              f"{row['gradp_dist']:12.3e} {ratio:>8}")
        prev = row["max_norm_dist"]
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
