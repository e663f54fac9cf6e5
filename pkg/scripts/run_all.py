#!/usr/bin/env python3
"""Run the whole desk-scale experiment campaign into out/.

Each example config is driven through the matching CLI commands; pass
--figures to also render every produced CSV (requires the separately
installed `figures` package).
"""

import argparse
import shutil
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"

CAMPAIGN = [
    ("solve", "contact_pair.ini", []),
    ("verify", "contact_pair.ini", []),
    ("oracle-compare", "contact_pair.ini",
     ["--eps-list", "1e-4,5e-5,2.5e-5"]),
    ("solve", "crossing_triple.ini", []),
    ("verify", "crossing_triple.ini", []),
    ("solve", "bump_triple.ini", []),
    ("verify", "bump_triple.ini", []),
    ("stationary", "stationary_single.ini", []),
    ("perturb", "perturb_pair.ini", ["--delta", "0.4", "--halvings", "2"]),
    ("asymptotic", "asymptotic_pair.ini", ["--check-interval", "0.5"]),
    ("solve", "square_pair_2d.ini", []),
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=ROOT / "out", type=Path)
    parser.add_argument("--figures", action="store_true",
                        help="render every produced CSV with the figures CLI")
    args = parser.parse_args()

    failures = 0
    for command, config, extra in CAMPAIGN:
        out_dir = args.out / f"{Path(config).stem}_{command.replace('-', '_')}"
        cmd = [sys.executable, "-m", "nmembranes.cli", command,
               "--config", str(CONFIGS / config), "--out", str(out_dir),
               *extra]
        print(f"$ {' '.join(cmd[2:])}")
        code = subprocess.call(cmd)
        if code != 0:
            print(f"  -> exit {code}")
            failures += 1

    if args.figures:
        figures = shutil.which("figures")
        if figures is None:
            print("figures CLI not installed; skipping rendering")
        else:
            for csv in sorted(args.out.rglob("*.csv")):
                kind = ("timeseries" if csv.name in ("timeseries.csv",
                                                     "asymptotic.csv")
                        else "scaling" if csv.name in ("oracle_compare.csv",
                                                       "perturb.csv")
                        else "snapshot")
                png = csv.with_suffix(".png")
                code = subprocess.call([figures, kind, str(csv),
                                        "-o", str(png)])
                if code != 0:
                    print(f"  -> figures failed on {csv}")
                    failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
