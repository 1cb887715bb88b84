#!/usr/bin/env python3
"""Download optional datasets into data/ as headered CSV files.

    python3 scripts/fetch_datasets.py seeds
    python3 scripts/fetch_datasets.py mnist   # needs scikit-learn, ~15 MB download
"""

import argparse
import csv
import io
import sys
import urllib.request
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "data"

SEEDS_URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/00236/seeds_dataset.txt"
SEEDS_COLUMNS = [
    "area", "perimeter", "compactness", "kernel_length",
    "kernel_width", "asymmetry", "groove_length", "variety",
]
SEEDS_VARIETIES = {"1": "Kama", "2": "Rosa", "3": "Canadian"}


def fetch_seeds(out: Path) -> None:
    with urllib.request.urlopen(SEEDS_URL, timeout=60) as resp:
        text = resp.read().decode("utf-8")
    rows = []
    for line in io.StringIO(text):
        # The source file separates fields with runs of tabs.
        cells = line.split()
        if not cells:
            continue
        if len(cells) != 8:
            raise ValueError(f"unexpected seeds row: {line!r}")
        rows.append(cells[:7] + [SEEDS_VARIETIES[cells[7]]])
    with out.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SEEDS_COLUMNS)
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {out}")


def fetch_mnist(out: Path) -> None:
    from sklearn.datasets import fetch_openml

    x, y = fetch_openml("mnist_784", version=1, return_X_y=True, as_frame=False, parser="liac-arff")
    with out.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"px{i}" for i in range(x.shape[1])] + ["digit"])
        for row, label in zip(x.astype(int), y):
            w.writerow(list(row) + [label])
    print(f"wrote {len(y)} rows to {out}")


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("dataset", choices=["seeds", "mnist"])
    args = p.parse_args()
    DATA.mkdir(exist_ok=True)
    if args.dataset == "seeds":
        fetch_seeds(DATA / "seeds.csv")
    else:
        fetch_mnist(DATA / "mnist.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
