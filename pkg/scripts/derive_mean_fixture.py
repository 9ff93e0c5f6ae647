"""Derive the simulation mean-shape fixture from two landmark data sets
(the female and male gorilla skull files, gorf.dat and gorm.dat).

Each input is either a TPS file or a plain whitespace-separated number file
holding k rows of ``x y`` per specimen, specimens stacked. Each data set is
GPA-aligned; its mean shape is rescaled to the data set's average raw
centroid size so the fixture stays in raw coordinate units.

    python scripts/derive_mean_fixture.py gorf.dat gorm.dat -k 8 -o means.csv
"""

import argparse
from pathlib import Path

import numpy as np

from morphoclass.alignment import fgpa
from morphoclass.geometry import ShapeSample, centroid_sizes
from morphoclass.tpsio import read_tps, records_to_sample


def load(path, k):
    text = Path(path).read_text()
    if "LM=" in text.upper():
        return records_to_sample(read_tps(path))
    values = np.array(text.split(), dtype=float)
    if values.size % (2 * k):
        raise SystemExit(f"{path}: {values.size} numbers is not a multiple of 2k={2 * k}")
    return ShapeSample.from_array(values.reshape(-1, k, 2))


def mean_in_raw_units(sample):
    res = fgpa(sample)
    mean = res.mean_shape.points
    mean = mean - mean.mean(axis=0)
    size = np.sqrt(np.sum(mean**2))
    return mean / size * centroid_sizes(sample.array).mean()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("female")
    ap.add_argument("male")
    ap.add_argument("-k", type=int, default=8)
    ap.add_argument("-o", "--output", required=True)
    args = ap.parse_args(argv)
    lines = [f"# mean shapes derived from {Path(args.female).name} and {Path(args.male).name}",
             "group,landmark,x,y"]
    for group, path in (("female", args.female), ("male", args.male)):
        mean = mean_in_raw_units(load(path, args.k))
        lines += [f"{group},{i},{float(x)!r},{float(y)!r}" for i, (x, y) in enumerate(mean, 1)]
    Path(args.output).write_text("\n".join(lines) + "\n")
    print(f"wrote {args.output}; pass it to `morphoclass simulate --fixture`")


if __name__ == "__main__":
    main()
