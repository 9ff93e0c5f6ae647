"""Write the surrogate 8-landmark mean-shape fixture used by the simulation
study when the gorilla skull data sets are not available.

The two outlines are smooth closed curves sampled at 8 angles, in raw
coordinate units (centroid size roughly 230) so that the +20 shift of
Scenario 2 has the same order of magnitude as with the real data. They
were written down once as a neutral stand-in and are not tuned to any
study outcome. Replace them with the real means via derive_mean_fixture.py.

    python scripts/make_surrogate_fixture.py [output.csv]
"""

import sys
from pathlib import Path

import numpy as np

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src/morphoclass/data/gorilla_means_surrogate.csv"


def outlines():
    ang = np.linspace(0, 2 * np.pi, 9)[:-1]
    z1 = 100 * np.cos(ang) + 1j * 70 * np.sin(ang) + 20 * np.cos(2 * ang)
    z2 = (108 * np.cos(ang) + 1j * 66 * np.sin(ang) + 25 * np.cos(2 * ang)
          + 1j * 8 * np.sin(3 * ang))
    return z1 - z1.mean(), z2 - z2.mean()


def main(out=DEFAULT_OUT):
    z1, z2 = outlines()
    lines = [
        "# SURROGATE mean shapes (not derived from gorilla skull data); "
        "generated by scripts/make_surrogate_fixture.py",
        "group,landmark,x,y",
    ]
    for group, z in (("female", z1), ("male", z2)):
        for i, p in enumerate(z, start=1):
            lines.append(f"{group},{i},{round(float(p.real), 6) + 0.0!r},{round(float(p.imag), 6) + 0.0!r}")
    Path(out).write_text("\n".join(lines) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
