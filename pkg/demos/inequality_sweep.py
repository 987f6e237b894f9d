"""Small inequality sweep: empirical sups of every ratio.

    python3 demos/inequality_sweep.py [seeds]
"""

import sys

from vkns2d.inequalities import LabConfig, run_lab


def main(seeds=100):
    res = run_lab(LabConfig(n=64, seeds=seeds))
    print(f"{'ratio':<26} {'sup':>10} {'mean':>10} {'drift':>7}")
    for r in res.reports:
        print(f"{r.name:<26} {r.sup:10.4g} {r.mean:10.4g} {r.drift:7.3f}")
    print(f"trudinger calibration: c1={res.trudinger_c1}, c2={res.trudinger_c2}")
    for name, ok in res.checks.items():
        if not ok:
            print("failed check:", name)


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 100)
