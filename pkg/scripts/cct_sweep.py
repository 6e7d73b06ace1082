#!/usr/bin/env python3
"""Critical clearing time of the deep balanced sag, ROM against reference.

Also sweeps the retained voltage during the fault and reports the ROM
clearing time for each level (``inf`` when the fault never costs
synchronism inside the window).
"""

import argparse
import math

from wtrom import harness
from wtrom.errors import BracketInvalid
from wtrom.scenario import load_bundled


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--window", default="0.2,0.8")
    ap.add_argument("--tol", type=float, default=1e-3)
    ap.add_argument("--retained", default="0.0,0.05,0.1,0.15,0.2")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    window = tuple(float(v) for v in args.window.split(","))

    sc = load_bundled("balanced_cct")
    for model in ("rom", "refmodel"):
        t = harness.cct(sc, window, args.tol, model)
        print(f"{model:<9} CCT {t:.4f} s (fault duration {t - sc.fault.t_on:.4f} s)")

    print("retained_pu  rom_cct_s")
    for v in (float(x) for x in args.retained.split(",")):
        s = sc.with_value("fault.retained_voltage_pu", v)
        try:
            t = harness.cct(s, window, args.tol)
        except BracketInvalid:
            t = math.inf if harness.classify(s.with_value("fault.t_clear_s", window[1])) else math.nan
        print(f"{v:11.3f}  {t:.4f}")


if __name__ == "__main__":
    main()
