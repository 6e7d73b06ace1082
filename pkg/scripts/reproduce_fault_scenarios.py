#!/usr/bin/env python3
"""Run the three bundled unbalanced-fault scenarios through both models.

Writes per-model trajectory CSVs, a comparison report and an SVG per scenario
into ``--out`` and prints a summary table.
"""

import argparse
from pathlib import Path

from wtrom import harness, io
from wtrom.scenario import load_bundled

SCENARIOS = ("slg_fault", "dlg_fault", "dl_fault")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/fault_scenarios")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    print(f"{'scenario':<10} {'nRMSE':>8} {'rmse_d':>9} {'peak_d':>9} {'final_d':>9}  iq / iq_neg during fault")
    for name in SCENARIOS:
        sc = load_bundled(name)
        rom_tr, ref_tr, rep = harness.run(sc, "both")
        for tr in (rom_tr, ref_tr):
            io.write_trajectory_csv(out / f"{name}_{tr.model}.csv", tr, sc.source_hash, name)
        io.write_report_csv(out / f"{name}_report.csv", rep, sc.source_hash)
        io.write_svg(out / f"{name}.svg", [rom_tr, ref_tr], title=name)
        refs = harness.fault_currents(sc)
        print(
            f"{name:<10} {rep.normalized_rmse:8.4f} {rep.rmse_delta:9.2e} {rep.peak_delta_error:9.2e} "
            f"{rep.final_delta_error:9.2e}  {refs.iq_pos:+.3f} / {refs.iq_neg:+.3f}"
        )
    print(f"outputs in {out}")


if __name__ == "__main__":
    main()
