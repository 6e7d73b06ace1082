"""CSV and SVG output.

CSV files start with ``#`` comment lines (model, scenario hash, events)
followed by a header and one row per sample. Floats are written with
``%.17g`` so a read-back reproduces every sample exactly, and nothing
time- or host-dependent is written, so repeated runs give identical bytes.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import ParseError
from .refmodel import NotchFilterDesign, notch_frequency_response
from .trajectory import COLUMNS, Trajectory

FLOAT_FMT = "%.17g"


def _f(x: float) -> str:
    return FLOAT_FMT % x


def trajectory_csv(tr: Trajectory, scenario_hash: str = "", scenario_name: str = "") -> str:
    lines = [
        "# wtrom trajectory",
        f"# model: {tr.model}",
        f"# scenario: {scenario_name}",
        f"# scenario_sha256: {scenario_hash}",
        f"# diverged: {'true' if tr.diverged else 'false'}",
    ]
    if tr.diverged_at is not None:
        lines.append(f"# diverged_at_s: {_f(tr.diverged_at)}")
    for t, label in tr.events:
        lines.append(f"# event: {_f(t)} {label}")
    lines.append(",".join(COLUMNS))
    for row in tr.as_array():
        lines.append(",".join(_f(v) for v in row))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(path, tr: Trajectory, scenario_hash: str = "", scenario_name: str = "") -> Path:
    path = Path(path)
    path.write_text(trajectory_csv(tr, scenario_hash, scenario_name), encoding="utf-8", newline="\n")
    return path


def read_trajectory_csv(path) -> Trajectory:
    meta: dict = {"events": []}
    rows = []
    header = None
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(": ")
                if key == "event":
                    t, _, label = val.partition(" ")
                    meta["events"].append((float(t), label))
                elif key:
                    meta[key] = val
                continue
            if not line:
                continue
            if header is None:
                header = tuple(line.split(","))
                if header != COLUMNS:
                    raise ParseError(f"unexpected columns {header}", n)
                continue
            try:
                vals = [float(v) for v in line.split(",")]
            except ValueError:
                raise ParseError("non-numeric value", n) from None
            if len(vals) != len(COLUMNS):
                raise ParseError(f"expected {len(COLUMNS)} values", n)
            rows.append(vals)
    if header is None:
        raise ParseError("missing header")
    arr = np.array(rows, dtype=float).reshape(-1, len(COLUMNS))
    at = meta.get("diverged_at_s")
    return Trajectory(
        *arr.T,
        events=meta["events"],
        model=meta.get("model", ""),
        diverged=meta.get("diverged") == "true",
        diverged_at=float(at) if at is not None else None,
    )


def write_report_csv(path, report, scenario_hash: str = "") -> Path:
    path = Path(path)
    lines = ["# wtrom comparison report", f"# scenario_sha256: {scenario_hash}", "metric,value"]
    for k, v in report.as_dict().items():
        lines.append(f"{k},{_f(v) if isinstance(v, float) else v}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def write_sweep_csv(path, param: str, rows) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([param, "stable", "cct_s"])
        for r in rows:
            w.writerow([_f(r.value), "true" if r.stable else "false", "" if r.cct is None else _f(r.cct)])
    return path


def notch_bode_table(design: NotchFilterDesign, f_min: float = 1.0, f_max: float = 5000.0, points: int = 400):
    """(f_hz, magnitude_db, phase_deg) on a log grid that includes the centre."""
    if not 0 < f_min < f_max or points < 2:
        raise ValueError("need 0 < f_min < f_max and points >= 2")
    f = np.logspace(math.log10(f_min), math.log10(f_max), points)
    fc = design.center / (2 * math.pi)
    if f_min <= fc <= f_max:
        f = np.unique(np.append(f, fc))
    nyq = 0.5 / design.sample_dt
    f = f[f < nyq]
    out = []
    for fi in f:
        mag, ph = notch_frequency_response(design, 2 * math.pi * fi)
        out.append((float(fi), mag, ph))
    return out


def write_bode_csv(path, design: NotchFilterDesign, **kw) -> Path:
    path = Path(path)
    lines = [
        "# wtrom notch frequency response",
        f"# center_hz: {_f(design.center / (2 * math.pi))}",
        f"# zeta: {_f(design.zeta)}",
        f"# sample_dt_s: {_f(design.sample_dt)}",
        "f_hz,magnitude_db,phase_deg",
    ]
    for f, m, p in notch_bode_table(design, **kw):
        lines.append(f"{_f(f)},{_f(m)},{_f(p)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def write_svg(path, trajectories, title: str = "") -> Path:
    """Plot delta and delta_dot against time, one series per trajectory."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    with matplotlib.rc_context({"svg.fonttype": "none", "svg.hashsalt": "wtrom"}):
        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
        marked = set()
        for tr in trajectories:
            label = tr.model or "trajectory"
            ax1.plot(tr.t, tr.delta, label=label, lw=1)
            ax2.plot(tr.t, tr.delta_dot, label=label, lw=1)
            for t, kind in tr.events:
                if (t, kind) in marked:
                    continue
                marked.add((t, kind))
                for ax in (ax1, ax2):
                    ax.axvline(t, color="0.6", ls="--", lw=0.8)
                ax1.annotate(kind, (t, 1.0), xycoords=("data", "axes fraction"), fontsize=7, va="bottom")
        ax1.set_ylabel("delta [rad]")
        ax2.set_ylabel("delta_dot [rad/s]")
        ax2.set_xlabel("t [s]")
        ax1.legend(loc="best", fontsize=8)
        ax2.legend(loc="best", fontsize=8)
        if title:
            fig.suptitle(title, y=0.995)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
