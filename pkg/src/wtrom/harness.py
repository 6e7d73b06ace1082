"""Experiment orchestration: build both models from a scenario and compare them.

Both models share one event schedule: pre-fault network until ``t_on``, the
fault network until ``t_clear`` (or the end), then the pre-fault network
again with the active current ramping back at ``id_ramp`` pu/s while the
reactive references return to their pre-fault values.

The reduced-order model sees the fault network through its positive-sequence
Thevenin equivalent at the converter terminal. The negative-sequence
injection enters that source through the network coupling and depends on the
PLL angle; it is evaluated at the post-fault equilibrium angle, found by a
short fixed-point iteration.

Trajectory ``delta`` is always the PLL angle measured against the pre-fault
grid source, so the two models are directly comparable.
"""

from __future__ import annotations

import cmath
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import gridcode, rom, seqnet
from .errors import ValidationError
from .gridcode import CurrentRefs
from .refmodel import RefModelConfig, RefSegment, simulate
from .rom import PiecewiseLinearSignal, RomInputsAtT, RomParams, RomSignals, RomState, Segment
from .scenario import Scenario
from .trajectory import Trajectory

log = logging.getLogger(__name__)

EVENT_EXCLUSION = 2e-3
SETTLE_RATE = 0.5
SETTLE_TIME = 0.2
MODELS = ("rom", "refmodel", "both")

_const = PiecewiseLinearSignal.constant


# --- schedule -------------------------------------------------------------


def fault_network(sc: Scenario) -> tuple[seqnet.NetworkResponse, complex]:
    """Network map and source voltage while the fault is on."""
    kind = sc.fault.kind
    if kind is seqnet.FaultKind.BALANCED_3PH:
        return seqnet.network_response(None, sc.network, 0.0), sc.vg * sc.retained_voltage
    return seqnet.network_response(kind, sc.network, sc.zf_pu), complex(sc.vg)


def fault_currents(sc: Scenario) -> CurrentRefs:
    """Explicit fault currents, or the grid-code fixed point on the fault network."""
    if sc.fault_refs is not None:
        return sc.fault_refs
    kind = sc.fault.kind
    vg = complex(sc.vg)
    if kind is seqnet.FaultKind.BALANCED_3PH:
        kind, vg = None, vg * sc.retained_voltage
    res = gridcode.fixed_point_references(
        kind,
        vg,
        sc.network,
        sc.zf_pu,
        sc.gridcode,
        initial=sc.prefault_refs,
        id_request=sc.prefault_refs.id_pos,
        tol=sc.gridcode_tol,
        max_iter=sc.gridcode_max_iter,
        iq_pre=sc.prefault_refs.iq_pos,
    )
    return res.refs


@dataclass(frozen=True)
class Schedule:
    """Piecewise description shared by both models."""

    t_on: float | None
    t_clear: float | None
    t_end: float
    pre: CurrentRefs
    fault: CurrentRefs | None
    id_recovery: PiecewiseLinearSignal | None

    def intervals(self):
        """(t_end, phase) for each interval, phase in {pre, fault, post}."""
        if self.t_on is None:
            return [(self.t_end, "pre")]
        out = [(self.t_on, "pre")]
        if self.t_clear is None or self.t_clear >= self.t_end:
            out.append((self.t_end, "fault"))
        else:
            out += [(self.t_clear, "fault"), (self.t_end, "post")]
        return out


def schedule(sc: Scenario) -> Schedule:
    pre = sc.prefault_refs
    if sc.fault is None:
        return Schedule(None, None, sc.t_end, pre, None, None)
    fl = fault_currents(sc)
    t_clear = sc.fault.t_clear
    rec = None
    if t_clear is not None:
        gap = abs(pre.id_pos - fl.id_pos)
        if gap == 0:
            rec = _const(pre.id_pos)
        else:
            rec = PiecewiseLinearSignal([(t_clear, fl.id_pos), (t_clear + gap / sc.id_ramp, pre.id_pos)])
    return Schedule(sc.fault.t_on, t_clear, sc.t_end, pre, fl, rec)


def _phase_refs(s: Schedule, phase: str):
    if phase == "pre":
        r = s.pre
        return _const(r.id_pos), _const(r.iq_pos), _const(r.iq_neg)
    if phase == "fault":
        r = s.fault
        return _const(r.id_pos), _const(r.iq_pos), _const(r.iq_neg)
    return s.id_recovery, _const(s.pre.iq_pos), _const(s.pre.iq_neg)


_LABELS = {"pre": "prefault", "fault": "fault_on", "post": "fault_cleared"}


# --- reduced-order model ---------------------------------------------------


def _rom_delta_star(source: complex, zth: complex, refs: CurrentRefs, sc: Scenario, omega_g: float) -> float:
    p = RomParams.from_impedance(sc.kp, sc.ki, zth, sc.base.omega0)
    return rom.equilibrium_delta(RomInputsAtT(refs.id_pos, refs.iq_pos, abs(source), omega_g), p)


def rom_fault_source(sc: Scenario, refs: CurrentRefs, delta_guess: float, omega_g: float) -> tuple[complex, complex, float]:
    """Thevenin source and impedance of the fault network, and the equilibrium angle used.

    The returned angle is measured against the pre-fault grid source.
    """
    net, vg = fault_network(sc)
    dg = delta_guess
    for _ in range(50):
        src, zth = net.thevenin_pos(vg, 1j * refs.iq_neg * cmath.exp(-1j * dg))
        if abs(src) < rom.DEAD_BUS_TOL or refs.iq_neg == 0:
            break
        try:
            new = cmath.phase(src) + _rom_delta_star(src, zth, refs, sc, omega_g)
        except ValidationError:
            break  # no post-fault equilibrium: keep the current angle
        if abs(new - dg) < 1e-13:
            dg = new
            break
        dg = new
    src, zth = net.thevenin_pos(vg, 1j * refs.iq_neg * cmath.exp(-1j * dg))
    return src, zth, dg


def rom_segments(sc: Scenario) -> tuple[RomState, list[Segment], Schedule]:
    s = schedule(sc)
    omega_g = sc.grid_frequency
    w0 = omega_g.value(0.0)
    z1 = sc.network.pos.z()
    pre_params = RomParams.from_impedance(sc.kp, sc.ki, z1, sc.base.omega0)
    d_pre = _rom_delta_star(sc.vg, z1, s.pre, sc, w0)
    source_v = complex(sc.vg)
    segs = []
    for t_end, phase in s.intervals():
        id_s, iq_s, _ = _phase_refs(s, phase)
        if phase == "fault":
            src, zth, _ = rom_fault_source(sc, s.fault, d_pre, omega_g.value(s.t_on))
            params = RomParams.from_impedance(sc.kp, sc.ki, zth, sc.base.omega0)
        else:
            src, params = source_v, pre_params
        sig = RomSignals(id_s, iq_s, _const(abs(src)), omega_g)
        segs.append(Segment(t_end, params, sig, src, _LABELS[phase]))
    return RomState(d_pre, 0.0), segs, s


def _rom_networks(sc: Scenario, s: Schedule):
    pre = seqnet.network_response(None, sc.network, 0.0)
    nets = []
    for _, phase in s.intervals():
        nets.append(fault_network(sc) if phase == "fault" else (pre, complex(sc.vg)))
    return nets


def run_rom(sc: Scenario) -> Trajectory:
    initial, segs, s = rom_segments(sc)
    tr = rom.integrate(initial, segs, sc.solver)
    delta = tr.delta_grid
    nets = _rom_networks(sc, s)
    v1 = np.zeros(len(tr.t), dtype=complex)
    v2 = np.zeros(len(tr.t), dtype=complex)
    for k, seg in enumerate(segs):
        idx = np.flatnonzero(tr.segment == k)
        net, vg = nets[k]
        _, _, iqn_s = _phase_refs(s, s.intervals()[k][1])
        for i in idx:
            t = tr.t[i]
            rot = cmath.exp(1j * delta[i])
            i_pos = complex(seg.signals.id.value(t), seg.signals.iq.value(t)) * rot
            i_neg = 1j * iqn_s.value(t) * rot.conjugate()
            v1[i], v2[i], _ = net.voltages(vg, i_pos, i_neg)
    return Trajectory(
        tr.t,
        delta,
        tr.delta_dot,
        np.abs(v1),
        np.angle(v1),
        np.abs(v2),
        tr.omega_g,
        events=list(tr.events),
        model="rom",
        diverged=tr.diverged,
        diverged_at=tr.diverged_at,
    )


# --- reference model -------------------------------------------------------


def refmodel_config(sc: Scenario) -> RefModelConfig:
    return RefModelConfig(
        kp=sc.kp,
        ki=sc.ki,
        omega0=sc.base.omega0,
        notch=sc.notch,
        cc_tau=sc.cc_tau,
        method=sc.refmodel_method,
    )


def refmodel_segments(sc: Scenario) -> list[RefSegment]:
    s = schedule(sc)
    pre = seqnet.network_response(None, sc.network, 0.0)
    segs = []
    for t_end, phase in s.intervals():
        net, vg = fault_network(sc) if phase == "fault" else (pre, complex(sc.vg))
        segs.append(RefSegment(t_end, net, vg, *_phase_refs(s, phase), label=_LABELS[phase]))
    return segs


def run_refmodel(sc: Scenario) -> Trajectory:
    return simulate(refmodel_segments(sc), refmodel_config(sc), sc.grid_frequency, sc.solver)


# --- comparison ------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonReport:
    rmse_delta: float
    rmse_delta_dot: float
    peak_delta_error: float
    normalized_rmse: float
    window: tuple[float, float]
    mean_abs_delta_error: float
    final_delta_error: float
    samples: int

    def as_dict(self) -> dict:
        return {
            "rmse_delta_rad": self.rmse_delta,
            "rmse_delta_dot_radps": self.rmse_delta_dot,
            "peak_delta_error_rad": self.peak_delta_error,
            "normalized_rmse": self.normalized_rmse,
            "window_start_s": self.window[0],
            "window_end_s": self.window[1],
            "mean_abs_delta_error_rad": self.mean_abs_delta_error,
            "final_delta_error_rad": self.final_delta_error,
            "samples": self.samples,
        }


def compare(rom_tr: Trajectory, ref_tr: Trajectory, t_start: float, event_times=()) -> ComparisonReport:
    """Metrics on the ROM output grid over ``[t_start, end of overlap]``.

    Reference samples are linearly interpolated onto the ROM grid, never
    extrapolated. Samples within :data:`EVENT_EXCLUSION` after an event are
    left out. ``normalized_rmse`` divides the rate RMSE by the peak-to-peak
    reference rate over the same samples.
    """
    if len(rom_tr) == 0 or len(ref_tr) == 0:
        raise ValidationError("trajectories overlap", "empty trajectory")
    lo = max(t_start, rom_tr.t[0], ref_tr.t[0])
    hi = min(rom_tr.t[-1], ref_tr.t[-1])
    if not hi > lo:
        raise ValidationError("trajectories overlap", f"window [{lo}, {hi}] is empty")
    t = rom_tr.t
    mask = (t >= lo) & (t <= hi)
    for ev in event_times:
        mask &= ~((t >= ev) & (t < ev + EVENT_EXCLUSION))
    tt = t[mask]
    d_ref = np.interp(tt, ref_tr.t, ref_tr.delta)
    w_ref = np.interp(tt, ref_tr.t, ref_tr.delta_dot)
    ed = rom_tr.delta[mask] - d_ref
    ew = rom_tr.delta_dot[mask] - w_ref
    rmse_w = float(np.sqrt(np.mean(ew**2)))
    ptp = float(np.ptp(w_ref))
    final = float(abs(rom_tr.delta[mask][-1] - d_ref[-1]))
    return ComparisonReport(
        rmse_delta=float(np.sqrt(np.mean(ed**2))),
        rmse_delta_dot=rmse_w,
        peak_delta_error=float(np.max(np.abs(ed))),
        normalized_rmse=rmse_w / ptp if ptp > 0 else (0.0 if rmse_w == 0 else math.inf),
        window=(float(tt[0]), float(tt[-1])),
        mean_abs_delta_error=float(np.mean(np.abs(ed))),
        final_delta_error=final,
        samples=int(mask.sum()),
    )


def event_times(sc: Scenario) -> list[float]:
    if sc.fault is None:
        return []
    out = [sc.fault.t_on]
    if sc.fault.t_clear is not None and sc.fault.t_clear < sc.t_end:
        out.append(sc.fault.t_clear)
    return out


def run(sc: Scenario, model: str = "rom"):
    """Run one model, or both plus a :class:`ComparisonReport` for ``both``."""
    if model == "rom":
        return run_rom(sc)
    if model == "refmodel":
        return run_refmodel(sc)
    if model != "both":
        raise ValidationError("model in {rom, refmodel, both}", model)
    a = run_rom(sc)
    b = run_refmodel(sc)
    t0 = sc.fault.t_on if sc.fault else 0.0
    return a, b, compare(a, b, t0, event_times(sc))


# --- stability --------------------------------------------------------------


def is_stable(tr: Trajectory, t_last_event: float, delta_ref: float) -> bool:
    """Synchronism kept: no divergence, no pole slip, and the rate settles.

    A pole slip is a departure of more than pi from ``delta_ref`` after the
    last event. Settling means ``|delta_dot| < SETTLE_RATE`` over the final
    :data:`SETTLE_TIME` seconds, which must lie after the last event.
    """
    if tr.diverged or len(tr) == 0:
        return False
    after = tr.t >= t_last_event
    if np.any(np.abs(tr.delta[after] - delta_ref) > math.pi):
        return False
    tail = tr.t >= tr.t[-1] - SETTLE_TIME
    if tr.t[-1] - SETTLE_TIME < t_last_event:
        raise ValidationError("settling window after the last event", f"t_end={tr.t[-1]}, event={t_last_event}")
    return bool(np.all(np.abs(tr.delta_dot[tail]) < SETTLE_RATE))


def classify(sc: Scenario, model: str = "rom") -> bool:
    tr = run(sc, model)
    evs = event_times(sc)
    return is_stable(tr, evs[-1] if evs else 0.0, tr.delta[0])


def cct(sc: Scenario, window: tuple[float, float], tol: float = 1e-3, model: str = "rom") -> float:
    """Critical clearing time by bisection on ``fault.t_clear_s``."""
    if sc.fault is None:
        raise ValidationError("scenario has a fault")
    if model not in ("rom", "refmodel"):
        raise ValidationError("cct model in {rom, refmodel}", model)
    if window[0] <= sc.fault.t_on:
        raise ValidationError("cct window starts after fault.t_on", f"{window[0]} <= {sc.fault.t_on}")

    def stable(t_clear):
        return classify(sc.with_value("fault.t_clear_s", t_clear), model)

    return rom.critical_clearing_time(stable, window, tol)


# --- sweeps ----------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    value: float
    stable: bool
    cct: float | None = None


def _sweep_one(args):
    sc, path, value, model, cct_window, tol = args
    s = sc.with_value(path, value)
    c = cct(s, cct_window, tol, model) if cct_window is not None else None
    return SweepRow(value, classify(s, model), c)


def sweep(
    sc: Scenario,
    path: str,
    values,
    model: str = "rom",
    cct_window: tuple[float, float] | None = None,
    tol: float = 1e-3,
    workers: int = 1,
) -> list[SweepRow]:
    """Stability (and optionally CCT) for each value of one scenario field."""
    values = list(values)
    if values:
        sc.with_value(path, values[0])  # fail fast on a bad path
    jobs = [(sc, path, v, model, cct_window, tol) for v in values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    return rows


# --- fault calculation -----------------------------------------------------


@dataclass(frozen=True)
class FaultCalc:
    kind: str
    zf_pu: float
    currents: CurrentRefs
    v_pre_pos: complex
    v_pre_neg: complex
    v_post_pos_closed_form: complex | None
    v_post_pos: complex
    v_post_neg: complex
    v_post_zero: complex
    check: seqnet.ClosedFormCheck | None


def faultcalc(sc: Scenario) -> FaultCalc:
    """Sequence voltages before and after the fault with the scenario's fault currents.

    Currents are taken in the grid frame (PLL aligned with the source).
    """
    if sc.fault is None:
        raise ValidationError("scenario has a fault")
    refs = fault_currents(sc)
    vg = complex(sc.vg)
    v1 = seqnet.prefault_voltage_pos(vg, refs.i_pos, sc.network.pos)
    v2 = seqnet.prefault_voltage_neg(refs.iq_neg, sc.network.neg)
    kind = sc.fault.kind
    if kind is seqnet.FaultKind.BALANCED_3PH:
        net, vgf = fault_network(sc)
        p, n, z = net.voltages(vgf, refs.i_pos, 1j * refs.iq_neg)
        return FaultCalc(kind.value, sc.zf_pu, refs, v1, v2, None, p, n, z, None)
    p, n, z = seqnet.solve_coupled_network(kind, vg, refs, sc.network, sc.zf_pu)
    chk = seqnet.compare_closed_form(kind, vg, refs, sc.network, sc.zf_pu)
    return FaultCalc(kind.value, sc.zf_pu, refs, v1, v2, chk.closed_form, p, n, z, chk)
