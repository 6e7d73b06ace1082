"""Reduced-order PLL model: the equivalent swing equation of the converter.

State is ``delta`` (PLL angle minus the angle of the voltage source seen by
the converter) and its rate. The model is

    M_eq * delta'' = T_m_eq - T_e_eq - D_eq * delta'

with coefficients built from the PLL gains, the source impedance and the
current references (see :func:`coefficients`).

Units: time in s, angles in rad, voltages/currents in pu, ``kp`` in rad/s per
pu and ``ki`` in rad/s^2 per pu of q-axis voltage. ``lg`` is the source
inductance in pu*s (``L_pu / omega0``) so that ``lg * omega_g`` with ``omega_g``
in rad/s is the reactance in pu and ``lg * d(i)/dt`` is a voltage in pu.
"""

from __future__ import annotations

import bisect
import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BracketInvalid, SingularInertia, ValidationError

INERTIA_TOL = 1e-9
DEAD_BUS_TOL = 1e-9


class PiecewiseLinearSignal:
    """Continuous piecewise-linear function of time, constant outside its span.

    The derivative is taken from the right at breakpoints.
    """

    def __init__(self, breakpoints):
        pts = [(float(t), float(v)) for t, v in breakpoints]
        if not pts:
            raise ValidationError("PiecewiseLinearSignal non-empty")
        for (t0, _), (t1, _) in zip(pts, pts[1:]):
            if not t1 > t0:
                raise ValidationError("PiecewiseLinearSignal strictly increasing times", f"{t0} >= {t1}")
        if not all(math.isfinite(t) and math.isfinite(v) for t, v in pts):
            raise ValidationError("PiecewiseLinearSignal finite values")
        self.times = [t for t, _ in pts]
        self.values = [v for _, v in pts]
        self.slopes = [
            (v1 - v0) / (t1 - t0) for (t0, v0), (t1, v1) in zip(pts, pts[1:])
        ]

    @classmethod
    def constant(cls, value: float) -> "PiecewiseLinearSignal":
        return cls([(0.0, value)])

    def __repr__(self):
        return f"PiecewiseLinearSignal({list(zip(self.times, self.values))})"

    def _index(self, t):
        return bisect.bisect_right(self.times, t) - 1

    def value(self, t: float) -> float:
        k = self._index(t)
        if k < 0:
            return self.values[0]
        if k >= len(self.slopes):
            return self.values[-1]
        return self.values[k] + self.slopes[k] * (t - self.times[k])

    def derivative(self, t: float) -> float:
        k = self._index(t)
        if k < 0 or k >= len(self.slopes):
            return 0.0
        return self.slopes[k]

    def second_derivative(self, t: float) -> float:
        return 0.0

    def linear_at(self, t: float) -> tuple[float, float]:
        """(value, slope) valid from ``t`` up to the next breakpoint."""
        return self.value(t), self.derivative(t)


@dataclass(frozen=True)
class RomParams:
    kp: float
    ki: float
    lg: float
    r_lg: float

    def __post_init__(self):
        if not self.ki > 0:
            raise ValidationError("RomParams.ki > 0", f"got {self.ki}")
        if self.kp < 0:
            raise ValidationError("RomParams.kp >= 0", f"got {self.kp}")
        if self.lg < 0:
            raise ValidationError("RomParams.lg >= 0", f"got {self.lg}")

    @classmethod
    def from_impedance(cls, kp: float, ki: float, z_pu: complex, omega0: float) -> "RomParams":
        """Params for a source impedance given in pu at nominal frequency."""
        return cls(kp=kp, ki=ki, lg=z_pu.imag / omega0, r_lg=z_pu.real)


@dataclass(frozen=True)
class RomState:
    delta: float
    delta_dot: float

    @property
    def delta_wrapped(self) -> float:
        return math.remainder(self.delta, 2 * math.pi)


@dataclass(frozen=True)
class RomInputsAtT:
    id: float
    iq: float
    vg_mag: float
    omega_g: float
    id_dot: float = 0.0
    iq_dot: float = 0.0
    vg_dot: float = 0.0
    omega_g_dot: float = 0.0
    # second derivative of lg * iq
    lg_iq_ddot: float = 0.0


@dataclass
class RomSignals:
    id: PiecewiseLinearSignal
    iq: PiecewiseLinearSignal
    vg_mag: PiecewiseLinearSignal
    omega_g: PiecewiseLinearSignal

    def at(self, t: float) -> RomInputsAtT:
        return RomInputsAtT(
            id=self.id.value(t),
            iq=self.iq.value(t),
            vg_mag=self.vg_mag.value(t),
            omega_g=self.omega_g.value(t),
            id_dot=self.id.derivative(t),
            iq_dot=self.iq.derivative(t),
            vg_dot=self.vg_mag.derivative(t),
            omega_g_dot=self.omega_g.derivative(t),
        )

    def breakpoints(self) -> list[float]:
        out = set()
        for s in (self.id, self.iq, self.vg_mag, self.omega_g):
            out.update(s.times)
        return sorted(out)


def coefficients(state: RomState, inp: RomInputsAtT, p: RomParams):
    """Return ``(M_eq, T_m_eq, T_e_eq, D_eq)`` at the given state and inputs."""
    m_eq = 1.0 - p.kp * p.lg * inp.id
    t_m = p.kp * (
        p.r_lg * inp.iq_dot + inp.lg_iq_ddot + p.lg * inp.id_dot * inp.omega_g
    ) + p.ki * (p.r_lg * inp.iq + p.lg * inp.iq_dot + p.lg * inp.id * inp.omega_g)
    s = math.sin(state.delta)
    t_e = p.ki * inp.vg_mag * s + p.kp * inp.vg_dot * s + m_eq * inp.omega_g_dot
    d_eq = p.kp * (inp.vg_mag * math.cos(state.delta) - p.lg * inp.id_dot) - p.ki * p.lg * inp.id
    return m_eq, t_m, t_e, d_eq


def rhs(state: RomState, t: float, signals: RomSignals, p: RomParams) -> tuple[float, float]:
    m_eq, t_m, t_e, d_eq = coefficients(state, signals.at(t), p)
    if abs(m_eq) < INERTIA_TOL:
        raise SingularInertia(f"|M_eq| = {abs(m_eq):.3e} at t={t}")
    return state.delta_dot, (t_m - t_e - d_eq * state.delta_dot) / m_eq


def pll_vq(state: RomState, inp: RomInputsAtT, p: RomParams) -> float:
    """q-axis terminal voltage in the PLL frame implied by the model."""
    return (
        -inp.vg_mag * math.sin(state.delta)
        + p.r_lg * inp.iq
        + p.lg * inp.iq_dot
        + (inp.omega_g + state.delta_dot) * p.lg * inp.id
    )


def equilibrium_delta(inp: RomInputsAtT, p: RomParams) -> float:
    """Stable equilibrium angle for constant inputs (cos(delta) > 0 branch)."""
    if inp.vg_mag <= 0:
        raise ValidationError("equilibrium exists", "source voltage is zero")
    s = (p.r_lg * inp.iq + p.lg * inp.id * inp.omega_g) / inp.vg_mag
    if abs(s) > 1:
        raise ValidationError("equilibrium exists", f"sin(delta*) = {s:.4f}")
    return math.asin(s)


def characteristic_roots(delta_star: float, inp: RomInputsAtT, p: RomParams) -> np.ndarray:
    """Roots of ``M s^2 + D s + K`` for the linearization at ``delta_star``."""
    m_eq, _, _, d_eq = coefficients(RomState(delta_star, 0.0), inp, p)
    k = (p.ki * inp.vg_mag + p.kp * inp.vg_dot) * math.cos(delta_star)
    return np.roots([m_eq, d_eq, k])


def numerical_jacobian(state: RomState, t: float, signals: RomSignals, p: RomParams, h: float = 1e-6) -> np.ndarray:
    jac = np.zeros((2, 2))
    for j in range(2):
        dx = [0.0, 0.0]
        dx[j] = h
        plus = rhs(RomState(state.delta + dx[0], state.delta_dot + dx[1]), t, signals, p)
        minus = rhs(RomState(state.delta - dx[0], state.delta_dot - dx[1]), t, signals, p)
        jac[:, j] = [(a - b) / (2 * h) for a, b in zip(plus, minus)]
    return jac


def apply_fault_event(state: RomState, v_before: complex, v_after: complex) -> RomState:
    """Re-reference delta when the source phasor jumps; the PLL angle is continuous."""
    if abs(v_after) < DEAD_BUS_TOL or abs(v_before) < DEAD_BUS_TOL:
        return state
    shift = cmath.phase(v_before) - cmath.phase(v_after)
    return RomState(state.delta + shift, state.delta_dot)


def pll_rate_reset(
    before: RomState,
    inp_before: RomInputsAtT,
    p_before: RomParams,
    delta_after: float,
    inp_after: RomInputsAtT,
    p_after: RomParams,
) -> RomState:
    """State just after a discontinuity in the inputs or the source.

    The PI integrator ``delta' - kp * vq`` is continuous, so a step in the
    measured q voltage shows up as a proportional step in the rate.
    ``before.delta`` is measured against the old source and ``delta_after``
    against the new one.
    """
    x_int = before.delta_dot - p_before.kp * pll_vq(before, inp_before, p_before)
    m_eq = 1.0 - p_after.kp * p_after.lg * inp_after.id
    if abs(m_eq) < INERTIA_TOL:
        raise SingularInertia(f"|M_eq| = {abs(m_eq):.3e}")
    vq_static = pll_vq(RomState(delta_after, 0.0), inp_after, p_after)
    return RomState(delta_after, (x_int + p_after.kp * vq_static) / m_eq)


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 50e-6
    output_dt: float = 100e-6
    diverge_threshold: float = 10 * 2 * math.pi * 50.0
    rate_reset: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("SolverConfig.dt > 0", f"got {self.dt}")
        ratio = self.output_dt / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValidationError("SolverConfig.output_dt is a multiple of dt", f"{self.output_dt}/{self.dt}")

    def on_output_grid(self, t: float) -> bool:
        q = t / self.output_dt
        return abs(q - round(q)) < 1e-7


def step_times(t0: float, t1: float, dt: float, extra: Sequence[float] = ()) -> list[float]:
    """Step end points covering (t0, t1]: the global dt grid plus ``extra``."""
    tol = 1e-9 * dt
    k0 = math.floor(t0 / dt + 1e-9) + 1
    k1 = math.ceil(t1 / dt - 1e-9)
    pts = [k * dt for k in range(k0, k1)]
    pts.extend(e for e in extra if t0 + tol < e < t1 - tol)
    pts.append(t1)
    pts.sort()
    out = []
    for p in pts:
        if p - (out[-1] if out else t0) > tol:
            out.append(p)
        elif out:
            out[-1] = max(out[-1], p)
    return out


@dataclass
class Segment:
    """Interval of constant network: integrate up to ``t_end`` with these inputs.

    ``source`` is the voltage-source phasor (grid frame) against which delta
    is measured in this segment.
    """

    t_end: float
    params: RomParams
    signals: RomSignals
    source: complex = 1.0 + 0j
    label: str = ""


@dataclass
class RomTrajectory:
    t: np.ndarray
    delta: np.ndarray
    delta_dot: np.ndarray
    vg_mag: np.ndarray
    omega_g: np.ndarray
    source_angle: np.ndarray
    segment: np.ndarray
    events: list = field(default_factory=list)
    diverged: bool = False
    diverged_at: float | None = None

    @property
    def delta_grid(self) -> np.ndarray:
        """PLL angle against the fixed reference of the first segment's source."""
        return self.delta + self.source_angle


def _rk4_segment_piece(d, w, t, h, c):
    # c: (kp, ki, lg, r, id0, idd, iq0, iqd, vg0, vgd, wg0, wgd, ta)
    kp, ki, lg, r, id0, idd, iq0, iqd, vg0, vgd, wg0, wgd, ta = c
    sin, cos = math.sin, math.cos

    def f(tt, dd, ww):
        s = tt - ta
        idv = id0 + idd * s
        iqv = iq0 + iqd * s
        vg = vg0 + vgd * s
        wg = wg0 + wgd * s
        m = 1.0 - kp * lg * idv
        tm = kp * (r * iqd + lg * idd * wg) + ki * (r * iqv + lg * iqd + lg * idv * wg)
        sd = sin(dd)
        te = ki * vg * sd + kp * vgd * sd + m * wgd
        dm = kp * (vg * cos(dd) - lg * idd) - ki * lg * idv
        return (tm - te - dm * ww) / m

    h2 = 0.5 * h
    a1 = f(t, d, w)
    k1d, k1w = w, a1
    k2d, k2w = w + h2 * k1w, f(t + h2, d + h2 * k1d, w + h2 * k1w)
    k3d, k3w = w + h2 * k2w, f(t + h2, d + h2 * k2d, w + h2 * k2w)
    k4d, k4w = w + h * k3w, f(t + h, d + h * k3d, w + h * k3w)
    d += h / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d)
    w += h / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
    return d, w


def _left_inputs(signals: RomSignals, t: float, c) -> RomInputsAtT:
    # values at t with the slopes of the piece that ends at t
    return RomInputsAtT(
        id=signals.id.value(t), iq=signals.iq.value(t),
        vg_mag=signals.vg_mag.value(t), omega_g=signals.omega_g.value(t),
        id_dot=c[5], iq_dot=c[7], vg_dot=c[9], omega_g_dot=c[11],
    )


def _piece_constants(p: RomParams, sg: RomSignals, ta: float):
    return (
        p.kp, p.ki, p.lg, p.r_lg,
        *sg.id.linear_at(ta), *sg.iq.linear_at(ta),
        *sg.vg_mag.linear_at(ta), *sg.omega_g.linear_at(ta), ta,
    )


def integrate(
    initial: RomState,
    segments: Sequence[Segment],
    solver: SolverConfig = SolverConfig(),
    t0: float = 0.0,
) -> RomTrajectory:
    """Fixed-step RK4 integration through a sequence of segments.

    Steps are aligned to the global ``solver.dt`` grid and additionally end on
    every segment boundary and signal breakpoint. At a segment boundary delta
    is re-referenced to the new source (:func:`apply_fault_event`); when
    ``solver.rate_reset`` is set the rate is recomputed with the PLL
    integrator held continuous (:func:`pll_rate_reset`) at every boundary and
    breakpoint. Otherwise the rate is carried over unchanged.
    """
    rows = []
    events = []
    d, w = initial.delta, initial.delta_dot
    t = t0
    first = segments[0].source if segments else 1.0 + 0j
    ref_angle = cmath.phase(first) if abs(first) >= DEAD_BUS_TOL else 0.0
    base_angle = ref_angle
    diverged_at = None
    prev = None  # (inputs, params) on the left of the current instant

    def record(k, seg):
        sg = seg.signals
        rows.append((t, d, w, sg.vg_mag.value(t), sg.omega_g.value(t), ref_angle - base_angle, k))

    last = len(segments) - 1
    for k, seg in enumerate(segments):
        p, sg = seg.params, seg.signals
        if seg.t_end < t - 1e-12:
            raise ValidationError("segments time-ordered", f"t_end={seg.t_end} < t={t}")
        new_angle = cmath.phase(seg.source) if abs(seg.source) >= DEAD_BUS_TOL else ref_angle
        d_new = d + ref_angle - new_angle
        if k > 0:
            events.append((t, seg.label or f"segment{k}"))
        if solver.rate_reset and prev is not None:
            d, w = astuple_state(pll_rate_reset(RomState(d, w), prev[0], prev[1], d_new, sg.at(t), p))
        else:
            d = d_new
        ref_angle = new_angle
        if abs(1.0 - p.kp * p.lg * sg.id.value(t)) < INERTIA_TOL:
            raise SingularInertia(f"M_eq singular at t={t}")
        if solver.on_output_grid(t) and (not rows or t > rows[-1][0]):
            record(k, seg)

        cuts = sorted({b for b in sg.breakpoints() if t < b < seg.t_end})
        ends = cuts + [seg.t_end]
        for j, b in enumerate(ends):
            c = _piece_constants(p, sg, t)
            times = step_times(t, b, solver.dt)
            for tn in times:
                d, w = _rk4_segment_piece(d, w, t, tn - t, c)
                t = tn
                if not math.isfinite(w) or abs(w) > solver.diverge_threshold:
                    diverged_at = t
                    record(k, seg)
                    events.append((t, "diverged"))
                    break
                at_end = tn == times[-1] and j == len(ends) - 1
                if (solver.on_output_grid(t) and not at_end) or (at_end and k == last):
                    record(k, seg)
            if diverged_at is not None:
                break
            if j < len(cuts) and solver.rate_reset:
                # breakpoint inside the segment: input slopes change here
                d, w = astuple_state(
                    pll_rate_reset(RomState(d, w), _left_inputs(sg, t, c), p, d, sg.at(t), p)
                )
        if diverged_at is not None:
            break
        prev = (_left_inputs(sg, t, c), p)

    arr = np.array(rows, dtype=float).reshape(-1, 7)
    return RomTrajectory(
        t=arr[:, 0],
        delta=arr[:, 1],
        delta_dot=arr[:, 2],
        vg_mag=arr[:, 3],
        omega_g=arr[:, 4],
        source_angle=arr[:, 5],
        segment=arr[:, 6].astype(int),
        events=events,
        diverged=diverged_at is not None,
        diverged_at=diverged_at,
    )


def astuple_state(s: RomState) -> tuple[float, float]:
    return s.delta, s.delta_dot


def critical_clearing_time(
    is_stable: Callable[[float], bool], window: tuple[float, float], tol: float
) -> float:
    """Bisect the clearing time between a stable and an unstable endpoint."""
    a, b = window
    if not b > a or not tol > 0:
        raise ValidationError("window a < b and tol > 0", f"{window}, {tol}")
    if not is_stable(a):
        raise BracketInvalid(f"unstable when cleared at window start {a}")
    if is_stable(b):
        raise BracketInvalid(f"stable when cleared at window end {b}")
    while b - a > tol:
        mid = 0.5 * (a + b)
        if is_stable(mid):
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)
