"""Full-order reference model of the grid-side converter and its PLL.

The chain per instant is: lagged current references -> quasi-static sequence
network -> three-phase terminal voltages -> Park transform at the PLL angle ->
notch filter on v_q -> PI -> PLL frequency and angle.

The converter's positive-sequence currents are defined in the PLL frame and
the negative-sequence currents in the conjugate frame (angle ``-theta_pll``).
The network is solved in a frame locked to the grid source.

Two integration methods are available. ``"rk4"`` integrates the continuous
system (notch realized from its analog prototype) with fixed-step RK4 and is
the default. ``"discrete"`` runs the controller as a sampled system: bilinear
prewarped biquad notch, forward-Euler PLL integrator and phases.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ValidationError
from .rom import PiecewiseLinearSignal, SolverConfig, step_times
from .seqnet import NetworkResponse
from .trajectory import Trajectory

TWO_PI_3 = 2 * math.pi / 3


@dataclass(frozen=True)
class NotchFilterDesign:
    center: float = 2 * 2 * math.pi * 50.0
    zeta: float = 0.02
    sample_dt: float = 50e-6

    def __post_init__(self):
        if not self.center > 0:
            raise ValidationError("NotchFilterDesign.center > 0", f"got {self.center}")
        if not 0 < self.zeta <= 1:
            raise ValidationError("NotchFilterDesign 0 < zeta <= 1", f"got {self.zeta}")
        if not self.sample_dt * self.center < math.pi:
            raise ValidationError("NotchFilterDesign sample_dt * center < pi", f"{self.sample_dt * self.center}")

    def coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Biquad ``(b, a)`` with ``a[0] == 1``, bilinear with prewarping at the center."""
        wn, z, t = self.center, self.zeta, self.sample_dt
        k = wn / math.tan(wn * t / 2)
        # s -> k (1 - q) / (1 + q), q = z^-1
        k2, w2, c = k * k, wn * wn, 2 * z * wn * k
        b = np.array([k2 + w2, 2 * (w2 - k2), k2 + w2])
        a = np.array([k2 + c + w2, 2 * (w2 - k2), k2 - c + w2])
        return b / a[0], a / a[0]

    def response(self, omega: float) -> complex:
        b, a = self.coefficients()
        q = cmath.exp(-1j * omega * self.sample_dt)
        return (b[0] + b[1] * q + b[2] * q * q) / (a[0] + a[1] * q + a[2] * q * q)


def notch_frequency_response(d: NotchFilterDesign, omega: float) -> tuple[float, float]:
    """Magnitude (dB) and phase (deg) of the discretized notch at ``omega`` rad/s."""
    if not omega > 0:
        raise ValidationError("omega > 0", f"got {omega}")
    h = d.response(omega)
    mag = abs(h)
    mag_db = 20 * math.log10(mag) if mag > 0 else -math.inf
    return mag_db, math.degrees(cmath.phase(h))


def synthesize_abc(v_pos: complex, v_neg: complex, theta_g: float) -> tuple[float, float, float]:
    """Phase voltages from positive/negative sequence phasors at grid angle ``theta_g``."""
    mp, ap = abs(v_pos), cmath.phase(v_pos)
    mn, an = abs(v_neg), cmath.phase(v_neg)
    tp = theta_g + ap
    tn = -theta_g + an
    return (
        mp * math.cos(tp) + mn * math.cos(tn),
        mp * math.cos(tp - TWO_PI_3) + mn * math.cos(tn - TWO_PI_3),
        mp * math.cos(tp + TWO_PI_3) + mn * math.cos(tn + TWO_PI_3),
    )


def park(va: float, vb: float, vc: float, theta: float) -> tuple[float, float]:
    """Amplitude-invariant abc -> dq at angle ``theta``."""
    ca, cb, cc = math.cos(theta), math.cos(theta - TWO_PI_3), math.cos(theta + TWO_PI_3)
    sa, sb, sc = math.sin(theta), math.sin(theta - TWO_PI_3), math.sin(theta + TWO_PI_3)
    vd = (2.0 / 3.0) * (va * ca + vb * cb + vc * cc)
    vq = -(2.0 / 3.0) * (va * sa + vb * sb + vc * sc)
    return vd, vq


def inverse_park(vd: float, vq: float, theta: float) -> tuple[float, float, float]:
    return tuple(
        vd * math.cos(theta + s) - vq * math.sin(theta + s) for s in (0.0, -TWO_PI_3, TWO_PI_3)
    )


@dataclass(frozen=True)
class RefModelConfig:
    kp: float
    ki: float
    omega0: float = 2 * math.pi * 50.0
    notch: NotchFilterDesign | None = field(default_factory=NotchFilterDesign)
    cc_tau: float = 2e-3
    method: str = "rk4"

    def __post_init__(self):
        if self.cc_tau < 0:
            raise ValidationError("RefModelConfig.cc_tau >= 0", f"got {self.cc_tau}")
        if self.method not in ("rk4", "discrete"):
            raise ValidationError("RefModelConfig.method in {rk4, discrete}", self.method)


@dataclass
class RefSegment:
    """Constant network between events; references are time signals."""

    t_end: float
    network: NetworkResponse
    vg: complex
    id_ref: PiecewiseLinearSignal
    iq_ref: PiecewiseLinearSignal
    iqneg_ref: PiecewiseLinearSignal
    label: str = ""

    def refs(self, t: float) -> tuple[float, float, float]:
        return self.id_ref.value(t), self.iq_ref.value(t), self.iqneg_ref.value(t)


@dataclass(frozen=True)
class RefModelState:
    theta_pll: float
    pll_integrator: float
    notch_states: tuple[float, float]
    id_lag: float
    iq_lag: float
    iqneg_lag: float
    theta_g: float

    def as_tuple(self):
        return (self.theta_pll, self.pll_integrator, *self.notch_states, self.id_lag, self.iq_lag, self.iqneg_lag, self.theta_g)

    @classmethod
    def from_tuple(cls, y):
        return cls(y[0], y[1], (y[2], y[3]), y[4], y[5], y[6], y[7])

    @property
    def delta(self) -> float:
        return self.theta_pll - self.theta_g


def terminal_voltages(seg: RefSegment, delta: float, id_: float, iq: float, iqn: float):
    rot = cmath.exp(1j * delta)
    i_pos = complex(id_, iq) * rot
    i_neg = 1j * iqn * rot.conjugate()
    return seg.network.voltages(seg.vg, i_pos, i_neg)


def measured_vq(seg: RefSegment, y, id_: float, iq: float, iqn: float) -> tuple[float, complex, complex]:
    theta_p, theta_g = y[0], y[7]
    v1, v2, _ = terminal_voltages(seg, theta_p - theta_g, id_, iq, iqn)
    va, vb, vc = synthesize_abc(v1, v2, theta_g)
    return park(va, vb, vc, theta_p)[1], v1, v2


def equilibrium_state(seg: RefSegment, cfg: RefModelConfig, omega_g0: float, t0: float = 0.0) -> RefModelState:
    """Locked steady state at ``t0`` with theta_g = 0 and v_q = 0."""
    id_, iq, iqn = seg.refs(t0)
    a = cmath.phase(seg.network.coeffs[0, 0] * seg.vg)

    def vq(delta):
        v1, _, _ = terminal_voltages(seg, delta, id_, iq, iqn)
        return (v1 * cmath.exp(-1j * delta)).imag

    lo, hi = a - math.pi / 2 + 1e-9, a + math.pi / 2 - 1e-9
    if vq(lo) * vq(hi) > 0:
        raise ValidationError("reference model equilibrium exists")
    delta = brentq(vq, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return RefModelState(delta, omega_g0 - cfg.omega0, (0.0, 0.0), id_, iq, iqn, 0.0)


class _Dynamics:
    def __init__(self, seg: RefSegment, cfg: RefModelConfig, omega_g: PiecewiseLinearSignal):
        self.seg = seg
        self.cfg = cfg
        self.omega_g = omega_g
        notch = cfg.notch
        self.wn = notch.center if notch else 0.0
        self.c = 2 * notch.zeta * notch.center if notch else 0.0

    def currents(self, t, y):
        if self.cfg.cc_tau == 0:
            return self.seg.refs(t)
        return y[4], y[5], y[6]

    def outputs(self, t, y):
        """(vq_filtered, v_pos, v_neg) at the state."""
        id_, iq, iqn = self.currents(t, y)
        vq, v1, v2 = measured_vq(self.seg, y, id_, iq, iqn)
        vqf = vq - self.c * y[3] if self.cfg.notch else vq
        return vq, vqf, v1, v2

    def __call__(self, t, y):
        cfg = self.cfg
        vq, vqf, _, _ = self.outputs(t, y)
        if cfg.notch:
            dz1 = y[3]
            dz2 = vq - self.wn * self.wn * y[2] - self.c * y[3]
        else:
            dz1 = dz2 = 0.0
        dw = cfg.kp * vqf + y[1]
        if cfg.cc_tau > 0:
            r_id, r_iq, r_in = self.seg.refs(t)
            tau = cfg.cc_tau
            di = ((r_id - y[4]) / tau, (r_iq - y[5]) / tau, (r_in - y[6]) / tau)
        else:
            di = (0.0, 0.0, 0.0)
        return (cfg.omega0 + dw, cfg.ki * vqf, dz1, dz2, *di, self.omega_g.value(t))


def _rk4(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + h / 2, [a + h / 2 * b for a, b in zip(y, k1)])
    k3 = f(t + h / 2, [a + h / 2 * b for a, b in zip(y, k2)])
    k4 = f(t + h, [a + h * b for a, b in zip(y, k3)])
    return [a + h / 6 * (b + 2 * c + 2 * d + e) for a, b, c, d, e in zip(y, k1, k2, k3, k4)]


def step(
    state: RefModelState,
    t: float,
    dt: float,
    seg: RefSegment,
    cfg: RefModelConfig,
    omega_g: PiecewiseLinearSignal,
    biquad_state: tuple[float, float] | None = None,
) -> RefModelState:
    """Advance one step of length ``dt`` from time ``t``.

    With ``cfg.method == "discrete"`` the notch states are the biquad's
    transposed direct-form II registers and ``dt`` must equal the notch
    sample period.
    """
    if cfg.method == "rk4":
        return RefModelState.from_tuple(_rk4(_Dynamics(seg, cfg, omega_g), t, list(state.as_tuple()), dt))
    return _discrete_step(state, t, dt, seg, cfg, omega_g)


def _discrete_step(state, t, dt, seg, cfg, omega_g):
    if cfg.notch is not None and abs(dt - cfg.notch.sample_dt) > 1e-9 * dt:
        raise ValidationError("dt == notch.sample_dt", f"{dt} != {cfg.notch.sample_dt}")
    r_id, r_iq, r_in = seg.refs(t + dt)
    if cfg.cc_tau > 0:
        g = math.exp(-dt / cfg.cc_tau)
        id_ = r_id + (state.id_lag - r_id) * g
        iq = r_iq + (state.iq_lag - r_iq) * g
        iqn = r_in + (state.iqneg_lag - r_in) * g
    else:
        id_, iq, iqn = r_id, r_iq, r_in
    y = state.as_tuple()
    vq, _, _ = measured_vq(seg, y, id_, iq, iqn)
    s1, s2 = state.notch_states
    if cfg.notch is not None:
        b, a = cfg.notch.coefficients()
        vqf = b[0] * vq + s1
        s1 = b[1] * vq - a[1] * vqf + s2
        s2 = b[2] * vq - a[2] * vqf
    else:
        vqf = vq
    dw = cfg.kp * vqf + state.pll_integrator
    integ = state.pll_integrator + cfg.ki * vqf * dt
    return RefModelState(
        theta_pll=state.theta_pll + (cfg.omega0 + dw) * dt,
        pll_integrator=integ,
        notch_states=(s1, s2),
        id_lag=id_,
        iq_lag=iq,
        iqneg_lag=iqn,
        theta_g=state.theta_g + omega_g.value(t) * dt,
    )


def _discrete_outputs(state, t, seg, cfg):
    y = state.as_tuple()
    vq, v1, v2 = measured_vq(seg, y, state.id_lag, state.iq_lag, state.iqneg_lag)
    if cfg.notch is not None:
        b0 = cfg.notch.coefficients()[0][0]
        vqf = b0 * vq + state.notch_states[0]
    else:
        vqf = vq
    return vqf, v1, v2


def simulate(
    segments: Sequence[RefSegment],
    cfg: RefModelConfig,
    omega_g: PiecewiseLinearSignal,
    solver: SolverConfig = SolverConfig(),
    initial: RefModelState | None = None,
    t0: float = 0.0,
) -> Trajectory:
    """Run the reference model over the segments and sample on the output grid.

    ``delta`` is ``theta_pll - theta_g`` and ``delta_dot`` is the PLL
    frequency minus the grid frequency.
    """
    if initial is None:
        initial = equilibrium_state(segments[0], cfg, omega_g.value(t0), t0)
    if cfg.method == "discrete" and cfg.notch is not None:
        solver = replace(solver, dt=cfg.notch.sample_dt)
    y = list(initial.as_tuple())
    t = t0
    rows = []
    events = []
    diverged_at = None
    last = len(segments) - 1

    def sample(seg, dyn):
        if cfg.method == "rk4":
            _, vqf, v1, v2 = dyn.outputs(t, y)
            dw = cfg.kp * vqf + y[1]
        else:
            vqf, v1, v2 = _discrete_outputs(RefModelState.from_tuple(y), t, seg, cfg)
            dw = cfg.kp * vqf + y[1]
        wg = omega_g.value(t)
        rate = cfg.omega0 + dw - wg
        return (t, y[0] - y[7], rate, abs(v1), cmath.phase(v1), abs(v2), wg)

    for k, seg in enumerate(segments):
        if k > 0:
            events.append((t, seg.label or f"segment{k}"))
        dyn = _Dynamics(seg, cfg, omega_g)
        if cfg.method == "discrete" and cfg.cc_tau == 0:
            y[4:7] = list(seg.refs(t))
        if solver.on_output_grid(t) and (not rows or t > rows[-1][0]):
            rows.append(sample(seg, dyn))
        times = step_times(t, seg.t_end, solver.dt)
        for tn in times:
            h = tn - t
            if cfg.method == "rk4":
                y = _rk4(dyn, t, y, h)
            else:
                y = list(_discrete_step(RefModelState.from_tuple(y), t, h, seg, cfg, omega_g).as_tuple())
            t = tn
            at_end = tn == times[-1]
            if (solver.on_output_grid(t) and not at_end) or (at_end and k == last):
                row = sample(seg, dyn)
                rows.append(row)
            else:
                row = None
            if not all(map(math.isfinite, y)):
                diverged_at = t
            elif abs(y[1]) + abs(cfg.omega0 - omega_g.value(t)) > 0.5 * solver.diverge_threshold:
                # only evaluate the exact rate once the integrator is large
                if abs((row or sample(seg, dyn))[2]) > solver.diverge_threshold:
                    diverged_at = t
            if diverged_at is not None:
                if row is None:
                    rows.append(sample(seg, dyn))
                events.append((t, "diverged"))
                break
        if diverged_at is not None:
            break

    arr = np.array(rows, dtype=float).reshape(-1, 7)
    return Trajectory(
        *arr.T,
        events=events,
        model="refmodel",
        diverged=diverged_at is not None,
        diverged_at=diverged_at,
    )
