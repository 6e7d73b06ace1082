"""LVRT current references from a proportional grid-code characteristic.

Sign convention: voltage-supporting (capacitive) positive-sequence reactive
current is negative q, matching the pre-disturbance ``iq = -0.1`` operating
point. Negative-sequence reactive current is positive for a positive
negative-sequence voltage.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from . import seqnet
from .errors import NoConvergence, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridCodeParams:
    k_pos: float = 2.0
    k_neg: float = 2.0
    deadband: float = 0.0
    iq_total_max: float = 1.0
    i_total_max: float = 1.0
    id_post_ramp: float = 5.0

    def __post_init__(self):
        for name in ("k_pos", "k_neg"):
            k = getattr(self, name)
            if k < 0:
                raise ValidationError(f"GridCodeParams.{name} >= 0", f"got {k}")
            if not 2.0 <= k <= 6.0 and k != 0.0:
                log.warning("%s=%g outside the usual 2..6 range", name, k)
        if not 0.0 <= self.deadband <= 0.2:
            raise ValidationError("GridCodeParams.deadband in [0, 0.2]", f"got {self.deadband}")
        if not 0 < self.iq_total_max <= self.i_total_max:
            raise ValidationError(
                "GridCodeParams.iq_total_max <= i_total_max",
                f"{self.iq_total_max} > {self.i_total_max}",
            )
        if not self.id_post_ramp > 0:
            raise ValidationError("GridCodeParams.id_post_ramp > 0", f"got {self.id_post_ramp}")


@dataclass(frozen=True)
class CurrentRefs:
    id_pos: float
    iq_pos: float
    iq_neg: float = 0.0

    @property
    def i_pos(self) -> complex:
        return complex(self.id_pos, self.iq_pos)

    def distance(self, other: "CurrentRefs") -> float:
        return max(
            abs(self.id_pos - other.id_pos),
            abs(self.iq_pos - other.iq_pos),
            abs(self.iq_neg - other.iq_neg),
        )


def lvrt_references(
    v_pos_mag: float,
    v_neg_mag: float,
    params: GridCodeParams,
    id_request: float = 1.0,
    iq_pre: float = 0.0,
) -> CurrentRefs:
    """Reactive current injection proportional to the sequence voltages.

    ``iq_pre`` is the positive-sequence reactive current held outside LVRT;
    the sag-proportional increment is added on top of it.

    The reactive total is clipped with priority to the positive sequence.
    The active current then takes whatever capability remains, so that
    ``|i_pos| + |iq_neg| <= i_total_max``.
    """
    if v_pos_mag < 0 or v_neg_mag < 0:
        raise ValidationError("voltage magnitudes >= 0", f"{v_pos_mag}, {v_neg_mag}")
    sag = (1.0 - v_pos_mag) - params.deadband
    iq_pos = iq_pre - params.k_pos * sag if sag > 0 else iq_pre
    unbalance = v_neg_mag - params.deadband
    iq_neg = params.k_neg * unbalance if unbalance > 0 else 0.0

    qmax = params.iq_total_max
    iq_pos = max(iq_pos, -qmax) if iq_pos <= 0 else min(iq_pos, qmax)
    room = qmax - abs(iq_pos)
    iq_neg = min(iq_neg, room)

    i_room = params.i_total_max - abs(iq_neg)
    id_cap = math.sqrt(max(0.0, i_room * i_room - iq_pos * iq_pos))
    id_pos = max(min(id_request, id_cap), -id_cap)
    return CurrentRefs(id_pos, iq_pos, iq_neg)


def ramp_limited_id(t: float, t_clear: float, id_target: float, id_at_clear: float, ramp: float) -> float:
    """Active current recovering after fault clearance at ``ramp`` pu/s."""
    if math.isinf(ramp):
        return id_target
    return min(id_target, id_at_clear + ramp * (t - t_clear))


@dataclass
class FixedPointResult:
    refs: CurrentRefs
    v_pos: complex
    v_neg: complex
    iterations: int
    residuals: list[float] = field(default_factory=list)


def fixed_point_references(
    kind,
    vg: complex,
    zset: seqnet.SequenceImpedanceSet,
    zf: float,
    params: GridCodeParams | None,
    initial: CurrentRefs,
    id_request: float = 1.0,
    tol: float = 1e-9,
    max_iter: int = 100,
    iq_pre: float | None = None,
) -> FixedPointResult:
    """Successive substitution between the grid-code rules and the network.

    ``kind=None`` means no fault (pre-fault network). ``params=None`` disables
    the gains and holds the references at ``initial``. ``iq_pre`` defaults
    to ``initial.iq_pos``.
    """
    if tol <= 0 or max_iter < 1:
        raise ValidationError("tol > 0 and max_iter >= 1", f"tol={tol}, max_iter={max_iter}")
    if iq_pre is None:
        iq_pre = initial.iq_pos
    resp = seqnet.network_response(kind, zset, zf)
    refs = initial
    residuals = []
    for it in range(1, max_iter + 1):
        v_pos, v_neg, _ = resp.voltages(vg, refs.i_pos, 1j * refs.iq_neg)
        if params is None:
            new = refs
        else:
            new = lvrt_references(abs(v_pos), abs(v_neg), params, id_request, iq_pre)
        res = new.distance(refs)
        residuals.append(res)
        refs = new
        if res < tol:
            v_pos, v_neg, _ = resp.voltages(vg, refs.i_pos, 1j * refs.iq_neg)
            return FixedPointResult(refs, v_pos, v_neg, it, residuals)
    raise NoConvergence(max_iter, residuals[-1])
