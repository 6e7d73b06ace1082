"""Sequence-network fault calculations at the wind-turbine terminal.

All quantities are per unit. Phasors are Python ``complex`` values in the
synchronous dq frame with d on the real axis and q on the imaginary axis.
The converter is an ideal current source: it injects ``i_pos`` into the
positive-sequence network, ``i_neg`` into the negative-sequence network and
nothing into the zero-sequence network.

Two independent routes are provided for the post-fault voltages:

* :func:`postfault_voltage_pos` evaluates the closed forms for SLG, DLG and DL
  faults verbatim.
* :func:`solve_coupled_network` writes the network and fault-boundary equations
  in phase quantities and solves the resulting 6x6 complex linear system.

The closed forms coincide with the circuit solution for SLG faults always, for
DLG faults when ``zg1 == zg2`` and for DL faults when ``zg0 == 0``. Outside
those regimes :func:`compare_closed_form` reports the discrepancy instead of
choosing one of the two.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DivisionDegenerate, SingularNetwork, UnsupportedKind, ValidationError

DEGENERATE_TOL = 1e-12
SINGULAR_TOL = 1e-12
# closed form vs circuit, relative
AGREEMENT_TOL = 1e-9
DISAGREEMENT_FLAG_TOL = 1e-6

A_OP = cmath.exp(2j * math.pi / 3)
# rows a, b, c; columns zero, positive, negative
SEQ_TO_PHASE = np.array(
    [[1, 1, 1], [1, A_OP**2, A_OP], [1, A_OP, A_OP**2]], dtype=complex
)


class FaultKind(str, enum.Enum):
    SLG_A = "SLG_A"
    DLG_BC = "DLG_BC"
    DL_BC = "DL_BC"
    BALANCED_3PH = "BALANCED_3PH"


@dataclass(frozen=True)
class SequenceImpedance:
    """Series R-L branch in pu; ``l`` is the reactance at nominal frequency."""

    r: float
    l: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and math.isfinite(self.l)):
            raise ValidationError("SequenceImpedance finite", f"r={self.r}, l={self.l}")
        if self.r < 0 or self.l < 0:
            raise ValidationError("SequenceImpedance r >= 0 and l >= 0", f"r={self.r}, l={self.l}")

    def z(self, omega_pu: float = 1.0) -> complex:
        return complex(self.r, omega_pu * self.l)

    @property
    def is_zero(self) -> bool:
        return self.r == 0 and self.l == 0


@dataclass(frozen=True)
class SequenceImpedanceSet:
    pos: SequenceImpedance
    neg: SequenceImpedance
    zero: SequenceImpedance

    @classmethod
    def symmetric(cls, z: SequenceImpedance) -> "SequenceImpedanceSet":
        return cls(z, z, z)

    def values(self) -> tuple[complex, complex, complex]:
        """(z1, z2, z0) at nominal frequency."""
        return self.pos.z(), self.neg.z(), self.zero.z()


@dataclass(frozen=True)
class BaseQuantities:
    s_base: float = 12e6
    v_base_ll: float = 690.0
    f0: float = 50.0

    def __post_init__(self):
        for name in ("s_base", "v_base_ll", "f0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"BaseQuantities.{name} > 0", f"got {v}")

    @property
    def z_base(self) -> float:
        return self.v_base_ll**2 / self.s_base

    @property
    def omega0(self) -> float:
        return 2 * math.pi * self.f0

    @property
    def v_peak_phase(self) -> float:
        """Peak line-to-neutral voltage, the base of the dq voltages."""
        return self.v_base_ll * math.sqrt(2.0 / 3.0)


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    zf_value: float
    zf_unit: str = "pu"
    t_on: float = 0.2
    t_clear: float | None = None

    def __post_init__(self):
        if self.zf_unit not in ("ohm", "pu"):
            raise ValidationError("FaultSpec.zf unit in {ohm, pu}", self.zf_unit)
        if not (math.isfinite(self.zf_value) and self.zf_value >= 0):
            raise ValidationError("FaultSpec.zf >= 0", f"got {self.zf_value}")
        if self.t_clear is not None and not self.t_clear > self.t_on:
            raise ValidationError("FaultSpec.t_clear > t_on", f"{self.t_clear} <= {self.t_on}")

    def zf_pu(self, base: BaseQuantities) -> float:
        if self.zf_unit == "pu":
            return self.zf_value
        return to_pu_impedance(self.zf_value, base)


def to_pu_impedance(value: float, base: BaseQuantities) -> float:
    if value < 0:
        raise ValidationError("impedance >= 0", f"got {value} ohm")
    return value / base.z_base


def prefault_voltage_pos(vg: complex, i_pos: complex, z_pos: SequenceImpedance) -> complex:
    return vg + i_pos * z_pos.z(1.0)


def prefault_voltage_neg(iq_neg: float, z_neg: SequenceImpedance) -> complex:
    # the negative-sequence d current is zero by construction
    return 1j * iq_neg * z_neg.z(1.0)


def _checked_div(num: complex, den: complex) -> complex:
    if abs(den) < DEGENERATE_TOL:
        raise DivisionDegenerate(f"denominator magnitude {abs(den):.3e} below {DEGENERATE_TOL}")
    return num / den


def postfault_voltage_pos(
    kind: FaultKind,
    v_pre_pos: complex,
    v_pre_neg: complex,
    zset: SequenceImpedanceSet,
    zf: float | complex,
) -> complex:
    """Closed-form post-fault positive-sequence terminal voltage.

    SLG (phase a)::

        v = v1 - (v1 + v2) / (z1 + z2 + z0 + 3 zf) * z1

    DLG (phases b, c)::

        v = (z0 + 3 zf) / (z2 + 2 z0 + 6 zf) * (v1 + v2)

    DL (phases b, c)::

        v = v1 - (v1 - v2) / (z1 + z2 + z0 + zf) * z1

    ``v1``/``v2`` are the pre-fault positive/negative sequence voltages.
    """
    kind = FaultKind(kind)
    z1, z2, z0 = zset.values()
    if kind is FaultKind.SLG_A:
        return v_pre_pos - _checked_div(v_pre_pos + v_pre_neg, z1 + z2 + z0 + 3 * zf) * z1
    if kind is FaultKind.DLG_BC:
        return _checked_div(z0 + 3 * zf, z2 + 2 * z0 + 6 * zf) * (v_pre_pos + v_pre_neg)
    if kind is FaultKind.DL_BC:
        return v_pre_pos - _checked_div(v_pre_pos - v_pre_neg, z1 + z2 + z0 + zf) * z1
    raise UnsupportedKind(f"{kind.value} has no closed form; scale the grid voltage instead")


def _fault_rows(kind: FaultKind, zf: complex) -> tuple[np.ndarray, np.ndarray]:
    """Boundary conditions ``Cv @ V012 + Ci @ I012 = 0`` at the fault.

    I012 are the sequence currents flowing from the network into the fault.
    """
    va, vb, vc = SEQ_TO_PHASE
    cv = np.zeros((3, 3), dtype=complex)
    ci = np.zeros((3, 3), dtype=complex)
    if kind is FaultKind.SLG_A:
        cv[0], ci[0] = va, -zf * va
        ci[1] = vb
        ci[2] = vc
    elif kind is FaultKind.DLG_BC:
        ci[0] = va
        cv[1], ci[1] = vb, -zf * (vb + vc)
        cv[2], ci[2] = vc, -zf * (vb + vc)
    elif kind is FaultKind.DL_BC:
        ci[0] = va
        ci[1] = vb + vc
        cv[2], ci[2] = vb - vc, -zf * vb
    elif kind is FaultKind.BALANCED_3PH:
        for k, row in enumerate((va, vb, vc)):
            cv[k], ci[k] = row, -zf * row
    else:  # pragma: no cover
        raise UnsupportedKind(str(kind))
    # keeps the rows well scaled when zf is used as an open-circuit limit
    scale = 1.0 / (1.0 + abs(zf))
    return cv * scale, ci * scale


def _system(kind: FaultKind, zset: SequenceImpedanceSet, zf: complex) -> np.ndarray:
    z1, z2, z0 = zset.values()
    mat = np.zeros((6, 6), dtype=complex)
    # unknowns: V0, V1, V2, I0, I1, I2 ; network rows: V_k + Z_k I_k = E_k
    for k, zk in enumerate((z0, z1, z2)):
        mat[k, k] = 1.0
        mat[k, 3 + k] = zk
    cv, ci = _fault_rows(kind, zf)
    mat[3:, :3] = cv
    mat[3:, 3:] = ci
    s = np.linalg.svd(mat, compute_uv=False)
    if s[-1] <= SINGULAR_TOL * s[0]:
        raise SingularNetwork(f"coupled network rank-deficient (sigma ratio {s[-1] / s[0]:.3e})")
    return mat


def solve_network(
    kind: FaultKind,
    vg: complex,
    i_pos: complex,
    i_neg: complex,
    zset: SequenceImpedanceSet,
    zf: float | complex,
) -> tuple[complex, complex, complex]:
    """Solve the faulted network for arbitrary complex injections.

    Returns the terminal sequence voltages ``(v_pos, v_neg, v_zero)``.
    """
    kind = FaultKind(kind)
    z1, z2, _ = zset.values()
    mat = _system(kind, zset, complex(zf))
    rhs = np.zeros(6, dtype=complex)
    rhs[1] = vg + z1 * i_pos
    rhs[2] = z2 * i_neg
    x = np.linalg.solve(mat, rhs)
    return complex(x[1]), complex(x[2]), complex(x[0])


def solve_coupled_network(kind, vg: complex, currents, zset: SequenceImpedanceSet, zf):
    """Circuit solution with injections taken from a :class:`CurrentRefs`."""
    i_pos = complex(currents.id_pos, currents.iq_pos)
    i_neg = 1j * currents.iq_neg
    return solve_network(kind, vg, i_pos, i_neg, zset, zf)


@dataclass(frozen=True)
class NetworkResponse:
    """Affine map from ``(vg, i_pos, i_neg)`` to terminal sequence voltages.

    ``coeffs[k]`` holds the coefficients of output k (0 = positive,
    1 = negative, 2 = zero) with respect to ``vg``, ``i_pos``, ``i_neg``.
    """

    coeffs: np.ndarray

    def voltages(self, vg: complex, i_pos: complex, i_neg: complex) -> tuple[complex, complex, complex]:
        c = self.coeffs
        return (
            complex(c[0, 0] * vg + c[0, 1] * i_pos + c[0, 2] * i_neg),
            complex(c[1, 0] * vg + c[1, 1] * i_pos + c[1, 2] * i_neg),
            complex(c[2, 0] * vg + c[2, 1] * i_pos + c[2, 2] * i_neg),
        )

    def thevenin_pos(self, vg: complex, i_neg: complex) -> tuple[complex, complex]:
        """Positive-sequence source and impedance seen by the converter."""
        c = self.coeffs
        return complex(c[0, 0] * vg + c[0, 2] * i_neg), complex(c[0, 1])


def network_response(kind, zset: SequenceImpedanceSet, zf) -> NetworkResponse:
    """Build the affine network map by superposition of unit injections."""
    if kind is None:
        z1, z2, _ = zset.values()
        coeffs = np.array([[1, z1, 0], [0, 0, z2], [0, 0, 0]], dtype=complex)
        return NetworkResponse(coeffs)
    cols = [
        solve_network(kind, 1.0, 0.0, 0.0, zset, zf),
        solve_network(kind, 0.0, 1.0, 0.0, zset, zf),
        solve_network(kind, 0.0, 0.0, 1.0, zset, zf),
    ]
    return NetworkResponse(np.array(cols, dtype=complex).T)


def closed_form_response(kind, zset: SequenceImpedanceSet, zf) -> NetworkResponse:
    """Positive-sequence map from the closed forms (negative/zero rows left at 0)."""
    z1, z2, _ = zset.values()

    def v(vg, ip, ineg):
        return postfault_voltage_pos(kind, vg + ip * z1, ineg * z2, zset, zf)

    row = [v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(0.0, 0.0, 1.0)]
    coeffs = np.zeros((3, 3), dtype=complex)
    coeffs[0] = row
    return NetworkResponse(coeffs)


def expected_exact(kind, zset: SequenceImpedanceSet, tol: float = 1e-12) -> bool:
    """Whether the closed form is an exact circuit solution for this network."""
    kind = FaultKind(kind)
    z1, z2, z0 = zset.values()
    scale = max(abs(z1), abs(z2), abs(z0), 1e-300)
    if kind is FaultKind.SLG_A:
        return True
    if kind is FaultKind.DLG_BC:
        return abs(z1 - z2) <= tol * scale
    if kind is FaultKind.DL_BC:
        return abs(z0) <= tol * scale
    return False


@dataclass(frozen=True)
class ClosedFormCheck:
    kind: FaultKind
    closed_form: complex
    circuit: complex
    rel_error: float
    expected_exact: bool

    @property
    def flagged(self) -> bool:
        """True when the closed form is outside its exact regime or disagrees."""
        return (not self.expected_exact) or self.rel_error > AGREEMENT_TOL

    @property
    def disagrees(self) -> bool:
        return self.rel_error > DISAGREEMENT_FLAG_TOL


def compare_closed_form(kind, vg: complex, currents, zset: SequenceImpedanceSet, zf) -> ClosedFormCheck:
    kind = FaultKind(kind)
    v1 = prefault_voltage_pos(vg, complex(currents.id_pos, currents.iq_pos), zset.pos)
    v2 = prefault_voltage_neg(currents.iq_neg, zset.neg)
    cf = postfault_voltage_pos(kind, v1, v2, zset, zf)
    circ = solve_coupled_network(kind, vg, currents, zset, zf)[0]
    rel = abs(cf - circ) / max(abs(circ), 1e-6)
    return ClosedFormCheck(kind, cf, circ, rel, expected_exact(kind, zset))
