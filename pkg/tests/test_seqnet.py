import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wtrom import seqnet
from wtrom.errors import DivisionDegenerate, SingularNetwork, UnsupportedKind, ValidationError
from wtrom.gridcode import CurrentRefs

Z_GRID = seqnet.SequenceImpedance(0.0037, 0.06)
ZSET = seqnet.SequenceImpedanceSet.symmetric(Z_GRID)
BASE = seqnet.BaseQuantities()
ZF_BASE = 6.02e-4 / (690.0**2 / 12e6)
a = cmath.exp(2j * math.pi / 3)
A = np.array([[1, 1, 1], [1, a * a, a], [1, a, a * a]])


def phase_domain_oracle(kind, v_pre, zset, zf):
    """Independent solve: Thevenin per sequence plus phase-domain fault boundary.

    Sequence vectors are ordered (zero, pos, neg). Unknowns are the three phase fault currents; returns the sequence terminal
    voltages ``v_k = v_pre_k - z_k * i_f_k``.
    """
    z1, z2, z0 = zset.values()
    z = np.diag([z0, z1, z2])
    Ainv = np.linalg.inv(A)
    # terminal phase voltages as an affine function of phase fault currents
    v0 = A @ np.asarray(v_pre, dtype=complex)
    m = -A @ z @ Ainv
    rows, rhs = [], []
    if kind == "SLG_A":
        rows = [m[0] - zf * np.eye(3)[0], np.eye(3)[1], np.eye(3)[2]]
        rhs = [-v0[0], 0, 0]
    elif kind == "DLG_BC":
        e = np.eye(3)
        rows = [e[0], m[1] - m[2], m[1] - zf * (e[1] + e[2])]
        rhs = [0, v0[2] - v0[1], -v0[1]]
    elif kind == "DL_BC":
        e = np.eye(3)
        rows = [e[0], e[1] + e[2], m[1] - m[2] - zf * e[1]]
        rhs = [0, 0, v0[2] - v0[1]]
    i_f = np.linalg.solve(np.array(rows), np.array(rhs, dtype=complex))
    i_seq = Ainv @ i_f
    return np.asarray(v_pre) - np.diag(z) * i_seq


# --- pre-fault voltages ------------------------------------------------------


def test_prefault_pos_zero_current():
    assert seqnet.prefault_voltage_pos(1 + 0j, 0j, Z_GRID) == 1 + 0j


def test_prefault_pos_table_values():
    # (1 - 0.1j)(0.0037 + 0.06j) = 0.0097 + 0.05963j
    v = seqnet.prefault_voltage_pos(1 + 0j, complex(1.0, -0.1), Z_GRID)
    assert v == pytest.approx(1.0097 + 0.05963j, abs=1e-15)


def test_prefault_pos_sag_currents():
    # 0.9 + (-0.625j)(0.0037 + 0.06j) = 0.9375 - 0.0023125j
    v = seqnet.prefault_voltage_pos(0.9 + 0j, complex(0, -0.625), Z_GRID)
    assert v == pytest.approx(0.9375 - 0.0023125j, abs=1e-15)


@pytest.mark.parametrize(
    "iq_neg, expected",
    [(0.0, 0j), (0.5, -0.03 + 0.00185j), (0.2, -0.012 + 0.00074j)],
)
def test_prefault_neg(iq_neg, expected):
    assert seqnet.prefault_voltage_neg(iq_neg, Z_GRID) == pytest.approx(expected, abs=1e-15)


# --- per unit ---------------------------------------------------------------


def test_to_pu_impedance():
    assert seqnet.to_pu_impedance(6.02e-4, BASE) == pytest.approx(6.02e-4 * 12e6 / 690.0**2, rel=1e-14)
    assert seqnet.to_pu_impedance(6.02e-4, BASE) == pytest.approx(0.01517, abs=5e-6)
    assert seqnet.to_pu_impedance(0.0, BASE) == 0.0
    assert seqnet.to_pu_impedance(BASE.z_base, BASE) == 1.0


def test_base_quantities():
    assert BASE.z_base == pytest.approx(0.039675)
    assert BASE.omega0 == pytest.approx(100 * math.pi)
    assert BASE.v_peak_phase == pytest.approx(563.3826, rel=1e-6)
    with pytest.raises(ValidationError):
        seqnet.BaseQuantities(s_base=0)


def test_fault_spec_validation():
    with pytest.raises(ValidationError):
        seqnet.FaultSpec("SLG_A", -1.0, "pu", 0.1, 0.2)
    with pytest.raises(ValidationError):
        seqnet.FaultSpec("SLG_A", 0.0, "pu", 0.3, 0.2)
    f = seqnet.FaultSpec("SLG_A", 6.02e-4, "ohm", 0.2, None)
    assert f.zf_pu(BASE) == pytest.approx(ZF_BASE)


def test_impedance_validation():
    with pytest.raises(ValidationError):
        seqnet.SequenceImpedance(-0.1, 0.1)
    assert seqnet.SequenceImpedance(0.01, 0.2).z(2.0) == complex(0.01, 0.4)


# --- closed forms and the circuit solver ---------------------------------------


def _pre(refs, zset=ZSET, vg=1 + 0j):
    return (
        seqnet.prefault_voltage_pos(vg, refs.i_pos, zset.pos),
        seqnet.prefault_voltage_neg(refs.iq_neg, zset.neg),
    )


def test_slg_open_fault_returns_prefault():
    v1, v2 = _pre(CurrentRefs(0.0, -0.625, 0.5))
    assert seqnet.postfault_voltage_pos("SLG_A", v1, v2, ZSET, 1e9) == pytest.approx(v1, rel=1e-8)


def test_slg_fault_network_matches_circuit():
    refs = CurrentRefs(0.0, -0.625, 0.5)
    v1, v2 = _pre(refs)
    cf = seqnet.postfault_voltage_pos("SLG_A", v1, v2, ZSET, ZF_BASE)
    circ = seqnet.solve_coupled_network("SLG_A", 1 + 0j, refs, ZSET, ZF_BASE)[0]
    assert abs(cf - circ) / abs(circ) < 1e-10
    # frozen from the phase-domain oracle below
    assert cf == pytest.approx(0.7259404914 - 0.0794511237j, abs=1e-10)


def test_slg_matches_textbook_series_connection():
    refs = CurrentRefs(0.3, -0.4, 0.2)
    v1, v2 = _pre(refs)
    z1, z2, z0 = ZSET.values()
    i_f = (v1 + v2) / (z1 + z2 + z0 + 3 * ZF_BASE)
    assert seqnet.postfault_voltage_pos("SLG_A", v1, v2, ZSET, ZF_BASE) == pytest.approx(v1 - z1 * i_f, rel=1e-14)


def test_dlg_bolted_equal_branches():
    zset = seqnet.SequenceImpedanceSet(
        seqnet.SequenceImpedance(0.01, 0.05), seqnet.SequenceImpedance(0.02, 0.1), seqnet.SequenceImpedance(0.02, 0.1)
    )
    v1, v2 = 1.0 + 0.1j, 0.05 - 0.02j
    assert seqnet.postfault_voltage_pos("DLG_BC", v1, v2, zset, 0.0) == pytest.approx((v1 + v2) / 3, rel=1e-14)


def test_dlg_bolted_symmetric_matches_circuit():
    refs = CurrentRefs(0.1, -0.8, 0.2)
    v1, v2 = _pre(refs)
    cf = seqnet.postfault_voltage_pos("DLG_BC", v1, v2, ZSET, 0.0)
    circ = seqnet.solve_coupled_network("DLG_BC", 1 + 0j, refs, ZSET, 0.0)[0]
    assert cf == pytest.approx((v1 + v2) / 3, rel=1e-14)
    assert abs(cf - circ) / abs(circ) < 1e-10


@pytest.mark.parametrize("kind", ["SLG_A", "DLG_BC", "DL_BC"])
def test_circuit_solver_matches_phase_domain_oracle(kind):
    rng = np.random.default_rng(3)
    for _ in range(50):
        zs = [seqnet.SequenceImpedance(rng.uniform(0, 0.1), rng.uniform(0.01, 0.3)) for _ in range(3)]
        zset = seqnet.SequenceImpedanceSet(*zs)
        refs = CurrentRefs(*rng.uniform(-1, 1, 3))
        zf = rng.uniform(0, 0.5)
        got = seqnet.solve_coupled_network(kind, 1 + 0j, refs, zset, zf)
        v1, v2 = _pre(refs, zset)
        want = phase_domain_oracle(kind, [0j, v1, v2], zset, zf)
        # oracle order is (zero, pos, neg)
        assert got[0] == pytest.approx(want[1], abs=1e-12)
        assert got[1] == pytest.approx(want[2], abs=1e-12)
        assert got[2] == pytest.approx(want[0], abs=1e-12)


@pytest.mark.parametrize("kind", ["SLG_A", "DL_BC"])
def test_open_fault_limit(kind):
    refs = CurrentRefs(0.4, -0.3, 0.2)
    v1, v2 = _pre(refs)
    p, n, z = seqnet.solve_coupled_network(kind, 1 + 0j, refs, ZSET, 1e9)
    assert abs(p - v1) / abs(v1) < 1e-6
    assert abs(n - v2) / abs(v2) < 1e-6
    assert abs(z) < 1e-6
    assert seqnet.postfault_voltage_pos(kind, v1, v2, ZSET, 1e9) == pytest.approx(v1, rel=1e-6)


def test_dlg_open_ground_leg_is_bolted_line_to_line():
    # the fault impedance sits in the ground return only; b and c stay shorted
    refs = CurrentRefs(0.4, -0.3, 0.2)
    dlg = seqnet.solve_coupled_network("DLG_BC", 1 + 0j, refs, ZSET, 1e9)
    dl = seqnet.solve_coupled_network("DL_BC", 1 + 0j, refs, ZSET, 0.0)
    assert np.allclose(dlg[:2], dl[:2], rtol=1e-6)
    assert abs(dlg[2]) < 1e-6


@pytest.mark.parametrize("kind", ["SLG_A", "DLG_BC", "DL_BC", "BALANCED_3PH"])
def test_dead_network(kind):
    out = seqnet.solve_coupled_network(kind, 0j, CurrentRefs(0, 0, 0), ZSET, 0.01)
    assert all(v == 0 for v in out)


@settings(max_examples=60, deadline=None)
@given(
    kind=st.sampled_from(["SLG_A", "DLG_BC", "DL_BC"]),
    x=st.lists(st.floats(-1, 1), min_size=10, max_size=10),
    zf=st.floats(0, 1),
)
def test_superposition(kind, x, zf):
    vg_a, vg_b = complex(x[0], x[1]), complex(x[2], x[3])
    ia, ib = complex(x[4], x[5]), complex(x[6], x[7])
    na, nb = x[8], x[9]
    va = seqnet.solve_network(kind, vg_a, ia, 1j * na, ZSET, zf)
    vb = seqnet.solve_network(kind, vg_b, ib, 1j * nb, ZSET, zf)
    vs = seqnet.solve_network(kind, vg_a + vg_b, ia + ib, 1j * (na + nb), ZSET, zf)
    for s, p, q in zip(vs, va, vb):
        assert abs(s - (p + q)) < 1e-12


def test_network_response_matches_solver():
    resp = seqnet.network_response("DLG_BC", ZSET, ZF_BASE)
    args = (0.9 + 0.1j, 0.2 - 0.5j, 0.3j)
    assert np.allclose(resp.voltages(*args), seqnet.solve_network("DLG_BC", *args, ZSET, ZF_BASE), atol=1e-14)
    src, zth = resp.thevenin_pos(args[0], args[2])
    assert src + zth * args[1] == pytest.approx(resp.voltages(*args)[0], abs=1e-14)


def test_prefault_network_response():
    resp = seqnet.network_response(None, ZSET, 0.0)
    v = resp.voltages(1 + 0j, complex(1.0, -0.1), 0.5j)
    assert v[0] == seqnet.prefault_voltage_pos(1 + 0j, complex(1.0, -0.1), Z_GRID)
    assert v[1] == seqnet.prefault_voltage_neg(0.5, Z_GRID)


def test_monotone_sag_slg():
    mags = [
        abs(seqnet.solve_network("SLG_A", 1 + 0j, 0j, 0j, ZSET, zf)[0])
        for zf in np.geomspace(10.0, 1e-6, 60).tolist() + [0.0]
    ]
    assert all(b <= a + 1e-15 for a, b in zip(mags, mags[1:]))


def test_balanced_rejected_by_closed_form():
    with pytest.raises(UnsupportedKind):
        seqnet.postfault_voltage_pos("BALANCED_3PH", 1 + 0j, 0j, ZSET, 0.0)


def test_degenerate_denominator():
    zero = seqnet.SequenceImpedance(0.0, 0.0)
    zset = seqnet.SequenceImpedanceSet(zero, zero, zero)
    with pytest.raises(DivisionDegenerate):
        seqnet.postfault_voltage_pos("SLG_A", 1 + 0j, 0j, zset, 0.0)


def test_singular_network():
    zero = seqnet.SequenceImpedance(0.0, 0.0)
    zset = seqnet.SequenceImpedanceSet(zero, zero, zero)
    with pytest.raises(SingularNetwork):
        seqnet.solve_network("DL_BC", 1 + 0j, 0j, 0j, zset, 0.0)


def test_disagreement_regimes_flagged():
    zset = seqnet.SequenceImpedanceSet(
        seqnet.SequenceImpedance(0.0037, 0.06), seqnet.SequenceImpedance(0.005, 0.08), seqnet.SequenceImpedance(0.01, 0.2)
    )
    refs = CurrentRefs(0.1, -0.8, 0.2)
    dlg = seqnet.compare_closed_form("DLG_BC", 1 + 0j, refs, zset, ZF_BASE)
    dl = seqnet.compare_closed_form("DL_BC", 1 + 0j, refs, zset, ZF_BASE)
    assert not dlg.expected_exact and dlg.flagged and dlg.disagrees
    assert not dl.expected_exact and dl.flagged and dl.disagrees
    slg = seqnet.compare_closed_form("SLG_A", 1 + 0j, refs, zset, ZF_BASE)
    assert slg.expected_exact and not slg.flagged


def test_dl_exact_without_zero_sequence_branch():
    zset = seqnet.SequenceImpedanceSet(Z_GRID, Z_GRID, seqnet.SequenceImpedance(0.0, 0.0))
    chk = seqnet.compare_closed_form("DL_BC", 1 + 0j, CurrentRefs(0.1, -0.8, 0.2), zset, ZF_BASE)
    assert chk.expected_exact and chk.rel_error < 1e-12
