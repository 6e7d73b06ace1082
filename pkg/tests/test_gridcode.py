import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wtrom import seqnet
from wtrom.errors import NoConvergence, ValidationError
from wtrom.gridcode import CurrentRefs, GridCodeParams, fixed_point_references, lvrt_references, ramp_limited_id

ZSET = seqnet.SequenceImpedanceSet.symmetric(seqnet.SequenceImpedance(0.0037, 0.06))
ZF = 6.02e-4 / (690.0**2 / 12e6)


def brute_force_refs(v_pos, v_neg, k_pos, k_neg, db, qmax, imax, id_req):
    """Scalar restatement of the piecewise rules, written independently."""
    sag = max(0.0, (1.0 - v_pos) - db)
    unb = max(0.0, v_neg - db)
    want_pos = k_pos * sag
    want_neg = k_neg * unb
    mag_pos = want_pos if want_pos < qmax else qmax
    mag_neg = want_neg if want_neg < qmax - mag_pos else qmax - mag_pos
    left = imax - mag_neg
    cap = math.sqrt(left * left - mag_pos * mag_pos) if left * left > mag_pos * mag_pos else 0.0
    return (min(id_req, cap) if id_req >= 0 else max(id_req, -cap)), -mag_pos, mag_neg


def test_no_sag():
    r = lvrt_references(1.0, 0.0, GridCodeParams())
    assert (r.iq_pos, r.iq_neg) == (0.0, 0.0)
    assert r.id_pos == 1.0


def test_worked_example_k5():
    p = GridCodeParams(5.0, 5.0, 0.0, 1.0, 1.0)
    r = lvrt_references(0.8, 0.1, p, id_request=1.0)
    # sag 0.2 -> 1.0 pu positive-sequence demand fills the reactive limit
    assert (r.id_pos, r.iq_pos, r.iq_neg) == pytest.approx(brute_force_refs(0.8, 0.1, 5, 5, 0, 1, 1, 1.0))
    assert (r.id_pos, r.iq_pos, r.iq_neg) == pytest.approx((0.0, -1.0, 0.0), abs=1e-12)


def test_partial_sag_leaves_room_for_negative_sequence():
    p = GridCodeParams(2.0, 2.0, 0.0, 1.0, 1.0)
    r = lvrt_references(0.8, 0.1, p)
    assert r.iq_pos == pytest.approx(-0.4)
    assert r.iq_neg == pytest.approx(0.2)
    assert r.id_pos == pytest.approx(math.sqrt(0.8**2 - 0.4**2))


@pytest.mark.parametrize("v_neg", [0.2, 0.35, 1.0])
def test_deep_sag_saturates(v_neg):
    r = lvrt_references(0.0, v_neg, GridCodeParams(6.0, 6.0))
    assert abs(r.iq_pos) + abs(r.iq_neg) == 1.0


@settings(max_examples=500, deadline=None)
@given(
    v_pos=st.floats(0, 1.3),
    v_neg=st.floats(0, 0.8),
    k_pos=st.floats(2, 6),
    k_neg=st.floats(2, 6),
    db=st.floats(0, 0.2),
    qmax=st.floats(0.1, 1.0),
    extra=st.floats(0, 0.4),
    id_req=st.floats(0, 1.2),
)
def test_matches_brute_force(v_pos, v_neg, k_pos, k_neg, db, qmax, extra, id_req):
    p = GridCodeParams(k_pos, k_neg, db, qmax, qmax + extra)
    r = lvrt_references(v_pos, v_neg, p, id_req)
    want = brute_force_refs(v_pos, v_neg, k_pos, k_neg, db, qmax, qmax + extra, id_req)
    assert (r.id_pos, r.iq_pos, r.iq_neg) == pytest.approx(want, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(v=st.floats(0, 1.2), dv=st.floats(0, 0.5), k=st.floats(2, 6))
def test_monotone_in_sag(v, dv, k):
    p = GridCodeParams(k, k, 0.0, 10.0, 10.0)
    hi = lvrt_references(v, 0.0, p)
    lo = lvrt_references(max(0.0, v - dv), 0.0, p)
    assert abs(lo.iq_pos) >= abs(hi.iq_pos)
    a = lvrt_references(1.0, v, p)
    b = lvrt_references(1.0, v + dv, p)
    assert b.iq_neg >= a.iq_neg


@settings(max_examples=200, deadline=None)
@given(db=st.floats(0, 0.2), frac=st.floats(0, 0.99))
def test_deadband_zero_increment(db, frac):
    p = GridCodeParams(4.0, 4.0, db)
    r = lvrt_references(1.0 - frac * db, frac * db, p, iq_pre=-0.1)
    assert r.iq_pos == -0.1
    assert r.iq_neg == 0.0


def test_pure_function():
    p = GridCodeParams(3.0, 2.5, 0.05)
    assert lvrt_references(0.6, 0.2, p) == lvrt_references(0.6, 0.2, p)


def test_params_validation(caplog):
    with pytest.raises(ValidationError):
        GridCodeParams(iq_total_max=1.2, i_total_max=1.0)
    with pytest.raises(ValidationError):
        GridCodeParams(deadband=0.3)
    with pytest.raises(ValidationError):
        GridCodeParams(k_pos=-1)
    with caplog.at_level("WARNING"):
        GridCodeParams(k_pos=8.0)
    assert "outside" in caplog.text


def test_negative_magnitude_rejected():
    with pytest.raises(ValidationError):
        lvrt_references(-0.1, 0.0, GridCodeParams())


def test_ramp_limited_id():
    assert ramp_limited_id(0.5, 0.5, 1.0, 0.2, 2.0) == 0.2
    assert ramp_limited_id(0.6, 0.5, 1.0, 0.2, math.inf) == 1.0
    assert ramp_limited_id(0.75, 0.5, 1.0, 0.0, 2.0) == 0.5
    assert ramp_limited_id(5.0, 0.5, 1.0, 0.0, 2.0) == 1.0


def test_fixed_point_no_sag_one_iteration():
    pre = CurrentRefs(1.0, -0.1, 0.0)
    p = GridCodeParams(i_total_max=1.2, iq_total_max=1.0)
    res = fixed_point_references(None, 1 + 0j, ZSET, 0.0, p, pre, id_request=1.0, iq_pre=-0.1)
    assert res.iterations == 1
    assert res.refs == pre


def test_fixed_point_gains_disabled_keeps_stated_currents():
    refs = CurrentRefs(0.0, -0.625, 0.5)
    res = fixed_point_references("SLG_A", 1 + 0j, ZSET, ZF, None, refs)
    assert res.refs == refs
    assert res.iterations == 1
    v1, v2, _ = seqnet.solve_coupled_network("SLG_A", 1 + 0j, refs, ZSET, ZF)
    assert (res.v_pos, res.v_neg) == pytest.approx((v1, v2), rel=1e-14)


def test_fixed_point_residual_decreases():
    rng = np.random.default_rng(11)
    for _ in range(20):
        z = seqnet.SequenceImpedance(rng.uniform(0, 0.02), rng.uniform(0.05, 0.2))
        zset = seqnet.SequenceImpedanceSet.symmetric(z)
        kind = rng.choice(["SLG_A", "DLG_BC", "DL_BC"])
        res = fixed_point_references(
            kind, 1 + 0j, zset, rng.uniform(0.005, 0.2), GridCodeParams(2.0, 2.0), CurrentRefs(1.0, -0.1, 0.0)
        )
        r = res.residuals[2:]
        assert all(b <= a for a, b in zip(r, r[1:])), res.residuals


def test_fixed_point_no_convergence():
    with pytest.raises(NoConvergence) as exc:
        fixed_point_references("SLG_A", 1 + 0j, ZSET, 0.0, GridCodeParams(6.0, 6.0), CurrentRefs(1.0, 0.0), max_iter=1)
    assert exc.value.max_iter == 1


def test_fixed_point_arguments_validated():
    with pytest.raises(ValidationError):
        fixed_point_references("SLG_A", 1 + 0j, ZSET, ZF, None, CurrentRefs(0, 0), tol=0.0)
