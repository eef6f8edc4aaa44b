import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evload.control import (
    DUTY_LIMITS,
    ChargingMode,
    ControlBases,
    ControlGains,
    ControlRefs,
    Mode,
    Phase,
    PiParams,
    PiState,
    acdc_current_loop,
    acdc_outer_loops,
    charge_mode_logic,
    dcdc_power_loop,
    pi_step,
)
from evload.battery import reference_pack
from evload.errors import ValidationError
from evload.station import StationParams

PACK, CELL, _ = reference_pack("LFP")
REFS = ControlRefs.for_pack(PACK, CELL)
BASES = ControlBases.from_ratings(StationParams(), REFS)
GAINS = ControlGains()


def test_pi_zero_error_zero_output():
    out, st_ = pi_step(PiParams(1.0, 1.0), PiState(), 0.0, 0.01)
    assert out == 0.0 and st_.integral == 0.0


def test_pure_integrator_ramp():
    p, s = PiParams(0.0, 33.0), PiState()
    e, dt, n = 0.2, 1e-3, 500
    for _ in range(n):
        out, s = pi_step(p, s, e, dt)
    assert out == pytest.approx(33.0 * e * n * dt)


def test_anti_windup_freezes_integral():
    s = PiState(integral=10.0, limits=(0.0, 1.0))
    out, s2 = pi_step(PiParams(0.1, 1.0), s, 0.5, 0.01)
    assert out == 1.0 and s2.integral == 10.0
    out, s3 = pi_step(PiParams(0.1, 1.0), s, -0.5, 0.01)  # error pulling back is integrated
    assert s3.integral < 10.0


@settings(max_examples=100, deadline=None)
@given(e=st.lists(st.floats(-5, 5), min_size=1, max_size=40), kp=st.floats(0, 2), ki=st.floats(0, 100))
def test_clamped_output_stays_in_limits(e, kp, ki):
    s = PiState(limits=DUTY_LIMITS)
    for err in e:
        out, s = pi_step(PiParams(kp, ki), s, err, 1e-2)
        assert DUTY_LIMITS[0] <= out <= DUTY_LIMITS[1]


def test_negative_gain_rejected():
    with pytest.raises(ValidationError):
        PiParams(-1.0, 0.0)


def test_outer_loops_signs():
    z = (PiState(), PiState())
    (i_d, i_q), _ = acdc_outer_loops((REFS.v_dc_ref, 0.0), REFS, *z, 1e-4, BASES, GAINS)
    assert (i_d, i_q) == (0.0, 0.0)
    (i_d, _), _ = acdc_outer_loops((REFS.v_dc_ref - 5.0, 0.0), REFS, *z, 1e-4, BASES, GAINS)
    assert i_d > 0


def test_current_loop_feedforward():
    p = StationParams()
    (e_d, e_q), _ = acdc_current_loop((70.0, 5.0), (70.0, 5.0), (230.0, 0.0), p, (PiState(), PiState()), 1e-4, BASES, GAINS)
    wL = p.omega * p.L_F
    assert e_d == pytest.approx(230.0 + wL * 5.0)
    assert e_q == pytest.approx(-wL * 70.0)


def test_charge_mode_logic():
    m = ChargingMode(Mode.CPCV)
    assert charge_mode_logic(m, CELL.v_th - 0.1, CELL.v_th, REFS, 380.0) == pytest.approx(50_000.0)
    m = ChargingMode(Mode.CCCV)
    i_ref = REFS.P_batt_ref / REFS.v_batt_ref
    assert charge_mode_logic(m, CELL.v_th - 0.1, CELL.v_th, REFS, 380.0) == pytest.approx(380.0 * i_ref)
    charge_mode_logic(m, CELL.v_th, CELL.v_th, REFS, 380.0)
    assert m.phase is Phase.CV
    charge_mode_logic(m, CELL.v_th - 1.0, CELL.v_th, REFS, 380.0)
    assert m.phase is Phase.CV  # latched


def test_dcdc_loop():
    st0 = PiState(integral=0.5 / GAINS.power.k_i)
    d0, _ = dcdc_power_loop(50_000.0, 50_000.0, st0, 1e-4, BASES, GAINS)
    assert d0 == pytest.approx(0.5)
    d1, _ = dcdc_power_loop(55_000.0, 50_000.0, st0, 1e-4, BASES, GAINS)
    assert d1 > d0


def test_refs_from_table_values():
    assert REFS.v_batt_ref == pytest.approx(125 * 3.488)
    assert REFS.i_batt_ref == pytest.approx(50_000.0 / REFS.v_batt_ref)
    assert GAINS.vdc.k_i == 1000.0 and GAINS.with_ki_pi1(80).vdc == PiParams(0.01, 80.0)
    assert np.isclose(GAINS.current.k_p, 0.142) and np.isclose(GAINS.q.k_i, 33.0)
