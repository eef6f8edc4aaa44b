import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evload.errors import DomainError, NumericalError
from evload.station import (
    POWER_SCALE,
    AcPort,
    StationParams,
    StationState,
    ac_power,
    converter_power,
    dc_link_dynamics,
    dcdc_average_dynamics,
    filter_dynamics,
    filter_loss,
    fleet_injection,
    port_from_state,
    set_tap,
    terminal_voltage,
)

P = StationParams()


def test_filter_equilibrium_without_current():
    s = StationState(i_d=0.0, i_q=0.0, e_d=230.0, e_q=0.0)
    assert np.allclose(filter_dynamics(s, AcPort(230.0), P), 0.0)


def test_filter_steady_state_drop():
    i_d = 70.0
    s = StationState(i_d=i_d, i_q=0.0, e_d=230.0 - P.R_F * i_d, e_q=-P.omega * P.L_F * i_d)
    assert np.allclose(filter_dynamics(s, AcPort(230.0), P), 0.0, atol=1e-9)


def test_filter_time_constant():
    # With the cross-coupling cancelled, di/dt = -(R/L) i + de/L.
    s0 = StationState(i_d=0.0, i_q=0.0, e_d=230.0, e_q=0.0)
    s1 = StationState(i_d=1.0, i_q=0.0, e_d=230.0, e_q=-P.omega * P.L_F)
    d0 = filter_dynamics(s0, AcPort(230.0), P)[0]
    d1 = filter_dynamics(s1, AcPort(230.0), P)[0]
    assert d1 - d0 == pytest.approx(-P.R_F / P.L_F)


def test_dc_link_balance():
    s = StationState(v_dc=800.0)
    assert dc_link_dynamics(s, P, 40_000.0, 50.0) == pytest.approx(0.0)
    assert dc_link_dynamics(s, P, 0.0, 0.0) == pytest.approx(0.0)
    slope = dc_link_dynamics(s, P, 41_000.0, 50.0)
    assert slope == pytest.approx(1000.0 / (800.0 * P.C_DC1))


def test_dc_link_guard():
    with pytest.raises(NumericalError):
        dc_link_dynamics(StationState(v_dc=0.0), P, 1.0, 0.0)


def test_dcdc_equilibrium_and_lossless():
    s = StationState(v_dc=800.0, v_dc2=400.0, i_L=125.0, delta=0.5)
    assert np.allclose(dcdc_average_dynamics(s, P, 125.0), 0.0)
    assert 800.0 * (s.delta * s.i_L) == pytest.approx(s.v_dc2 * s.i_L)


def test_fleet_injection_scaling():
    assert fleet_injection((10.0, 0.0), 1) == pytest.approx((10.0, 0.0))
    assert fleet_injection((10.0, 0.0), 2) == pytest.approx((20.0, 0.0))


def _equilibrium_emf(i_d, i_q, v=230.0):
    """Converter voltage (e_d, e_q) that makes the filter derivatives vanish (the map is affine in e)."""
    port = AcPort(v)
    f = lambda e: np.asarray(filter_dynamics(StationState(i_d=i_d, i_q=i_q, e_d=e[0], e_q=e[1]), port, P))  # noqa: E731
    f0 = f((0.0, 0.0))
    J = np.column_stack([f((1.0, 0.0)) - f0, f((0.0, 1.0)) - f0])
    return np.linalg.solve(J, -f0)


@settings(max_examples=50, deadline=None)
@given(i_d=st.floats(-300, 300), i_q=st.floats(-300, 300))
def test_filter_is_the_only_ac_loss(i_d, i_q):
    e_d, e_q = _equilibrium_emf(i_d, i_q)
    s = StationState(i_d=i_d, i_q=i_q, e_d=e_d, e_q=e_q)
    port = port_from_state(s, 230.0)
    assert port.P_ev - converter_power(s) == pytest.approx(filter_loss(s, P), abs=1e-6)
    assert filter_loss(s, P) == pytest.approx(POWER_SCALE * P.R_F * (i_d**2 + i_q**2))


def test_ac_power_convention():
    assert ac_power(230.0, 0.0, 10.0, 0.0)[0] == pytest.approx(3 * 230.0 * 10.0)


def test_tap():
    assert terminal_voltage(set_tap(P, 1.0), 1.0) == pytest.approx(230.0)
    assert terminal_voltage(set_tap(P, 0.97), 1.0) == pytest.approx(0.97 * 230.0)
    taps = np.linspace(0.9, 1.1, 11)
    ratios = [terminal_voltage(set_tap(P, t), 1.0) / P.v_c_nom for t in taps]
    np.testing.assert_allclose(ratios, taps)
    with pytest.raises(DomainError):
        set_tap(P, 0.0)
    assert math.isclose(P.omega, 2 * math.pi * 50)
