import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from evload.battery import (
    AnalyticalOcvParams,
    CellParams,
    Chemistry,
    OcvCurve,
    cell_terminal_voltage,
    clamp_soc,
    ocv_analytical,
    ocv_lookup,
    pack_one_c_current,
    read_ocv_file,
    reference_pack,
    size_pack,
    soc_derivative,
    write_ocv_file,
)
from evload.errors import DomainError, SingularityError

CHEMS = list(Chemistry)


@pytest.mark.parametrize("chem", CHEMS)
def test_knots_are_reproduced_exactly(chem):
    _, _, curve = reference_pack(chem)
    assert len(curve.soc) >= 20
    np.testing.assert_allclose(ocv_lookup(curve, curve.soc), curve.v_ocv, rtol=0, atol=1e-12)


@pytest.mark.parametrize("chem", CHEMS)
def test_midpoints_are_bracketed(chem):
    _, _, curve = reference_pack(chem)
    mid = 0.5 * (curve.soc[1:] + curve.soc[:-1])
    v = ocv_lookup(curve, mid)
    assert np.all(v >= curve.v_ocv[:-1] - 1e-12) and np.all(v <= curve.v_ocv[1:] + 1e-12)


@pytest.mark.parametrize("chem", CHEMS)
def test_dense_scan_is_monotone(chem):
    _, _, curve = reference_pack(chem)
    v = ocv_lookup(curve, np.linspace(0.0, 1.0, 10_000))
    assert np.all(np.diff(v) >= 0)


@pytest.mark.parametrize("soc", [-0.01, 1.01, float("nan")])
def test_lookup_rejects_out_of_range(soc):
    _, _, curve = reference_pack("LFP")
    with pytest.raises(DomainError):
        ocv_lookup(curve, soc)


def test_analytical_degenerate_and_endpoint():
    assert ocv_analytical(AnalyticalOcvParams(3.4, 0.0, 0.0, 2.6), 0.37) == pytest.approx(3.4)
    p = AnalyticalOcvParams(3.3, 0.01, 0.05, 2.6)
    assert ocv_analytical(p, 1.0) == pytest.approx(3.35)
    with pytest.raises(SingularityError):
        ocv_analytical(p, 0.0)


@pytest.mark.parametrize("chem", CHEMS)
def test_analytical_fit_within_reported_tolerance(chem):
    _, _, curve = reference_pack(chem)
    s = np.linspace(0.1, 0.9, 200)
    err = np.max(np.abs(ocv_analytical(curve.analytical, s) - ocv_lookup(curve, s)))
    assert err <= curve.analytical_max_error + 1e-9


def test_terminal_voltage_cases():
    _, cell, curve = reference_pack("LFP")
    v0 = ocv_lookup(curve, 0.4)
    assert cell_terminal_voltage(curve, cell.R_cell, 0.4, 0.0) == pytest.approx(v0)
    assert cell_terminal_voltage(curve, 0.053, 0.4, 10.0) == pytest.approx(v0 + 0.53)
    assert cell_terminal_voltage(curve, cell.R_cell, 0.4, -2.0) < v0


@settings(max_examples=60, deadline=None)
@given(soc=st.floats(0, 1), r=st.floats(1e-4, 0.2), i1=st.floats(-50, 50), i2=st.floats(-50, 50))
def test_terminal_voltage_is_affine_in_current(soc, r, i1, i2):
    _, _, curve = reference_pack("NMC")
    v1 = cell_terminal_voltage(curve, r, soc, i1)
    v2 = cell_terminal_voltage(curve, r, soc, i2)
    assert v2 - v1 == pytest.approx(r * (i2 - i1), abs=1e-9)


def test_soc_derivative_one_c():
    pack, cell, _ = reference_pack("LFP")
    assert (pack.n_par, cell.Q_cell) == (72, 2.6)
    assert soc_derivative(pack, cell, 0.0) == 0.0
    assert pack_one_c_current(pack, cell) == pytest.approx(187.2)
    assert soc_derivative(pack, cell, 187.2) == pytest.approx(1 / 3600)


@settings(max_examples=25, deadline=None)
@given(current=st.floats(1.0, 400.0), T=st.floats(10.0, 3000.0))
def test_coulomb_counting_conserves_charge(current, T):
    pack, cell, _ = reference_pack("NCA")
    sol = solve_ivp(lambda t, s: [soc_derivative(pack, cell, current)], (0, T), [0.0], rtol=1e-10, atol=1e-12)
    assert sol.y[0, -1] == pytest.approx(current * T / (3600 * pack.n_par * cell.Q_cell), rel=1e-8)


@pytest.mark.parametrize(
    "chem,v_nom,Q,expected",
    [("LFP", 3.2, 2.6, (125, 72)), ("LMO", 3.7, 2.6, (108, 72)), ("NCA", 3.6, 3.2, (111, 59)), ("NMC", 3.6, 2.0, (111, 94))],
)
def test_size_pack_hand_rounding(chem, v_nom, Q, expected):
    cell = CellParams(v_nom, Q, 0.05, 4.0)
    pack = size_pack(Chemistry.parse(chem), cell, 400.0, 75_000.0)
    assert (pack.n_ser, pack.n_par) == expected == (round(400 / v_nom), round(75_000 / (400 * Q)))


def test_unit_pack():
    cell = CellParams(3.2, 2.6, 0.05, 3.5)
    pack = size_pack(Chemistry.LFP, cell, 3.2, 3.2 * 2.6)
    assert (pack.n_ser, pack.n_par) == (1, 1)


def test_clamp_flags_bounds():
    assert clamp_soc(0.5) == (0.5, False)
    assert clamp_soc(1.2) == (1.0, True)
    assert clamp_soc(-1e-3) == (0.0, True)


def test_ocv_file_round_trip(tmp_path):
    _, _, curve = reference_pack("LMO")
    write_ocv_file(curve, tmp_path / "x.csv")
    back = read_ocv_file(tmp_path / "x.csv")
    np.testing.assert_array_equal(back.soc, curve.soc)
    np.testing.assert_array_equal(back.v_ocv, curve.v_ocv)
    assert isinstance(back, OcvCurve)
