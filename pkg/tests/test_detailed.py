import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from evload.control import ControlGains, Phase
from evload.detailed import IDX, DetailedEV
from evload.errors import DomainError

CHEMS = ["LFP", "LMO", "NCA", "NMC"]


@pytest.mark.parametrize("chem", CHEMS)
@pytest.mark.parametrize("mode", ["CCCV", "CPCV"])
@pytest.mark.parametrize("soc", [0.1, 0.5, 0.97])
def test_closed_loop_steady_state_targets(chem, mode, soc):
    ev = DetailedEV(chem, mode)
    x, phase = ev.steady_state(1.0, soc)
    assert np.max(np.abs(ev.rhs(x, 1.0, phase, soc_dynamic=False))) < 1e-6
    out = ev.outputs(x, 1.0, phase)
    assert out["v_dc"] == pytest.approx(ev.refs.v_dc_ref, rel=1e-9)
    assert abs(out["Q_ev"]) < 1e-3 * ev.station.P_ev_nom
    if phase is Phase.CV:
        assert out["v_batt"] == pytest.approx(ev.refs.v_batt_ref, rel=1e-6)
    elif mode == "CCCV":
        assert out["i_batt"] == pytest.approx(ev.refs.i_batt_ref, rel=1e-6)
    else:
        assert out["P_batt"] == pytest.approx(ev.refs.P_batt_ref, rel=1e-6)
    # lossless DC side: battery power equals DC-link power into the DC/DC stage
    assert out["P_ev"] > out["P_batt"]


@settings(max_examples=15, deadline=None)
@given(vm=st.floats(0.9, 1.1), soc=st.floats(0.1, 0.9), chem=st.sampled_from(CHEMS), mode=st.sampled_from(["CCCV", "CPCV"]))
def test_analytic_jacobian_matches_finite_differences(vm, soc, chem, mode):
    ev = DetailedEV(chem, mode)
    # the OCV interpolant is only C1 at its knots; keep the difference stencil off them
    assume(np.min(np.abs(ev.curve.soc - soc)) > 1e-4)
    x, phase = ev.steady_state(vm, soc)
    rng = np.random.default_rng(0)
    x = x * (1 + 0.01 * rng.standard_normal(x.size))  # off-equilibrium point
    x[IDX["soc"]] = soc
    Jx, Ju = ev.jacobian(x, vm, phase)
    Jfd = np.zeros_like(Jx)
    for k in range(x.size):
        h = 1e-6 * max(1.0, abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        Jfd[:, k] = (ev.rhs(xp, vm, phase) - ev.rhs(xm, vm, phase)) / (2 * h)
    scale = np.maximum(np.maximum(np.abs(Jfd), 1e-3 * np.max(np.abs(Jfd), axis=1, keepdims=True)), 1e-9)
    assert np.max(np.abs(Jx - Jfd) / scale) < 1e-5
    hu = 1e-7
    Jufd = (ev.rhs(x, vm + hu, phase) - ev.rhs(x, vm - hu, phase)) / (2 * hu)
    np.testing.assert_allclose(Ju, Jufd, rtol=1e-5, atol=1e-6 * np.max(np.abs(Jufd)))


@pytest.mark.parametrize("ki", [80.0, 100.0, 1000.0])
@pytest.mark.parametrize("mode", ["CCCV", "CPCV"])
def test_isolated_station_is_stable(ki, mode):
    ev = DetailedEV("LFP", mode, gains=ControlGains().with_ki_pi1(ki))
    A, *_ = ev.linear_model(1.0, 0.1)
    assert np.max(np.linalg.eigvals(A).real) < 0


def test_cpcv_power_is_soc_independent():
    ev = DetailedEV("NMC", "CPCV")
    p = [ev.power_at(1.0, s)[0] for s in (0.1, 0.5, 0.9)]
    assert np.ptp(p) / ev.station.P_ev_nom < 1e-3


def test_rejects_bad_inputs():
    ev = DetailedEV("LFP", "CCCV")
    with pytest.raises(DomainError):
        ev.steady_state(1.0, 0.0)
    with pytest.raises(DomainError):
        ev.steady_state(-1.0, 0.5)
