import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evload.analysis.simulate import simulate_charge, station_step
from evload.analysis.smallsignal import eigen_analysis, linearize, schur_reduce
from evload.analysis.stability import SweepResult, build_dae, eigen_at, stability_sweep
from evload.analysis.studies import default_sweep_grid, sweep_voltage_soc
from evload.analysis.transient import dominant_oscillation, integrate, load_step_events, matrix_pencil
from evload.detailed import DetailedEV
from evload.errors import DomainError, NumericalError, ValidationError
from evload.grid import FleetSpec, Representation


class SeriesCircuit:
    """Source V feeding R, L and optionally C in series; the inductor voltage is algebraic."""

    def __init__(self, R, L, C=None, V=1.0):
        self.R, self.L, self.C, self.V = R, L, C, V
        n = 1 if C is None else 2
        self.x0, self.y0 = np.zeros(n), np.array([V])

    def jacobians(self, x, y):
        if self.C is None:
            return np.zeros((1, 1)), np.array([[1 / self.L]]), np.array([[-self.R]]), np.array([[-1.0]])
        fx = np.array([[0.0, 0.0], [1 / self.C, 0.0]])
        fy = np.array([[1 / self.L], [0.0]])
        gx = np.array([[-self.R, -1.0]])
        return fx, fy, gx, np.array([[-1.0]])


def test_rl_eigenvalue():
    r = eigen_analysis(linearize(SeriesCircuit(2.0, 0.5)))
    assert r.sigma_M == pytest.approx(-4.0)


@settings(max_examples=30, deadline=None)
@given(R=st.floats(0.1, 10), L=st.floats(1e-3, 1), C=st.floats(1e-4, 1))
def test_rlc_pair(R, L, C):
    lam = eigen_analysis(linearize(SeriesCircuit(R, L, C))).eigenvalues
    expected = np.roots([1.0, R / L, 1 / (L * C)])
    np.testing.assert_allclose(np.sort_complex(lam), np.sort_complex(expected), rtol=1e-9)


def test_diagonal_and_similarity(rng):
    assert eigen_analysis(np.diag([-1.0, -2.0])).sigma_M == -1.0
    for _ in range(10):
        D = np.diag(-rng.uniform(0.1, 10, 6))
        S = rng.standard_normal((6, 6)) + 3 * np.eye(6)
        lam = eigen_analysis(S @ D @ np.linalg.inv(S)).eigenvalues
        np.testing.assert_allclose(np.sort(lam.real), np.sort(np.diag(D)), rtol=1e-8)


def test_degenerate_inputs():
    with pytest.raises(NumericalError):
        eigen_analysis(np.ones((2, 3)))
    with pytest.raises(NumericalError):
        schur_reduce(np.eye(1), np.eye(1), np.eye(1), np.zeros((1, 1)))


def test_eigen_result_invariant(rng):
    r = eigen_analysis(rng.standard_normal((8, 8)), [f"s{k}" for k in range(8)])
    assert r.sigma_M == np.max(r.eigenvalues.real) and len(r.dominant_state) == 8


# ------------------------------------------------------------- charge runs
@pytest.mark.parametrize("chem", ["LMO", "NCA"])
def test_charge_session_shape(chem):
    res = simulate_charge(DetailedEV(chem, "CCCV"), 0.05)
    ev = DetailedEV(chem, "CCCV")
    assert np.all(np.diff(res.soc) >= -1e-12)
    cv = res.phase == 1
    assert np.max(res.v_cell[cv]) <= ev.cell.v_th + 1e-3
    assert 0 < res.energy_gap < 0.05


def test_switch_time_is_step_size_independent():
    ev = DetailedEV("NMC", "CPCV")
    a = simulate_charge(ev, 0.2, rtol=1e-6)
    b = simulate_charge(ev, 0.2, rtol=1e-9, n_samples=500)
    assert abs(a.t_switch - b.t_switch) / b.t_switch < 1e-3


def test_charge_rejects_bad_soc():
    with pytest.raises(DomainError):
        simulate_charge(DetailedEV("LFP", "CCCV"), 1.0)


def test_step_record_is_settled_before_step():
    rec = station_step(DetailedEV("LFP", "CPCV"), 0.1, -0.03)
    pre = rec.t < 0.1
    assert np.ptp(rec.P[pre]) == 0.0 and rec.v[~pre][0] == pytest.approx(0.97)


# ----------------------------------------------------------------- sweeps
def test_sweep_dataset_and_domain():
    v, s = default_sweep_grid()
    ds = sweep_voltage_soc(DetailedEV("LFP", "CPCV"), v, s)
    assert not ds.failures and ds.p_norm.size == v.size * s.size
    with pytest.raises(DomainError):
        sweep_voltage_soc(DetailedEV("LFP", "CPCV"), [0.8], [0.5])


def test_sweep_result_threshold():
    lam = np.array([0.1, 0.2, 0.3])
    r = SweepResult(lam, np.array([-2.0, -1.0, 1.0]), Representation.DETAILED, 80.0)
    assert r.threshold() == pytest.approx(0.25)
    assert SweepResult(lam, np.array([-3.0, -2.0, -1.0]), Representation.DETAILED, 80.0).threshold() is None
    with pytest.raises(ValidationError):
        SweepResult(np.array([0.2, 0.1]), np.zeros(2), Representation.PQ, 1.0)


def test_sweep_records_failures(case):
    res = stability_sweep(case, [0.1, 0.2], FleetSpec("detailed", "LFP", "CPCV"), ki_values=(1000.0,))
    assert np.all(np.isfinite(res[1000.0].sigma_M))
    with pytest.raises(DomainError):
        stability_sweep(case, [-0.1], FleetSpec("pq"))


def test_dae_initial_point_is_consistent(case):
    dae = build_dae(case, 0.2, FleetSpec("detailed", "NCA", "CCCV"), 100.0)
    fmax, gmax = dae.consistency()
    assert fmax < 1e-6 and gmax < 1e-8


def test_below_threshold_is_stable(case):
    assert eigen_at(case, 0.14, FleetSpec("detailed", "LFP", "CPCV"), 1000.0).sigma_M < 0


# -------------------------------------------------------------- transients
def test_matrix_pencil_recovers_modes():
    t = np.arange(0, 20, 0.01)
    y = 0.7 * np.exp(-0.05 * t) * np.cos(2 * np.pi * 1.3 * t + 0.4) + 0.2 * np.exp(-0.8 * t) * np.cos(2 * np.pi * 0.4 * t)
    m = matrix_pencil(t, y, order=8)
    assert m[0].sigma == pytest.approx(-0.05, abs=1e-6) and m[0].freq_hz == pytest.approx(1.3, abs=1e-6)
    assert m[0].amplitude == pytest.approx(0.7, rel=1e-4)
    assert m[1].sigma == pytest.approx(-0.8, abs=1e-5) and m[1].freq_hz == pytest.approx(0.4, abs=1e-5)


def _pulse_runs(case, steps, t_end=10.0):
    bus = max(case.loads, key=lambda ld: ld.p_mw).bus
    grid = np.arange(0, t_end, 0.01)
    out = []
    for h in steps:
        dae = build_dae(case, 0.2, FleetSpec("pq"), 1000.0)
        r = integrate(dae, t_end, h, load_step_events(dae, bus), record_buses=[1])
        out.append(np.interp(grid, r.t, r.vm[:, 0]))
    return out


@pytest.fixture(scope="module")
def pulse_runs(case):
    return _pulse_runs(case, (0.01, 0.005, 0.0025))


def test_step_halving_changes_voltage_little(pulse_runs):
    coarse, fine, _ = pulse_runs
    assert np.max(np.abs(coarse - fine) / fine) < 1e-3


def test_integrator_is_second_order(pulse_runs):
    # differences of successive halvings shrink by about 2**2
    a, b, c = pulse_runs
    ratio = np.max(np.abs(a - b)) / np.max(np.abs(b - c))
    assert 3.0 < ratio < 5.0


def test_transient_envelope_matches_eigenvalue(case):
    spec = FleetSpec("detailed", "LFP", "CPCV")
    eig = eigen_at(case, 0.2, spec, 1000.0)
    dae = build_dae(case, 0.2, spec, 1000.0)
    bus = max(case.loads, key=lambda ld: ld.p_mw).bus
    res = integrate(dae, 60.0, 0.01, load_step_events(dae, bus), record_buses=[1])
    mode = dominant_oscillation(res, 1, 20.0)
    assert abs(mode.sigma - eig.sigma_M) <= 0.1 * abs(eig.sigma_M)
    assert mode.freq_hz == pytest.approx(abs(eig.critical.imag) / (2 * np.pi), rel=0.02)


def test_load_step_needs_a_load(case):
    with pytest.raises(DomainError):
        load_step_events(build_dae(case, 0.2, FleetSpec("pq"), 1000.0), 1)
