import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evload.errors import CaseFormatError, SingularityError, ValidationError
from evload.loadmodels import (
    EvStaticParams,
    ExpParams,
    RationalTF,
    VflmParams,
    ZipParams,
    ev_soc_term,
    ev_static_power,
    exp_power,
    model_from_dict,
    model_to_dict,
    read_model_file,
    realize_tf,
    vflm_power,
    write_model_file,
    zip_power,
)
from helpers import random_stable_tf

V = 230.0


def test_zip_cases():
    assert zip_power(ZipParams(1e3, V, 1, 0, 0), 0.7 * V) == pytest.approx(1e3)
    assert zip_power(ZipParams(1e3, V, 0.2, 0.3, 0.5), V) == pytest.approx(1e3)
    assert zip_power(ZipParams(1e3, V, 0.2, 0.3, 0.5), 1.1 * V) == pytest.approx(1135.0)


def test_exp_cases():
    assert exp_power(ExpParams(1e3, V, 1, 0, -2), 0.8 * V) == pytest.approx(1e3)
    assert exp_power(ExpParams(1e3, V, 0.7, 0.4, 1.3), V) == pytest.approx(1.1e3)
    assert exp_power(ExpParams(1.0, V, 1.0, 0.001, -2.0), 0.9 * V) == pytest.approx(1.0012346, rel=1e-7)
    with pytest.raises(SingularityError):
        exp_power(ExpParams(1.0, V, 1.0, 0.001, -2.0), 0.0)


LFP_ROW = dict(b_p=0.001, n_p=-2.0, c_p=0.90, d_p=0.003, e_p=0.09, f_p=0.34)


def test_ev_static_table_row():
    # soc part: c - d (1-s)/s + e exp(-f (1-s)...) evaluated at s = 0.5
    p = EvStaticParams(50e3, V, **LFP_ROW)
    val = ev_static_power(p, V, 0.5) / 50e3
    assert val == pytest.approx(0.001 + 0.90 - 0.003 + 0.09 * np.exp(-0.17), abs=1e-12)


def test_ev_static_degenerate_and_full_soc():
    p = EvStaticParams(50e3, V, 0.0, -2.0, 0.95, 0.0, 0.0, 1.0)
    assert ev_static_power(p, 0.9 * V, 0.3) == pytest.approx(0.95 * 50e3)
    q = EvStaticParams(50e3, V, **LFP_ROW)
    assert ev_soc_term(*q.soc_part, 1.0) == pytest.approx(0.90 + 0.09)
    with pytest.raises(SingularityError):
        ev_static_power(q, V, 0.0)


@settings(max_examples=60, deadline=None)
@given(c=st.floats(0.5, 1.5), b=st.floats(-0.1, 0.1), n=st.floats(-3, 3), r=st.floats(0.8, 1.2), s=st.floats(0.05, 1.0))
def test_ev_static_reduces_to_exp(c, b, n, r, s):
    ev = EvStaticParams(1e3, V, b, n, c, 0.0, 0.0, 1.0)
    ex = ExpParams(1e3, V, c, b, n)
    assert ev_static_power(ev, r * V, s) == pytest.approx(exp_power(ex, r * V), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(s1=st.floats(0.05, 0.95), ds=st.floats(1e-3, 0.04), r=st.floats(0.85, 1.15))
def test_ev_static_monotone_in_soc(s1, ds, r):
    p = EvStaticParams(50e3, V, **LFP_ROW)
    assert ev_static_power(p, r * V, s1 + ds) > ev_static_power(p, r * V, s1)


@settings(max_examples=60, deadline=None)
@given(r1=st.floats(0.85, 1.14), dr=st.floats(1e-3, 0.05), s=st.floats(0.1, 0.9))
def test_ev_static_decreasing_in_voltage(r1, dr, s):
    p = EvStaticParams(50e3, V, **LFP_ROW)
    assert ev_static_power(p, (r1 + dr) * V, s) < ev_static_power(p, r1 * V, s)


def test_realize_first_order_lag_step():
    ss = realize_tf(RationalTF(np.array([-1.0 + 0j]), np.array([1.0 + 0j])))
    m = VflmParams(0.0, 1.0, RationalTF(np.array([-1.0 + 0j]), np.array([1.0 + 0j])), 1.0, 1.0)
    t = np.linspace(0, 6, 6001)
    # with N_t = 0, N_s = 1 a tiny step gives P - 1 ~ dv (1 - e^-t); the input
    # is interpolated linearly, so the step is a one-sample ramp
    v = np.where(t > 0, 1.001, 1.0)
    P = vflm_power(m, t, v)
    np.testing.assert_allclose((P[1:] - 1.0) / 0.001, 1 - np.exp(-t[1:]), atol=2e-3)
    assert ss.A.shape == (1, 1)


def test_pair_impulse_oscillates_at_imag_part():
    tf = RationalTF(np.array([-0.5 + 4j, -0.5 - 4j]), np.array([1 - 0.5j, 1 + 0.5j]))
    ss = realize_tf(tf)
    assert np.allclose(sorted(np.linalg.eigvals(ss.A).imag), [-4, 4])


def test_realization_frequency_response(rng):
    for order in range(1, 7):
        tf = random_stable_tf(rng, order)
        s = 1j * np.logspace(-1, 4, 50)
        np.testing.assert_allclose(realize_tf(tf).freqresp(s), tf(s), rtol=1e-10)


def test_broken_symmetry_rejected():
    with pytest.raises(ValidationError):
        RationalTF(np.array([-1 + 2j]), np.array([1 + 0j]))
    with pytest.raises(ValidationError):
        RationalTF(np.array([-1.0 + 0j]), np.array([1 + 1j]))


def test_unstable_vflm_rejected():
    with pytest.raises(ValidationError):
        VflmParams(1.0, -1.0, RationalTF(np.array([0.5 + 0j]), np.array([1.0 + 0j])), 1.0, 1.0)


def test_vflm_step_final_value():
    G = RationalTF(np.array([-3.0 + 0j, -1 + 5j, -1 - 5j]), np.array([1.0 + 0j, 0.4 + 0.1j, 0.4 - 0.1j]))
    G = RationalTF(G.poles, G.residues / G.dc_gain())
    m = VflmParams(1.5, -1.0, G, 5e4, 1.0)
    t = np.linspace(0, 20, 4001)
    v = np.where(t >= 1.0, 0.97, 1.0)
    P = vflm_power(m, t, v)
    assert P[-1] == pytest.approx(5e4 * 0.97 ** -1.0, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), order=st.integers(1, 4), N_t=st.floats(-2, 2), N_s=st.floats(-2, 2))
def test_vflm_constant_input_and_bibo(seed, order, N_t, N_s):
    G = random_stable_tf(np.random.default_rng(seed), order)
    m = VflmParams(N_t, N_s, G, 1.0, 1.0)
    t = np.linspace(0, 5, 501)
    np.testing.assert_allclose(vflm_power(m, t, np.ones_like(t)), 1.0, rtol=1e-12)
    v = 1.0 + 0.05 * np.sin(7 * t) * np.cos(0.3 * t)
    P = vflm_power(m, t, v)
    bound = 2 * (np.sum(np.abs(G.residues) / np.abs(G.poles.real)) * 0.2 + 1.2)
    assert np.all(np.isfinite(P)) and np.max(np.abs(P)) < bound


def test_model_file_round_trip(tmp_path, rng):
    for model in (ZipParams(1, V, 0.2, 0.3, 0.5), ExpParams(1, V, 1, 0.001, -2), EvStaticParams(5e4, V, **LFP_ROW),
                  VflmParams(1.1, -0.1, random_stable_tf(rng, 3), 5e4, 1.0)):
        write_model_file(model, tmp_path / "m.json", {"note": "x"})
        back = read_model_file(tmp_path / "m.json")
        assert model_to_dict(back) == model_to_dict(model)
    with pytest.raises(CaseFormatError):
        model_from_dict({"kind": "nope", "params": {}})
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(CaseFormatError):
        read_model_file(tmp_path / "bad.json")
    assert json.loads((tmp_path / "m.json").read_text())["meta"] == {"note": "x"}
