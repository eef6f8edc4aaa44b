"""Identification: vector fitting, VFLM extraction and static-model least squares."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .errors import DomainError, NumericalError, ValidationError
from .loadmodels import EvStaticParams, ExpParams, RationalTF, VflmParams, ev_soc_term, vflm_power

# ------------------------------------------------------------------- types


@dataclass(frozen=True, eq=False)
class FreqResponse:
    omega: np.ndarray  # rad/s
    values: np.ndarray  # complex, dimensionless

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        h = np.asarray(self.values, dtype=complex)
        if w.ndim != 1 or w.shape != h.shape:
            raise ValidationError("omega and values must be 1-D arrays of equal length")
        if np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise ValidationError("omega must be positive and strictly increasing")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "values", h)

    def __len__(self):
        return self.omega.size


class Weighting(str, enum.Enum):
    UNIFORM = "uniform"
    INVERSE_MAGNITUDE = "inverse-magnitude"


@dataclass(frozen=True)
class VfConfig:
    order: int
    max_iterations: int = 50
    initial_poles: tuple | None = None
    weighting: Weighting = Weighting.UNIFORM
    tol: float = 1e-6
    fit_constant: bool = False

    def __post_init__(self):
        if self.order < 1 or self.max_iterations < 1:
            raise ValidationError("order and max_iterations must be positive")
        if self.initial_poles is not None and len(self.initial_poles) != self.order:
            raise ValidationError("initial pole count must equal the order")
        object.__setattr__(self, "weighting", Weighting(self.weighting))


@dataclass
class FitReport:
    rmse: float
    iterations: int
    converged: bool
    residual_history: list = field(default_factory=list)
    rank_deficient: bool = False
    message: str = ""


# -------------------------------------------------------------- vector fit


def initial_poles(order: int, w_min: float, w_max: float) -> np.ndarray:
    """Conjugate pairs with log-spaced imaginary parts and Re = -Im/100; one real pole if odd."""
    n_pairs = order // 2
    poles = []
    if n_pairs:
        for b in np.logspace(math.log10(w_min), math.log10(w_max), n_pairs):
            poles += [complex(-b / 100, b), complex(-b / 100, -b)]
    if order % 2:
        poles.append(complex(-math.sqrt(w_min * w_max), 0.0))
    return np.array(poles)


def _groups(poles, scale):
    """Split into real poles and upper-half-plane representatives of pairs."""
    out = []
    for a in poles:
        if abs(a.imag) <= 1e-9 * scale:
            out.append((complex(a.real, 0.0), False))
        elif a.imag > 0:
            out.append((a, True))
    return out


def _basis(s, groups):
    """Real-coefficient basis columns (complex-valued) for the pole set."""
    cols = []
    for a, pair in groups:
        if pair:
            cols.append(1.0 / (s - a) + 1.0 / (s - np.conj(a)))
            cols.append(1j / (s - a) - 1j / (s - np.conj(a)))
        else:
            cols.append(1.0 / (s - a))
    return np.column_stack(cols) if cols else np.zeros((s.size, 0), dtype=complex)


def _realization(groups):
    n = sum(2 if pair else 1 for _, pair in groups)
    A = np.zeros((n, n))
    b = np.zeros(n)
    k = 0
    for a, pair in groups:
        if pair:
            A[k : k + 2, k : k + 2] = [[a.real, a.imag], [-a.imag, a.real]]
            b[k] = 2.0
            k += 2
        else:
            A[k, k] = a.real
            b[k] = 1.0
            k += 1
    return A, b


def _weights(f, weighting):
    if weighting is Weighting.INVERSE_MAGNITUDE:
        return 1.0 / np.maximum(np.abs(f), 1e-12 * np.max(np.abs(f)))
    return np.ones(f.size)


def _lstsq(M, rhs):
    """Column-scaled real least squares; raises on numerical rank loss."""
    norms = np.linalg.norm(M, axis=0)
    norms[norms == 0] = 1.0
    Ms = M / norms
    x, _, rank, sv = np.linalg.lstsq(Ms, rhs, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv.size and sv[-1] > 0 else math.inf
    if rank < Ms.shape[1] or cond > 1e15:
        raise NumericalError(f"vector-fitting system is ill-conditioned (cond ~ {cond:.3g})", condition=cond)
    return x / norms


def _stack(c):
    return np.concatenate([c.real, c.imag])


def _coeffs_to_residues(groups, x):
    poles, residues = [], []
    k = 0
    for a, pair in groups:
        if pair:
            c = complex(x[k], x[k + 1])
            poles += [a, np.conj(a)]
            residues += [c, np.conj(c)]
            k += 2
        else:
            poles.append(a)
            residues.append(complex(x[k], 0.0))
            k += 1
    return np.array(poles), np.array(residues)


def _sort_poles(p):
    return p[np.lexsort((p.imag, np.abs(p)))]


def vector_fit(resp: FreqResponse, cfg: VfConfig):
    """Fit ``sum c_n/(s - a_n) (+ d)`` to a sampled frequency response.

    Relaxed pole relocation on a real basis (conjugate pairs carry two real
    coefficients), unstable poles flipped after each relocation, then a final
    linear residue solve with the poles fixed.
    """
    N = cfg.order
    ns = len(resp)
    if ns < 2 * N + 2:
        raise DomainError(f"need at least {2 * N + 2} samples for order {N}, got {ns}")
    s = 1j * resp.omega
    f = resp.values
    wgt = _weights(f, cfg.weighting)
    poles = np.asarray(cfg.initial_poles, dtype=complex) if cfg.initial_poles is not None else initial_poles(
        N, resp.omega[0], resp.omega[-1]
    )
    scale = float(np.max(resp.omega))
    history = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        groups = _groups(poles, scale)
        Phi = _basis(s, groups)
        n = Phi.shape[1]
        cols = [Phi]
        if cfg.fit_constant:
            cols.append(np.ones((ns, 1)))
        cols += [-f[:, None] * Phi, -f[:, None]]
        M = np.hstack(cols) * wgt[:, None]
        Mr = np.vstack([M.real, M.imag])
        # relaxation row: Re(sum sigma) = ns, scaled like the data rows
        relax = np.zeros(Mr.shape[1])
        relax[-(n + 1) :] = np.concatenate([np.sum(Phi.real, axis=0), [ns]])
        w_rel = np.linalg.norm(f * wgt) / ns
        Mr = np.vstack([Mr, w_rel * relax])
        rhs = np.zeros(Mr.shape[0])
        rhs[-1] = w_rel * ns
        x = _lstsq(Mr, rhs)
        c_sig = x[-(n + 1) : -1]
        d_sig = x[-1]
        if abs(d_sig) < 1e-8:
            d_sig = math.copysign(1e-8, d_sig if d_sig != 0 else 1.0)
        A, b = _realization(groups)
        new = np.linalg.eigvals(A - np.outer(b, c_sig) / d_sig)
        new = np.where(new.real > 0, -new.real + 1j * new.imag, new)
        # snap numerically real eigenvalues so pairs stay well-defined
        new = np.where(np.abs(new.imag) <= 1e-9 * scale, new.real + 0j, new)
        move = float(np.max(np.abs(_sort_poles(new) - _sort_poles(poles))) / max(np.max(np.abs(poles)), 1e-300))
        poles = new
        tf, rmse = _residue_fit(s, f, wgt, poles, scale, cfg.fit_constant)
        history.append(rmse)
        if move < cfg.tol:
            converged = True
            break
    return tf, FitReport(rmse=rmse, iterations=it, converged=converged, residual_history=history)


def _residue_fit(s, f, wgt, poles, scale, fit_constant):
    groups = _groups(poles, scale)
    Phi = _basis(s, groups)
    if fit_constant:
        Phi = np.hstack([Phi, np.ones((s.size, 1))])
    M = Phi * wgt[:, None]
    x = _lstsq(np.vstack([M.real, M.imag]), _stack(f * wgt))
    d = x[-1] if fit_constant else 0.0
    a, c = _coeffs_to_residues(groups, x[: x.size - (1 if fit_constant else 0)])
    tf = RationalTF(a, c, d)
    rmse = float(np.sqrt(np.mean(np.abs(tf(s) - f) ** 2)))
    return tf, rmse


def fit_residues(resp: FreqResponse, poles, dc_gain: float | None = None,
                 weighting: Weighting = Weighting.UNIFORM) -> RationalTF:
    """Least-squares residues for fixed ``poles``, optionally with ``G(0) = dc_gain`` imposed exactly."""
    s = 1j * resp.omega
    f = resp.values
    wgt = _weights(f, Weighting(weighting))
    groups = _groups(np.asarray(poles, dtype=complex), float(np.max(resp.omega)))
    M = _basis(s, groups) * wgt[:, None]
    M = np.vstack([M.real, M.imag])
    rhs = _stack(f * wgt)
    if dc_gain is None:
        x = _lstsq(M, rhs)
    else:
        a = _basis(np.zeros(1, dtype=complex), groups)[0].real
        x_p = a * dc_gain / (a @ a)
        N = null_space(a[None, :])
        x = x_p + (N @ _lstsq(M @ N, rhs - M @ x_p) if N.shape[1] else 0.0)
    a_, c_ = _coeffs_to_residues(groups, x)
    return RationalTF(a_, c_, 0.0)


def max_fit_error(tf: RationalTF, resp: FreqResponse) -> float:
    """Largest sample deviation relative to the largest sample magnitude."""
    return float(np.max(np.abs(tf(1j * resp.omega) - resp.values)) / np.max(np.abs(resp.values)))


# ----------------------------------------------------------- VFLM pieces


@dataclass(frozen=True)
class LinearResponse:
    """Normalized small-signal response of one station: (dP/P0)/(dv/v0)."""

    H: FreqResponse
    N_t: float  # high-frequency asymptote
    N_s: float  # zero-frequency value
    P0: float
    v0: float


def station_response(ev, soc0: float, freqs_hz, vm: float = 1.0) -> LinearResponse:
    """Linearize a ``DetailedEV`` and sample its normalized voltage-to-power response."""
    A, B, C, D, x0, phase, _ = ev.linear_model(vm, soc0)
    P0 = float(ev.outputs(x0, vm, phase)["P_ev"])
    w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=float)
    eye = np.eye(A.shape[0])
    H = np.array([C @ np.linalg.solve(1j * wk * eye - A, B) + D for wk in w]) * vm / P0
    N_s = float(np.real(C @ np.linalg.solve(-A, B) + D) * vm / P0)
    N_t = float(D * vm / P0)
    return LinearResponse(FreqResponse(w, H), N_t, N_s, P0, vm)


def extract_gs(ev, soc0: float, freqs_hz, vm: float = 1.0):
    """Sampled G(jw) of the power-recovery block: (H - N_t)/(N_s - N_t).

    Returns ``(FreqResponse, LinearResponse)``.
    """
    lin = station_response(ev, soc0, freqs_hz, vm)
    span = lin.N_s - lin.N_t
    if abs(span) < 1e-9:
        raise NumericalError("steady-state and transient exponents coincide; G(s) is undefined")
    G = (lin.H.values - lin.N_t) / span
    return FreqResponse(lin.H.omega, G), lin


def snap(x: float, step: float = 0.01) -> float:
    return round(round(x / step) * step, 10)


def step_exponents(t, v, P, settle_fraction: float = 0.05):
    """(N_t, N_s) from the instantaneous and settled power of a voltage step record.

    The step instant is the first sample where ``v`` leaves its initial value;
    the settled value averages the last ``settle_fraction`` of the record.
    """
    t, v, P = (np.asarray(a, dtype=float) for a in (t, v, P))
    moved = np.nonzero(np.abs(v - v[0]) > 1e-9 * abs(v[0]))[0]
    if moved.size == 0:
        raise DomainError("the step record contains no voltage change")
    k = moved[0]
    v0, P0 = v[k - 1] if k > 0 else v[0], P[k - 1] if k > 0 else P[0]
    v1, P_plus = v[k], P[k]
    tail = max(1, int(settle_fraction * t.size))
    v_end, P_end = v[-tail:].mean(), P[-tail:].mean()
    N_t = math.log(P_plus / P0) / math.log(v1 / v0)
    N_s = math.log(P_end / P0) / math.log(v_end / v0)
    return N_t, N_s, P0, v0


def fit_vflm(resp: FreqResponse, step_record, orders, weighting: Weighting = Weighting.UNIFORM,
             exponent_step: float | None = None):
    """One VFLM per requested order; each report's ``rmse`` is the time-domain error.

    ``step_record`` is ``(t, v, P)`` starting at steady state.  Exponents are
    identified from the record (optionally rounded to ``exponent_step``), and
    the residues are re-solved with ``G(0) = 1`` imposed.  The frequency-domain
    fit error (relative to max |G|) is kept in ``report.message``.
    """
    t, v, P = (np.asarray(a, dtype=float) for a in step_record)
    N_t, N_s, P0, v0 = step_exponents(t, v, P)
    if exponent_step:
        N_t, N_s = snap(N_t, exponent_step), snap(N_s, exponent_step)
    models, reports = {}, {}
    for order in orders:
        tf, rep = vector_fit(resp, VfConfig(order=int(order), weighting=weighting))
        # G(0) = 1 is part of the model definition: the settled power must follow N_s
        tf = fit_residues(resp, tf.poles, dc_gain=1.0, weighting=weighting)
        m = VflmParams(N_t, N_s, tf, P0, v0)
        P_hat = vflm_power(m, t, v)
        td = float(np.sqrt(np.mean(((P_hat - P) / P0) ** 2)))
        f_rmse = float(np.sqrt(np.mean(np.abs(tf(1j * resp.omega) - resp.values) ** 2)))
        rep.message = f"freq_max_err={max_fit_error(tf, resp):.6g}; freq_rmse={f_rmse:.6g}"
        rep.rmse = td
        models[int(order)] = m
        reports[int(order)] = rep
    return models, reports


# -------------------------------------------------------------- static fit


class StaticKind(str, enum.Enum):
    EXP = "exp"
    EV_STATIC = "ev_static"


EV_STATIC_NAMES = ("b_p", "n_p", "c_p", "d_p", "e_p", "f_p")
EXP_NAMES = ("a_p", "b_p", "n_p")


def _ev_model(theta, r, soc):
    b, n, c, d, e, f = theta
    rn = r**n
    ex = np.exp(-f * (1.0 - soc))
    val = b * rn + c - d * (1.0 - soc) / soc + e * ex
    J = np.column_stack([rn, b * rn * np.log(r), np.ones_like(r), -(1.0 - soc) / soc, ex, -e * (1.0 - soc) * ex])
    return val, J


def _exp_model(theta, r, soc):
    a, b, n = theta
    rn = r**n
    return a + b * rn, np.column_stack([np.ones_like(r), rn, b * rn * np.log(r)])


def levenberg_marquardt(fun, theta0, y, lower=None, max_iter=200, tol=1e-12):
    """Damped Gauss-Newton with step acceptance only on cost decrease.

    ``fun(theta) -> (model, jacobian)``.  ``lower`` optionally bounds
    parameters from below (projected steps).  The residual history therefore
    never increases.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    lower = None if lower is None else np.asarray(lower, dtype=float)
    mdl, J = fun(theta)
    r = mdl - y
    cost = float(r @ r)
    history = [math.sqrt(cost / y.size)]
    mu = 1e-3 * float(np.max(np.sum(J**2, axis=0)))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = J.T @ r
        JTJ = J.T @ J
        improved = False
        for _ in range(30):
            step = -np.linalg.solve(JTJ + mu * np.diag(np.maximum(np.diag(JTJ), 1e-12)), g)
            trial = theta + step
            if lower is not None:
                trial = np.maximum(trial, lower)
            mdl_t, J_t = fun(trial)
            r_t = mdl_t - y
            cost_t = float(r_t @ r_t)
            if np.isfinite(cost_t) and cost_t <= cost:
                improved = True
                break
            mu *= 4.0
        if not improved:
            converged = True  # no descent direction left at this damping range
            break
        rel = (cost - cost_t) / max(cost, 1e-300)
        dstep = float(np.max(np.abs(trial - theta) / np.maximum(np.abs(theta), 1e-8)))
        theta, J, r, cost = trial, J_t, r_t, cost_t
        history.append(math.sqrt(cost / y.size))
        mu = max(mu / 3.0, 1e-15)
        if rel < tol or dstep < 1e-10 or cost < 1e-30:
            converged = True
            break
    sv = np.linalg.svd(J, compute_uv=False)
    rank_def = bool(sv[-1] <= 1e-10 * sv[0]) if sv.size else True
    return theta, FitReport(history[-1], it, converged, history, rank_def)


def _seed_soc_part(soc, y_soc):
    """Best (c, d, e) on a coarse f grid by linear least squares."""
    best = None
    for f in np.concatenate([[0.0], np.logspace(-2, 1.3, 40)]):
        ex = np.exp(-f * (1.0 - soc))
        M = np.column_stack([np.ones_like(soc), -(1.0 - soc) / soc, ex])
        coef, *_ = np.linalg.lstsq(M, y_soc, rcond=None)
        res = float(np.sum((M @ coef - y_soc) ** 2))
        if best is None or res < best[0]:
            best = (res, coef, f)
    _, (c, d, e), f = best
    return c, d, e, f


def fit_static(dataset, kind, P_nom: float = 50_000.0, v_nom: float = 230.0):
    """Fit the exponential or EV static model to ``(v, soc0, P)`` triples.

    ``v`` in volts (or any unit consistent with ``v_nom``), ``P`` in watts.
    The objective is the RMSE of ``P/P_nom``.
    """
    kind = StaticKind(kind)
    data = np.asarray(dataset, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ValidationError("dataset must be rows of (v, soc0, P)")
    v, soc, P = data.T
    if np.unique(np.round(v, 12)).size < 3:
        raise DomainError("dataset must span at least 3 distinct voltages")
    r = v / v_nom
    y = P / P_nom
    if kind is StaticKind.EV_STATIC:
        if np.unique(np.round(soc, 12)).size < 3:
            raise DomainError("dataset must span at least 3 distinct soc0 values")
        b0, n0 = 0.001, -2.0
        c0, d0, e0, f0 = _seed_soc_part(soc, y - b0 * r**n0)
        theta, rep = levenberg_marquardt(
            lambda th: _ev_model(th, r, soc),
            [b0, n0, c0, d0, e0, f0],
            y,
            lower=[-np.inf, -np.inf, -np.inf, -np.inf, -np.inf, 0.0],
        )
        return EvStaticParams(P_nom, v_nom, *map(float, theta)), rep
    # exponential: seed a, b by linear least squares at n = -2
    M = np.column_stack([np.ones_like(r), r**-2.0])
    (a0, b0), *_ = np.linalg.lstsq(M, y, rcond=None)
    theta, rep = levenberg_marquardt(lambda th: _exp_model(th, r, soc), [a0, b0, -2.0], y)
    return ExpParams(P_nom, v_nom, *map(float, theta)), rep


def ev_static_soc_spread(p: EvStaticParams, soc_lo=0.1, soc_hi=0.9) -> float:
    """Normalized power change between two soc0 values at nominal voltage."""
    return float(ev_soc_term(*p.soc_part, soc_hi) - ev_soc_term(*p.soc_part, soc_lo))


# --------------------------------------------------------------- reporting

FIT_REPORT_COLUMNS = ("kind", "chemistry", "mode", "params", "rmse", "converged")


def write_fit_report(rows, path) -> None:
    """One row per fit: kind, chemistry, mode, params (name=value;...), rmse, converged."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIT_REPORT_COLUMNS)
        for row in rows:
            params = row["params"]
            if not isinstance(params, str):
                params = ";".join(f"{k}={v:.10g}" for k, v in params.items())
            w.writerow([row["kind"], row["chemistry"], row["mode"], params, f"{row['rmse']:.6e}", bool(row["converged"])])
