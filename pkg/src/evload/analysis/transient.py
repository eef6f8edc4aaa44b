"""Implicit trapezoidal integration of the network DAE and ring-down analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ..errors import ConvergenceError, DomainError, NumericalError
from ..grid import FleetSpec, GridCase
from .network import NetworkDae, solve_algebraic


@dataclass
class TransientResult:
    t: np.ndarray
    bus_ids: list
    vm: np.ndarray  # (samples, recorded buses), pu
    steps: int
    notes: list = field(default_factory=list)

    def deviation(self, bus_id: int) -> np.ndarray:
        """Voltage magnitude minus its pre-disturbance value."""
        k = self.bus_ids.index(bus_id)
        return self.vm[:, k] - self.vm[0, k]


def _newton(dae, x_n, fx_n, y, h, theta, J_cache, tol, max_iter=8):
    """Solve one theta-method step; returns (x, y, iterations) or raises ConvergenceError."""
    nx = dae.n_x
    x = x_n.copy()
    for it in range(1, max_iter + 1):
        f = dae.f(x, y)
        g = dae.g(x, y)
        r = np.concatenate([x - x_n - h * (theta * f + (1.0 - theta) * fx_n), g])
        if it > 1 and np.max(np.abs(r)) < tol:
            return x, y, it
        if J_cache.get("h") != (h, theta) or J_cache.get("stale"):
            fx, fy, gx, gy = dae.jacobians(x, y)
            J = np.block([[np.eye(nx) - h * theta * fx, -h * theta * fy], [gx, gy]])
            try:
                J_cache["lu"] = sla.lu_factor(J)
            except (ValueError, np.linalg.LinAlgError):
                raise NumericalError("singular iteration matrix") from None
            J_cache["h"] = (h, theta)
            J_cache["stale"] = False
        dz = sla.lu_solve(J_cache["lu"], r)
        x = x - dz[:nx]
        y = y - dz[nx:]
        if np.max(np.abs(dz)) < tol:
            return x, y, it
    raise ConvergenceError("trapezoidal step did not converge", iterations=max_iter, residual=float(np.max(np.abs(r))))


def integrate(
    dae: NetworkDae,
    t_end: float,
    h: float = 0.01,
    events=(),
    record_buses=None,
    tol: float = 1e-9,
    damping_steps: int = 2,
    h_min_factor: float = 1 / 64,
) -> TransientResult:
    """Trapezoidal rule from the DAE's initial point up to ``t_end``.

    ``events`` is a sequence of ``(time, action)`` where ``action(dae)``
    changes a parameter (for example ``dae.load_scale``).  The algebraic
    variables are re-solved at each event and the first ``damping_steps``
    steps afterwards use backward Euler, which suppresses the numerical
    ringing the trapezoidal rule leaves on very stiff states.  A step whose
    Newton iteration fails is retried with half the step size, down to
    ``h * h_min_factor``.
    """
    if h <= 0 or t_end <= 0:
        raise DomainError("step and end time must be positive")
    record_buses = [dae.case.buses[0].id] if record_buses is None else list(record_buses)
    events = sorted(events, key=lambda e: e[0])
    x, y = dae.x0.copy(), dae.y0.copy()
    t = 0.0
    ts, vs = [0.0], [[dae.bus_voltage(y, b) for b in record_buses]]
    J_cache: dict = {}
    ev_k = 0
    damp_left = 0
    steps = 0
    notes = []
    eps = 1e-12
    while t < t_end - eps:
        while ev_k < len(events) and events[ev_k][0] <= t + eps:
            events[ev_k][1](dae)
            y = solve_algebraic(dae, x, y)
            J_cache["stale"] = True
            damp_left = damping_steps
            ev_k += 1
        t_next = min(t + h, t_end)
        if ev_k < len(events):
            t_next = min(t_next, events[ev_k][0])
        hk = t_next - t
        if hk < 1e-9 * h:
            t = t_next
            continue
        theta = 1.0 if damp_left > 0 else 0.5
        fx_n = dae.f(x, y)
        while True:
            try:
                x_new, y_new, iters = _newton(dae, x, fx_n, y, hk, theta, J_cache, tol)
                break
            except ConvergenceError:
                J_cache["stale"] = True
                hk *= 0.5
                if hk < h * h_min_factor:
                    raise ConvergenceError(f"step size underflow at t = {t:.4f} s", iterations=steps, residual=float("nan"))
        if iters > 4:
            J_cache["stale"] = True
        x, y = x_new, y_new
        t += hk
        steps += 1
        damp_left = max(0, damp_left - 1)
        ts.append(t)
        vs.append([dae.bus_voltage(y, b) for b in record_buses])
    if not np.all(np.isfinite(vs[-1])):
        notes.append("non-finite voltages at the end of the run")
    return TransientResult(np.array(ts), record_buses, np.array(vs), steps, notes)


def load_step_events(dae: NetworkDae, bus_id: int, size: float = 0.01, t_on: float = 0.5, duration: float = 0.1):
    """+``size`` relative change of one bus's load active power for ``duration`` seconds."""
    k = dae.case.bus_index[bus_id]
    if dae.p_load[k] == 0:
        raise DomainError(f"bus {bus_id} carries no load")

    def on(d):
        d.load_scale = d.load_scale.copy()
        d.load_scale[k] = 1.0 + size

    def off(d):
        d.load_scale = d.load_scale.copy()
        d.load_scale[k] = 1.0

    return [(t_on, on), (t_on + duration, off)]


def transient_disturbance(
    case: GridCase,
    lam: float,
    spec: FleetSpec,
    ki_pi1: float,
    load_bus: int | None = None,
    size: float = 0.01,
    duration: float = 0.1,
    t_end: float = 60.0,
    h: float = 0.01,
    record_buses=(1,),
    **dae_kw,
) -> TransientResult:
    """Ring-down of the overloaded network after a short load pulse.

    The pulse hits ``load_bus`` (the largest load when omitted) at 0.5 s.
    """
    from .stability import build_dae

    dae = build_dae(case, lam, spec, ki_pi1, **dae_kw)
    if load_bus is None:
        load_bus = max(case.loads, key=lambda ld: ld.p_mw).bus
    events = load_step_events(dae, load_bus, size, 0.5, duration)
    return integrate(dae, t_end, h, events, record_buses)


@dataclass(frozen=True)
class Mode:
    sigma: float  # 1/s
    freq_hz: float
    amplitude: float


def matrix_pencil(t, y, order: int = 12, f_min_hz: float = 0.05, max_samples: int = 1500) -> list:
    """Damped-sinusoid decomposition of a uniformly sampled signal, largest amplitude first.

    Oscillatory modes below ``f_min_hz`` and the conjugate duplicates are
    dropped.  The signal is decimated to at most ``max_samples`` points.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    stride = max(1, int(np.ceil(t.size / max_samples)))
    t, y = t[::stride], y[::stride]
    dt = np.diff(t)
    if t.size < 3 * order or np.ptp(dt) > 1e-6 * dt.mean():
        raise DomainError("matrix pencil needs enough uniformly spaced samples")
    dt = float(dt.mean())
    L = t.size // 2
    Y = sla.hankel(y[: t.size - L], y[t.size - L - 1 :])
    U, s, Vh = np.linalg.svd(Y, full_matrices=False)
    M = min(order, int(np.sum(s > 1e-10 * s[0])))
    if M == 0:
        return []
    V = Vh[:M].conj().T
    z = np.linalg.eigvals(np.linalg.pinv(V[:-1]) @ V[1:])
    z = z[np.abs(z) > 0]
    Z = np.vander(z, t.size, increasing=True).T
    amp = np.linalg.lstsq(Z, y.astype(complex), rcond=None)[0]
    lam = np.log(z) / dt
    modes = []
    for l, a in zip(lam, amp):
        f = l.imag / (2 * np.pi)
        if f < -1e-9 or (0 < abs(f) < f_min_hz and abs(f) > 1e-9):
            continue
        scale = 2.0 if f > 1e-9 else 1.0
        modes.append(Mode(float(l.real), float(abs(f)), float(scale * abs(a))))
    return sorted(modes, key=lambda m: -m.amplitude)


def dominant_oscillation(res: TransientResult, bus_id: int = 1, t_from: float = 20.0, order: int = 12) -> Mode:
    """Largest oscillatory component of the voltage deviation after ``t_from``."""
    sel = res.t >= t_from
    t = res.t[sel]
    y = res.deviation(bus_id)[sel]
    grid = np.arange(t[0], t[-1], float(np.median(np.diff(t))))
    yi = np.interp(grid, t, y)
    osc = [m for m in matrix_pencil(grid, yi - yi.mean(), order) if m.freq_hz > 0]
    if not osc:
        raise NumericalError("no oscillatory component found")
    return osc[0]
