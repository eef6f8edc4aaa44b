"""Single-station time-domain runs: full charging sessions and tap-step records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from ..control import Phase
from ..detailed import IDX, DetailedEV
from ..errors import ConvergenceError, DomainError

SOC_FULL = 0.999
TAPER_FRACTION = 0.02


@dataclass
class ChargeResult:
    """Sampled trajectories of one charging session (SI units, SOC as a fraction)."""

    t: np.ndarray
    soc: np.ndarray
    i_batt: np.ndarray
    v_batt: np.ndarray
    v_cell: np.ndarray
    P_batt: np.ndarray
    P_ev: np.ndarray
    ocv: np.ndarray
    phase: np.ndarray  # 0 = bulk, 1 = CV
    t_switch: float | None
    reason: str
    notes: list = field(default_factory=list)

    @property
    def bulk(self) -> np.ndarray:
        return self.phase == 0

    @property
    def energy_in(self) -> float:
        """Energy delivered to the pack terminals (J)."""
        return float(np.trapezoid(self.P_batt, self.t))

    @property
    def energy_stored(self) -> float:
        """Energy converted at the open-circuit voltage, i.e. excluding ohmic loss (J)."""
        return float(np.trapezoid(self.ocv * self.i_batt, self.t))

    @property
    def energy_gap(self) -> float:
        """(input - stored) / input."""
        return (self.energy_in - self.energy_stored) / self.energy_in


def _bumpless_cv(ev: DetailedEV, x):
    """Set the CV integrator so the power reference is continuous at the switch."""
    x = x.copy()
    rf, g = ev.refs, ev.gains
    P_b = float(ev.outputs(x, 1.0, Phase.BULK)["P_batt"])
    ec = (rf.v_batt_ref - x[IDX["v_dc2"]]) / ev.bases.v_batt
    x[IDX["z_cv"]] = (P_b / (rf.v_batt_ref * rf.i_batt_ref) - g.cv.k_p * ec) / g.cv.k_i
    return x


def simulate_charge(
    ev: DetailedEV,
    soc0: float = 0.01,
    vm: float = 1.0,
    t_max: float | None = None,
    n_samples: int = 2000,
    rtol: float = 1e-7,
) -> ChargeResult:
    """Charge from ``soc0`` until SOC reaches 99.9 % or the CV current tapers below 2 %.

    The bulk-to-CV switch is located by event detection on the cell-voltage
    threshold, so it does not depend on the step size.  Raises
    ``ConvergenceError`` carrying the last good time if the integrator fails.
    """
    if not 0.0 < soc0 < SOC_FULL:
        raise DomainError("soc0 must lie in (0, 0.999)")
    x, phase = ev.steady_state(vm, soc0)
    if phase is Phase.CV:
        x = _bumpless_cv(ev, x)
    i_ref = ev.refs.i_batt_ref
    one_c_hours = ev.pack.n_par * ev.cell.Q_cell / i_ref
    if t_max is None:
        t_max = 4.0 * 3600.0 * max(one_c_hours, 0.25)

    def full(t, x):
        return SOC_FULL - x[IDX["soc"]]

    full.terminal = True
    full.direction = -1

    def to_cv(t, x):
        return float(ev.outputs(x, vm, Phase.BULK)["v_cell"]) - ev.cell.v_th

    to_cv.terminal = True
    to_cv.direction = 1

    def taper(t, x):
        return float(ev.outputs(x, vm, Phase.CV)["i_batt"]) - TAPER_FRACTION * i_ref

    taper.terminal = True
    taper.direction = -1

    ts, xs, phases = [], [], []
    t0, t_switch, reason, notes = 0.0, None, "t_max", []
    while True:
        ph = phase
        events = [full, to_cv] if ph is Phase.BULK else [full, taper]
        sol = solve_ivp(
            lambda t, y: ev.rhs(y, vm, ph),
            (t0, t_max),
            x,
            method="Radau",
            jac=lambda t, y: ev.jacobian(y, vm, ph)[0],
            events=events,
            rtol=rtol,
            atol=_atol(x),
            dense_output=True,
        )
        if sol.status == -1:
            raise ConvergenceError(f"integration failed at t = {sol.t[-1]:.3f} s: {sol.message}",
                                   iterations=sol.t.size, residual=float("nan"))
        t_end = sol.t[-1]
        grid = np.linspace(t0, t_end, max(3, int(n_samples * (t_end - t0) / t_max) + 2))
        ts.append(grid)
        xs.append(sol.sol(grid))
        phases.append(np.full(grid.size, 0 if ph is Phase.BULK else 1))
        if sol.status == 0:
            notes.append("stopped at t_max before reaching a termination condition")
            break
        hit = [k for k, te in enumerate(sol.t_events) if te.size]
        x = sol.y_events[hit[0]][0]
        t0 = float(sol.t_events[hit[0]][0])
        if events[hit[0]] is to_cv:
            t_switch = t0
            phase = Phase.CV
            x = _bumpless_cv(ev, x)
            continue
        reason = "soc_full" if events[hit[0]] is full else "current_taper"
        break

    t = np.concatenate(ts)
    X = np.concatenate(xs, axis=1)
    ph = np.concatenate(phases)
    out_b = ev.outputs(X, vm, Phase.BULK)
    out_c = ev.outputs(X, vm, Phase.CV)
    pick = lambda k: np.where(ph == 0, out_b[k], out_c[k])  # noqa: E731
    soc = X[IDX["soc"]]
    return ChargeResult(
        t=t,
        soc=soc,
        i_batt=pick("i_batt"),
        v_batt=pick("v_batt"),
        v_cell=pick("v_cell"),
        P_batt=pick("P_batt"),
        P_ev=pick("P_ev"),
        ocv=np.asarray(ev.pack_ocv(soc), dtype=float),
        phase=ph,
        t_switch=t_switch,
        reason=reason,
        notes=notes,
    )


def _atol(x):
    return np.maximum(1e-8 * np.abs(x), 1e-9)


@dataclass(frozen=True)
class StepRecord:
    t: np.ndarray
    v: np.ndarray  # terminal voltage (pu)
    P: np.ndarray  # single-EV active power (W)

    def as_tuple(self):
        return self.t, self.v, self.P


def station_step(
    ev: DetailedEV,
    soc0: float = 0.1,
    step: float = -0.03,
    t_step: float = 0.1,
    t_end: float = 8.0,
    dt: float = 1e-3,
    vm0: float = 1.0,
) -> StepRecord:
    """Power response to a tap step from ``vm0`` to ``vm0*(1+step)`` with SOC frozen.

    The sample at ``t_step`` already carries the new voltage, so the first
    post-step power is the instantaneous response.
    """
    x0, phase = ev.steady_state(vm0, soc0)
    if phase is Phase.CV:
        x0 = _bumpless_cv(ev, x0)
    vm1 = vm0 * (1.0 + step)
    t_pre = np.arange(0.0, t_step, dt)
    t_post = t_step + np.arange(0.0, t_end - t_step + 0.5 * dt, dt)
    sol = solve_ivp(
        lambda t, y: ev.rhs(y, vm1, phase, soc_dynamic=False),
        (t_step, t_post[-1]),
        x0,
        method="Radau",
        jac=lambda t, y: ev.jacobian(y, vm1, phase, soc_dynamic=False)[0],
        t_eval=t_post,
        rtol=1e-10,
        atol=_atol(x0) * 1e-2,
    )
    if sol.status != 0:
        raise ConvergenceError(f"step simulation failed: {sol.message}", iterations=sol.t.size, residual=float("nan"))
    P_pre = float(ev.outputs(x0, vm0, phase)["P_ev"])
    P_post = ev.outputs(sol.y, vm1, phase)["P_ev"]
    t = np.concatenate([t_pre, t_post])
    v = np.concatenate([np.full(t_pre.size, vm0), np.full(t_post.size, vm1)])
    P = np.concatenate([np.full(t_pre.size, P_pre), P_post])
    return StepRecord(t, v, P)
