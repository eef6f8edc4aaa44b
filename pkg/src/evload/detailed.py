"""Assembled detailed model of one EV behind its charging station.

The station hardware (``station``), the controllers (``control``) and the
battery pack (``battery``) are combined into one ODE with the controller
integrators as states.  The AC side is driven by the terminal voltage
magnitude in per unit; the station dq frame is aligned with that voltage
(ideal synchronisation), so ``v_cq = 0``.

State layout (``STATE_NAMES``)::

    i_d, i_q, v_dc, i_L, v_dc2, z_vdc, z_q, z_id, z_iq, z_p, z_cv, soc

The ``z_*`` entries are the integrals of the per-unit regulator errors.
Every evaluator accepts ``x`` of shape ``(12,)`` or ``(12, m)`` (one column
per station) so the network simulator can evaluate many stations at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .battery import CellParams, Chemistry, OcvCurve, PackConfig, reference_pack
from .control import DUTY_LIMITS, ControlBases, ControlGains, ControlRefs, Mode, Phase
from .errors import ConvergenceError, DomainError
from .station import POWER_SCALE, StationParams

STATE_NAMES = ("i_d", "i_q", "v_dc", "i_L", "v_dc2", "z_vdc", "z_q", "z_id", "z_iq", "z_p", "z_cv", "soc")
N_STATES = len(STATE_NAMES)
IDX = {name: k for k, name in enumerate(STATE_NAMES)}

SOC_EPS = 1e-6  # the OCV table is only evaluated on [SOC_EPS, 1]


@dataclass
class DetailedEV:
    """One EV, its pack and its charging station (all parameters bound)."""

    chemistry: Chemistry
    mode: Mode
    station: StationParams = field(default_factory=StationParams)
    gains: ControlGains = field(default_factory=ControlGains)
    v_dc_ref: float = 800.0
    Q_ref: float = 0.0
    P_batt_ref: float = 50_000.0
    duty_limits: tuple[float, float] = DUTY_LIMITS

    pack: PackConfig = field(init=False)
    cell: CellParams = field(init=False)
    curve: OcvCurve = field(init=False)
    refs: ControlRefs = field(init=False)
    bases: ControlBases = field(init=False)

    def __post_init__(self):
        self.chemistry = Chemistry.parse(self.chemistry)
        self.mode = Mode.parse(self.mode)
        self.pack, self.cell, self.curve = reference_pack(self.chemistry)
        self.refs = ControlRefs.for_pack(self.pack, self.cell, self.v_dc_ref, self.Q_ref, self.P_batt_ref)
        self.bases = ControlBases.from_ratings(self.station, self.refs)
        self._docv = self.curve._interp.derivative()

    # ------------------------------------------------------------ helpers
    @property
    def r_pack(self) -> float:
        return self.pack.resistance(self.cell)

    def pack_ocv(self, soc):
        s = np.clip(soc, SOC_EPS, 1.0)
        return self.pack.n_ser * self.curve._interp(s)

    def v_terminal(self, vm):
        """Converter-side AC voltage magnitude (V) for a grid-side magnitude in pu."""
        return self.station.tap * self.station.v_c_nom * np.asarray(vm, dtype=float)

    def active_indices(self, phase: Phase, include_soc: bool = False) -> np.ndarray:
        """States that carry dynamics in ``phase``; the CV integrator is idle in bulk."""
        idx = [k for k in range(N_STATES - 1) if not (k == IDX["z_cv"] and Phase(phase) is Phase.BULK)]
        if include_soc:
            idx.append(IDX["soc"])
        return np.array(idx)

    # ----------------------------------------------------------- dynamics
    def _signals(self, x, vm, phase: Phase):
        """Controller and plant signals shared by ``rhs`` and ``outputs``."""
        st, g, b, rf = self.station, self.gains, self.bases, self.refs
        i_d, i_q, v_dc, i_L, v2, z1, z2, z3, z4, z5, zc, soc = x
        vc = self.v_terminal(vm)
        e1 = (rf.v_dc_ref - v_dc) / b.v_dc
        id_ref = b.current * (g.vdc.k_p * e1 + g.vdc.k_i * z1)
        Q = -POWER_SCALE * vc * i_q
        e2 = (rf.Q_ref - Q) / b.power
        iq_ref = -b.current * (g.q.k_p * e2 + g.q.k_i * z2)
        e3 = (id_ref - i_d) / b.current
        e4 = (iq_ref - i_q) / b.current
        u_d = b.v_ac * (g.current.k_p * e3 + g.current.k_i * z3)
        u_q = b.v_ac * (g.current.k_p * e4 + g.current.k_i * z4)
        wL = st.omega * st.L_F
        e_d = vc + wL * i_q - u_d
        e_q = -wL * i_d - u_q
        i_b = (v2 - self.pack_ocv(soc)) / self.r_pack
        P_b = v2 * i_b
        ec = (rf.v_batt_ref - v2) / b.v_batt
        if Phase(phase) is Phase.CV:
            P_ref = rf.v_batt_ref * rf.i_batt_ref * (g.cv.k_p * ec + g.cv.k_i * zc)
        elif self.mode is Mode.CCCV:
            P_ref = v2 * rf.i_batt_ref
        else:
            P_ref = rf.P_batt_ref * np.ones_like(v2)
        e5 = (P_ref - P_b) / b.power
        raw = g.power.k_p * e5 + g.power.k_i * z5
        lo, hi = self.duty_limits
        delta = np.clip(raw, lo, hi)
        windup = ((raw > hi) & (e5 > 0)) | ((raw < lo) & (e5 < 0))
        return dict(
            vc=vc, e1=e1, e2=e2, e3=e3, e4=e4, e5=e5, ec=ec, u_d=u_d, u_q=u_q, e_d=e_d, e_q=e_q,
            id_ref=id_ref, iq_ref=iq_ref, Q=Q, i_b=i_b, P_b=P_b, P_ref=P_ref, delta=delta, windup=windup,
        )

    def rhs(self, x, vm, phase: Phase = Phase.BULK, soc_dynamic: bool = True):
        """Time derivative of the state for terminal voltage ``vm`` (pu)."""
        x = np.asarray(x, dtype=float)
        st = self.station
        s = self._signals(x, vm, phase)
        i_d, i_q, v_dc, i_L, v2 = x[0], x[1], x[2], x[3], x[4]
        if np.any(v_dc <= 1.0):
            raise DomainError("DC-link voltage collapsed below 1 V")
        P_conv = POWER_SCALE * (s["e_d"] * i_d + s["e_q"] * i_q)
        dx = np.empty_like(x)
        dx[0] = (-st.R_F * i_d + s["u_d"]) / st.L_F
        dx[1] = (-st.R_F * i_q + s["u_q"]) / st.L_F
        dx[2] = (P_conv / v_dc - s["delta"] * i_L) / st.C_DC1
        dx[3] = (s["delta"] * v_dc - v2) / st.L_DC
        dx[4] = (i_L - s["i_b"]) / st.C_DC2
        dx[5] = s["e1"]
        dx[6] = s["e2"]
        dx[7] = s["e3"]
        dx[8] = s["e4"]
        dx[9] = np.where(s["windup"], 0.0, s["e5"])
        dx[10] = s["ec"] if Phase(phase) is Phase.CV else 0.0 * s["ec"]
        dx[11] = s["i_b"] / (3600.0 * self.pack.n_par * self.cell.Q_cell) if soc_dynamic else 0.0 * v2
        return dx

    def outputs(self, x, vm, phase: Phase = Phase.BULK) -> dict:
        """AC and battery quantities of interest (single EV, physical units)."""
        x = np.asarray(x, dtype=float)
        s = self._signals(x, vm, phase)
        vc = s["vc"]
        P_ev = POWER_SCALE * vc * x[0]
        v_cell = x[4] / self.pack.n_ser
        return dict(
            P_ev=P_ev, Q_ev=s["Q"], i_d=x[0], i_q=x[1], v_dc=x[2], delta=s["delta"],
            i_batt=s["i_b"], P_batt=s["P_b"], v_batt=x[4], v_cell=v_cell, soc=x[11], P_ref=s["P_ref"],
        )

    def cell_voltage_bulk(self, soc):
        """Cell voltage the bulk controller would settle to at ``soc``."""
        E = self.pack_ocv(soc)
        if self.mode is Mode.CCCV:
            v2 = E + self.r_pack * self.refs.i_batt_ref
        else:
            v2 = 0.5 * (E + np.sqrt(E**2 + 4.0 * self.r_pack * self.refs.P_batt_ref))
        return v2 / self.pack.n_ser

    def phase_at(self, soc) -> Phase:
        return Phase.CV if self.cell_voltage_bulk(soc) >= self.cell.v_th else Phase.BULK

    # ------------------------------------------------------- steady state
    def steady_state(self, vm: float, soc0: float, phase: Phase | None = None, polish: bool = True):
        """Equilibrium state at terminal voltage ``vm`` (pu) with SOC frozen at ``soc0``.

        The analytic solution is exact for the average model; ``polish`` runs
        a Newton refinement on the active states and raises
        ``ConvergenceError`` if the residual does not vanish.
        Returns ``(x, phase)``.
        """
        if not 0.0 < soc0 <= 1.0:
            raise DomainError("soc0 must lie in (0, 1]")
        if not vm > 0:
            raise DomainError("terminal voltage must be positive")
        phase = self.phase_at(soc0) if phase is None else Phase(phase)
        st, g, b, rf = self.station, self.gains, self.bases, self.refs
        E = float(self.pack_ocv(soc0))
        R = self.r_pack
        zc = 0.0
        if phase is Phase.CV:
            v2 = rf.v_batt_ref
            i_b = (v2 - E) / R
            if i_b <= 0:
                raise DomainError("pack OCV at soc0 exceeds the CV reference: no charging current")
            zc = i_b / rf.i_batt_ref / g.cv.k_i
        elif self.mode is Mode.CCCV:
            i_b = rf.i_batt_ref
            v2 = E + R * i_b
        else:
            v2 = 0.5 * (E + np.sqrt(E**2 + 4.0 * R * rf.P_batt_ref))
            i_b = (v2 - E) / R
        P_b = v2 * i_b
        v_dc = rf.v_dc_ref
        delta = v2 / v_dc
        vc = float(self.v_terminal(vm))
        disc = vc**2 - 4.0 * st.R_F * P_b / POWER_SCALE
        if disc <= 0:
            raise DomainError(f"terminal voltage {vm} pu too low to deliver {P_b:.0f} W through the filter")
        i_d = (vc - np.sqrt(disc)) / (2.0 * st.R_F)
        x = np.zeros(N_STATES)
        x[IDX["i_d"]] = i_d
        x[IDX["v_dc"]] = v_dc
        x[IDX["i_L"]] = i_b
        x[IDX["v_dc2"]] = v2
        x[IDX["z_vdc"]] = i_d / b.current / g.vdc.k_i
        x[IDX["z_id"]] = st.R_F * i_d / b.v_ac / g.current.k_i
        x[IDX["z_p"]] = delta / g.power.k_i
        x[IDX["z_cv"]] = zc
        x[IDX["soc"]] = soc0
        if polish:
            x = self._newton_polish(x, vm, phase)
        return x, phase

    def _newton_polish(self, x, vm, phase, tol=1e-9, max_iter=20):
        idx = self.active_indices(phase)
        scale = np.maximum(np.abs(x[idx]), 1.0)
        for it in range(max_iter):
            f = self.rhs(x, vm, phase, soc_dynamic=False)[idx]
            if np.max(np.abs(f) / scale) < tol:
                return x
            J = self.jacobian(x, vm, phase)[0][np.ix_(idx, idx)]
            x = x.copy()
            x[idx] -= np.linalg.solve(J, f)
        f = self.rhs(x, vm, phase, soc_dynamic=False)[idx]
        res = float(np.max(np.abs(f) / scale))
        if res < tol:
            return x
        raise ConvergenceError("station steady state did not converge", iterations=max_iter, residual=res)

    def power_at(self, vm: float, soc0: float):
        """Steady-state (P_ev, Q_ev) in watts for one EV."""
        x, phase = self.steady_state(vm, soc0)
        o = self.outputs(x, vm, phase)
        return float(o["P_ev"]), float(o["Q_ev"])

    # ----------------------------------------------------------- Jacobian
    def jacobian(self, x, vm, phase: Phase = Phase.BULK, soc_dynamic: bool = True):
        """Analytic ``(d rhs/dx, d rhs/d vm)`` at a single operating point."""
        x = np.asarray(x, dtype=float)
        st, g, b, rf = self.station, self.gains, self.bases, self.refs
        phase = Phase(phase)
        n = N_STATES
        # gradients are rows over (x..., vm)
        E_ = np.eye(n + 1)
        d = {name: E_[k] for k, name in enumerate(STATE_NAMES)}
        dvm = E_[n]
        s = self._signals(x, vm, phase)
        i_d, i_q, v_dc, i_L, v2 = x[0], x[1], x[2], x[3], x[4]
        soc = x[11]
        tV = st.tap * st.v_c_nom
        vc = s["vc"]
        dvc = tV * dvm

        de1 = -d["v_dc"] / b.v_dc
        did_ref = b.current * (g.vdc.k_p * de1 + g.vdc.k_i * d["z_vdc"])
        dQ = -POWER_SCALE * (vc * d["i_q"] + i_q * dvc)
        de2 = -dQ / b.power
        diq_ref = -b.current * (g.q.k_p * de2 + g.q.k_i * d["z_q"])
        de3 = (did_ref - d["i_d"]) / b.current
        de4 = (diq_ref - d["i_q"]) / b.current
        dud = b.v_ac * (g.current.k_p * de3 + g.current.k_i * d["z_id"])
        duq = b.v_ac * (g.current.k_p * de4 + g.current.k_i * d["z_iq"])
        wL = st.omega * st.L_F
        ded = dvc + wL * d["i_q"] - dud
        deq = -wL * d["i_d"] - duq
        P_conv = POWER_SCALE * (s["e_d"] * i_d + s["e_q"] * i_q)
        dPc = POWER_SCALE * (s["e_d"] * d["i_d"] + i_d * ded + s["e_q"] * d["i_q"] + i_q * deq)

        s_eff = float(np.clip(soc, SOC_EPS, 1.0))
        docv = float(self._docv(s_eff)) if SOC_EPS < soc < 1.0 else 0.0
        dib = (d["v_dc2"] - self.pack.n_ser * docv * d["soc"]) / self.r_pack
        dPb = s["i_b"] * d["v_dc2"] + v2 * dib
        dec = -d["v_dc2"] / b.v_batt
        if phase is Phase.CV:
            dPref = rf.v_batt_ref * rf.i_batt_ref * (g.cv.k_p * dec + g.cv.k_i * d["z_cv"])
        elif self.mode is Mode.CCCV:
            dPref = rf.i_batt_ref * d["v_dc2"]
        else:
            dPref = 0.0 * dvm
        de5 = (dPref - dPb) / b.power
        lo, hi = self.duty_limits
        raw = g.power.k_p * s["e5"] + g.power.k_i * x[9]
        saturated = not (lo < raw < hi)
        ddelta = 0.0 * dvm if saturated else g.power.k_p * de5 + g.power.k_i * d["z_p"]
        delta = s["delta"]

        J = np.zeros((n, n + 1))
        J[0] = (-st.R_F * d["i_d"] + dud) / st.L_F
        J[1] = (-st.R_F * d["i_q"] + duq) / st.L_F
        J[2] = (dPc / v_dc - P_conv / v_dc**2 * d["v_dc"] - i_L * ddelta - delta * d["i_L"]) / st.C_DC1
        J[3] = (v_dc * ddelta + delta * d["v_dc"] - d["v_dc2"]) / st.L_DC
        J[4] = (d["i_L"] - dib) / st.C_DC2
        J[5] = de1
        J[6] = de2
        J[7] = de3
        J[8] = de4
        J[9] = 0.0 if bool(s["windup"]) else de5
        J[10] = dec if phase is Phase.CV else 0.0
        J[11] = dib / (3600.0 * self.pack.n_par * self.cell.Q_cell) if soc_dynamic else 0.0
        return J[:, :n], J[:, n]

    def output_gradient(self, x, vm):
        """Gradient of single-EV ``P_ev`` with respect to ``(x, vm)``."""
        g = np.zeros(N_STATES)
        vc = float(self.v_terminal(vm))
        g[IDX["i_d"]] = POWER_SCALE * vc
        return g, POWER_SCALE * self.station.tap * self.station.v_c_nom * x[IDX["i_d"]]

    def linear_model(self, vm: float, soc0: float, phase: Phase | None = None):
        """Small-signal ``(A, B, C, D)`` from ``vm`` to ``P_ev`` with SOC frozen.

        Only the states active in the phase are kept, so no structural zero
        eigenvalues remain.  Returns ``(A, B, C, D, x0, phase, idx)``.
        """
        x0, phase = self.steady_state(vm, soc0, phase)
        idx = self.active_indices(phase)
        Jx, Ju = self.jacobian(x0, vm, phase, soc_dynamic=False)
        Cx, Du = self.output_gradient(x0, vm)
        return Jx[np.ix_(idx, idx)], Ju[idx], Cx[idx], Du, x0, phase, idx
