"""Network DAE: two-axis machines with first-order AVRs, PQ loads and EV fleets.

Differential states (``NetworkDae.layout`` gives the slices)::

    machines : delta (all but the reference machine), omega, e'q, e'd, E_fd
    stations : the active ``DetailedEV`` states of each detailed fleet
    vflm     : the realization states of each VFLM fleet

Algebraic variables are the real and imaginary parts of all bus voltages.
Angles are measured in the rotor frame of the reference machine (the first
machine, normally on the slack bus), which removes the rotational zero
eigenvalue.  Network, machines and station averages are all phasor models.
SOC is frozen during network studies (seconds of simulated time).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..control import ControlGains
from ..detailed import DetailedEV, N_STATES
from ..errors import ConvergenceError, NumericalError, ValidationError
from ..grid import GridCase, PowerFlowSolution, Representation, admittance_matrix, single_ev_power
from ..loadmodels import EvStaticParams, VflmParams, ev_static_power, exp_power, realize_tf
from ..station import POWER_SCALE


@dataclass
class _Machines:
    bus: np.ndarray
    scale: np.ndarray  # machine base / system base
    H: np.ndarray
    D: np.ndarray
    ra: np.ndarray
    xd: np.ndarray
    xq: np.ndarray
    xd1: np.ndarray
    xq1: np.ndarray
    td01: np.ndarray
    tq01: np.ndarray
    ka: np.ndarray
    ta: np.ndarray
    Pm: np.ndarray = None
    Vref: np.ndarray = None
    delta_ref: float = 0.0


class NetworkDae:
    """Semi-explicit DAE ``x' = f(x, y)``, ``0 = g(x, y)`` built from a solved power flow."""

    def __init__(
        self,
        case: GridCase,
        pf: PowerFlowSolution,
        ki_pi1: float = 1000.0,
        vflm: VflmParams | None = None,
        static_params=None,
    ):
        if not case.machines:
            raise ValidationError("dynamic studies need machine data in the case")
        self.case = case
        self.base_va = case.base_mva * 1e6
        self.omega_b = 2.0 * np.pi * case.frequency_hz
        idx = case.bus_index
        self.n_bus = len(case.buses)
        self.Y = admittance_matrix(case)
        self.ki_pi1 = ki_pi1

        # constant-power loads (disturbances scale these)
        self.p_load = np.zeros(self.n_bus)
        self.q_load = np.zeros(self.n_bus)
        for ld in case.loads:
            self.p_load[idx[ld.bus]] += ld.p_mw / case.base_mva
            self.q_load[idx[ld.bus]] += ld.q_mvar / case.base_mva
        self.load_scale = np.ones(self.n_bus)

        # fleets split by representation
        vm = np.abs(pf.V)
        self.pq_fleet = np.zeros(self.n_bus)
        self.static_fleets = []  # (bus index, n_ev, attachment)
        det, vfl = [], []
        for att in case.fleets:
            k = idx[att.bus]
            rep = att.representation
            if rep is Representation.PQ:
                self.pq_fleet[k] += att.lam * att.p_nom_mw / case.base_mva
            elif att.n_ev == 0:
                continue
            elif rep is Representation.STATIC:
                self.static_fleets.append((k, att.n_ev, att))
            elif rep is Representation.DETAILED:
                det.append((k, att))
            else:
                vfl.append((k, att))
        self.static_params = static_params

        # detailed stations: one shared model (all fleets share chemistry, mode, soc0)
        self.det_bus = np.array([k for k, _ in det], dtype=int)
        self.det_n = np.array([a.n_ev for _, a in det], dtype=float)
        self.ev = None
        if det:
            a0 = det[0][1]
            if any((a.chemistry, a.mode, a.soc0) != (a0.chemistry, a0.mode, a0.soc0) for _, a in det):
                raise ValidationError("detailed fleets must share chemistry, mode and soc0")
            self.ev = DetailedEV(a0.chemistry, a0.mode, gains=ControlGains().with_ki_pi1(ki_pi1))
            self.phase = self.ev.phase_at(a0.soc0)
            self.st_idx = self.ev.active_indices(self.phase)
            xs = np.empty((N_STATES, len(det)))
            for j, (k, a) in enumerate(det):
                xs[:, j], _ = self.ev.steady_state(vm[k], a.soc0, self.phase)
            self.st_template = xs
            self.st_gain = self.det_n * POWER_SCALE * self.ev.station.tap * self.ev.station.v_c_nom / self.base_va

        # VFLM fleets: G shared or per bus, P0 and v0 from the power flow
        self.vf_bus = np.array([k for k, _ in vfl], dtype=int)
        self.vflm = vflm
        self.vf_order = 0
        if vfl:
            if vflm is None:
                raise ValidationError("VFLM fleets need fitted VFLM parameters")
            models = [vflm[a.bus] if isinstance(vflm, dict) else vflm for _, a in vfl]
            ss = [realize_tf(mdl.G) for mdl in models]
            if len({r.A.shape[0] for r in ss}) != 1:
                raise ValidationError("all VFLM fleets must share one model order")
            self.vf_order = ss[0].A.shape[0]
            self.vf_A = np.array([r.A for r in ss])
            self.vf_B = np.array([r.B for r in ss])
            self.vf_C = np.array([r.C for r in ss])
            self.vf_D = np.array([r.D for r in ss])
            self.vf_Nt = np.array([mdl.N_t for mdl in models])
            self.vf_Ns = np.array([mdl.N_s for mdl in models])
            self.vf_P0 = np.array([a.n_ev * single_ev_power(a, vm[k], ki_pi1) for k, a in vfl]) / self.base_va
            self.vf_v0 = vm[self.vf_bus]

        self._build_machines(case, idx)
        self._layout()
        self.x0, self.y0 = self._initialize(pf)

    # -------------------------------------------------------------- setup
    def _build_machines(self, case, idx):
        avr = {a.bus: a for a in case.avrs}
        ms = case.machines
        get = lambda name: np.array([getattr(m, name) for m in ms], dtype=float)  # noqa: E731
        self.m = _Machines(
            bus=np.array([idx[m.bus] for m in ms]),
            scale=get("s_mva") / case.base_mva,
            H=get("h"), D=get("d"), ra=get("ra"), xd=get("xd"), xq=get("xq"),
            xd1=get("xd1"), xq1=get("xq1"), td01=get("td01"), tq01=get("tq01"),
            ka=np.array([avr[m.bus].ka if m.bus in avr else 0.0 for m in ms]),
            ta=np.array([avr[m.bus].ta if m.bus in avr else 1.0 for m in ms]),
        )

    def _layout(self):
        nm = len(self.m.bus)
        sizes = [
            ("delta", nm - 1), ("omega", nm), ("eq1", nm), ("ed1", nm), ("efd", nm),
            ("station", (len(self.st_idx) * self.det_bus.size) if self.ev is not None else 0),
            ("vflm", self.vf_order * self.vf_bus.size),
        ]
        self.layout = {}
        k = 0
        for name, n in sizes:
            self.layout[name] = slice(k, k + n)
            k += n
        self.n_x = k
        self.n_y = 2 * self.n_bus

    def _initialize(self, pf: PowerFlowSolution):
        m = self.m
        V = pf.V
        Vg = V[m.bus]
        S = (pf.gen_p_mw[m.bus] + 1j * pf.gen_q_mvar[m.bus]) / self.case.base_mva / m.scale
        I = np.conj(S / Vg)
        E = Vg + (m.ra + 1j * m.xq) * I
        delta = np.angle(E)
        rot = np.exp(-1j * (delta - np.pi / 2))
        Idq, Vdq = I * rot, Vg * rot
        Id, Iq, Vd, Vq = Idq.real, Idq.imag, Vdq.real, Vdq.imag
        ed1 = Vd + m.ra * Id - m.xq1 * Iq
        eq1 = Vq + m.ra * Iq + m.xd1 * Id
        efd = eq1 + (m.xd - m.xd1) * Id
        m.Pm = ed1 * Id + eq1 * Iq + (m.xq1 - m.xd1) * Id * Iq
        with np.errstate(divide="ignore"):
            m.Vref = np.abs(Vg) + np.where(m.ka > 0, efd / np.where(m.ka > 0, m.ka, 1.0), 0.0)
        # rotate everything into the reference machine's rotor frame
        m.delta_ref = 0.0
        shift = delta[0]
        x = np.zeros(self.n_x)
        L = self.layout
        x[L["delta"]] = delta[1:] - shift
        x[L["omega"]] = 1.0
        x[L["eq1"]] = eq1
        x[L["ed1"]] = ed1
        x[L["efd"]] = efd
        self._delta0_ref = 0.0
        Vr = V * np.exp(-1j * shift)
        if self.ev is not None:
            x[L["station"]] = self.st_template[self.st_idx, :].T.ravel()
        y = np.concatenate([Vr.real, Vr.imag])
        return x, y

    # ---------------------------------------------------------- equations
    def _unpack(self, x, y):
        L = self.layout
        V = y[: self.n_bus] + 1j * y[self.n_bus :]
        delta = np.concatenate([[self._delta0_ref], x[L["delta"]]])
        return V, delta

    def _machine_currents(self, x, V, delta):
        m, L = self.m, self.layout
        eq1, ed1 = x[L["eq1"]], x[L["ed1"]]
        rot = np.exp(-1j * (delta - np.pi / 2))
        Vdq = V[m.bus] * rot
        Vd, Vq = Vdq.real, Vdq.imag
        det = m.ra**2 + m.xd1 * m.xq1
        rd, rq = ed1 - Vd, eq1 - Vq
        Id = (m.ra * rd + m.xq1 * rq) / det
        Iq = (-m.xd1 * rd + m.ra * rq) / det
        I_sys = (Id + 1j * Iq) / rot * m.scale
        return Id, Iq, I_sys

    def _station_states(self, x):
        xs = self.st_template.copy()
        n = len(self.st_idx)
        xs[self.st_idx, :] = x[self.layout["station"]].reshape(-1, n).T
        return xs

    def _vflm_states(self, x):
        return x[self.layout["vflm"]].reshape(-1, self.vf_order)  # (fleets, order)

    def _vflm_input(self, V):
        ratio = np.abs(V[self.vf_bus]) / self.vf_v0
        return ratio, ratio**self.vf_Ns - ratio**self.vf_Nt

    def f(self, x, y):
        m, L = self.m, self.layout
        V, delta = self._unpack(x, y)
        Id, Iq, _ = self._machine_currents(x, V, delta)
        omega, eq1, ed1, efd = x[L["omega"]], x[L["eq1"]], x[L["ed1"]], x[L["efd"]]
        Pe = ed1 * Id + eq1 * Iq + (m.xq1 - m.xd1) * Id * Iq
        dx = np.empty_like(x)
        dx[L["delta"]] = self.omega_b * (omega[1:] - omega[0])
        dx[L["omega"]] = (m.Pm - Pe - m.D * (omega - 1.0)) / (2.0 * m.H)
        dx[L["eq1"]] = (-eq1 - (m.xd - m.xd1) * Id + efd) / m.td01
        dx[L["ed1"]] = (-ed1 + (m.xq - m.xq1) * Iq) / m.tq01
        vmag = np.abs(V[m.bus])
        dx[L["efd"]] = np.where(m.ka > 0, (m.ka * (m.Vref - vmag) - efd) / m.ta, 0.0)
        if self.ev is not None:
            xs = self._station_states(x)
            d = self.ev.rhs(xs, np.abs(V[self.det_bus]), self.phase, soc_dynamic=False)
            dx[L["station"]] = d[self.st_idx, :].T.ravel()
        if self.vf_bus.size:
            z = self._vflm_states(x)
            _, u = self._vflm_input(V)
            dz = np.einsum("fij,fj->fi", self.vf_A, z) + self.vf_B * u[:, None]
            dx[L["vflm"]] = dz.ravel()
        return dx

    def load_current(self, x, V):
        """Total current drawn by loads and fleets at every bus (system pu)."""
        vm = np.abs(V)
        P = self.p_load * self.load_scale + self.pq_fleet
        Q = self.q_load * self.load_scale
        if self.static_fleets:
            for k, n, att in self.static_fleets:
                P[k] += n * _static_power(self.static_params, vm[k], att.soc0) / self.base_va
        I = np.conj((P + 1j * Q) / V)
        if self.ev is not None:
            xs = self._station_states(x)
            i_dq = xs[0] + 1j * xs[1]
            Vb = V[self.det_bus]
            I[self.det_bus] += self.st_gain * i_dq * Vb / np.abs(Vb)
        if self.vf_bus.size:
            z = self._vflm_states(x)
            Vb = V[self.vf_bus]
            ratio, u = self._vflm_input(V)
            yv = np.einsum("fi,fi->f", self.vf_C, z) + self.vf_D * u
            Pv = self.vf_P0 * (ratio**self.vf_Nt + yv)
            I[self.vf_bus] += Pv / np.conj(Vb)
        return I

    def g(self, x, y):
        V, delta = self._unpack(x, y)
        _, _, I_m = self._machine_currents(x, V, delta)
        I_inj = -self.load_current(x, V)
        np.add.at(I_inj, self.m.bus, I_m)
        mis = self.Y @ V - I_inj
        return np.concatenate([mis.real, mis.imag])

    # ------------------------------------------------------------ helpers
    def bus_voltage(self, y, bus_id: int) -> float:
        k = self.case.bus_index[bus_id]
        return float(abs(complex(y[k], y[self.n_bus + k])))

    def jacobians(self, x, y, h: float = 1e-7):
        """Central-difference ``(fx, fy, gx, gy)``."""
        nx, ny = self.n_x, self.n_y
        fx = np.empty((nx, nx))
        gx = np.empty((ny, nx))
        fy = np.empty((nx, ny))
        gy = np.empty((ny, ny))
        for j in range(nx):
            e = np.zeros(nx)
            step = h * max(1.0, abs(x[j]))
            e[j] = step
            fx[:, j] = (self.f(x + e, y) - self.f(x - e, y)) / (2 * step)
            gx[:, j] = (self.g(x + e, y) - self.g(x - e, y)) / (2 * step)
        for j in range(ny):
            e = np.zeros(ny)
            step = h * max(1.0, abs(y[j]))
            e[j] = step
            fy[:, j] = (self.f(x, y + e) - self.f(x, y - e)) / (2 * step)
            gy[:, j] = (self.g(x, y + e) - self.g(x, y - e)) / (2 * step)
        return fx, fy, gx, gy

    def consistency(self):
        """Largest |f| and |g| at the initial point (both ~0 for a consistent start)."""
        return float(np.max(np.abs(self.f(self.x0, self.y0)))), float(np.max(np.abs(self.g(self.x0, self.y0))))

    def state_names(self):
        names = []
        nm = len(self.m.bus)
        bus_ids = [self.case.buses[k].id for k in self.m.bus]
        names += [f"delta@{b}" for b in bus_ids[1:]]
        for what in ("omega", "eq1", "ed1", "efd"):
            names += [f"{what}@{b}" for b in bus_ids[:nm]]
        if self.ev is not None:
            from ..detailed import STATE_NAMES

            for k in self.det_bus:
                names += [f"{STATE_NAMES[i]}@{self.case.buses[k].id}" for i in self.st_idx]
        if self.vf_bus.size:
            for k in self.vf_bus:
                names += [f"vflm{i}@{self.case.buses[k].id}" for i in range(self.vf_order)]
        return names


def _static_power(params, vm, soc0):
    if isinstance(params, EvStaticParams):
        return ev_static_power(params, vm * params.v_c_nom, soc0)
    return exp_power(params, vm * params.v_nom)


def solve_algebraic(dae: NetworkDae, x, y, tol=1e-10, max_iter=20):
    """Newton on ``g(x, y) = 0`` for fixed ``x`` (used after discontinuities)."""
    for _ in range(max_iter):
        gv = dae.g(x, y)
        if np.max(np.abs(gv)) < tol:
            return y
        _, _, _, gy = dae.jacobians(x, y)
        try:
            y = y - np.linalg.solve(gy, gv)
        except np.linalg.LinAlgError:
            raise NumericalError("singular network Jacobian") from None
    raise ConvergenceError("algebraic network equations did not converge", iterations=max_iter, residual=float(np.max(np.abs(gv))))
