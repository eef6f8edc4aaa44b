"""Charging-station control: PI regulators, AC/DC loops, and CCCV/CPCV logic.

Regulator assignment (configurable through ``ControlGains``):

* PI1 - DC-link voltage loop, sets the d-axis current reference
* PI2 - reactive-power loop, sets the q-axis current reference
* PI3 - inner dq current loops (same gains on both axes)
* PI4 - DC/DC power loop, sets the duty cycle
* CV  - pack-voltage loop used in the constant-voltage phase

All regulators act on per-unit errors and produce per-unit outputs.  The
bases are in ``ControlBases``; with them the tabulated gains give a stable
station without retuning.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from .battery import CellParams, PackConfig
from .errors import ValidationError
from .station import POWER_SCALE, StationParams


@dataclass(frozen=True)
class PiParams:
    k_p: float
    k_i: float

    def __post_init__(self):
        if self.k_p < 0 or self.k_i < 0:
            raise ValidationError("PI gains must be non-negative")


@dataclass(frozen=True)
class PiState:
    integral: float = 0.0
    limits: tuple[float, float] | None = None


def pi_output(p: PiParams, integral: float, error: float) -> float:
    return p.k_p * error + p.k_i * integral


def pi_step(p: PiParams, st: PiState, error: float, dt: float):
    """Advance a PI regulator by one forward-Euler step.

    With limits, the output is clamped and the integral is frozen whenever
    the clamped output and the error point the same way.
    """
    if not dt > 0:
        raise ValidationError("dt must be positive")
    integral = st.integral + error * dt
    out = pi_output(p, integral, error)
    if st.limits is not None:
        lo, hi = st.limits
        if (out > hi and error > 0) or (out < lo and error < 0):
            integral = st.integral
            out = pi_output(p, integral, error)
        out = min(max(out, lo), hi)
    return out, replace(st, integral=integral)


@dataclass(frozen=True)
class ControlGains:
    vdc: PiParams = PiParams(0.01, 1000.0)
    q: PiParams = PiParams(0.0, 33.0)
    current: PiParams = PiParams(0.142, 43.909)
    power: PiParams = PiParams(0.001, 1.0)
    cv: PiParams = PiParams(1.0, 50.0)

    def with_ki_pi1(self, k_i: float) -> "ControlGains":
        return replace(self, vdc=PiParams(self.vdc.k_p, k_i))


@dataclass(frozen=True)
class ControlRefs:
    v_dc_ref: float
    Q_ref: float
    P_batt_ref: float
    v_batt_ref: float
    i_batt_ref: float

    @classmethod
    def for_pack(cls, pack: PackConfig, cell: CellParams, v_dc_ref=800.0, Q_ref=0.0, P_batt_ref=50_000.0):
        v_batt_ref = pack.n_ser * cell.v_th
        return cls(v_dc_ref, Q_ref, P_batt_ref, v_batt_ref, P_batt_ref / v_batt_ref)


@dataclass(frozen=True)
class ControlBases:
    """Per-unit bases of the regulator inputs and outputs."""

    v_dc: float  # V, PI1 input
    current: float  # A, PI1/PI2 output and PI3 input
    v_ac: float  # V, PI3 output
    power: float  # W, PI2 and PI4 input
    v_batt: float  # V, CV input
    i_batt: float  # A, CV output

    @classmethod
    def from_ratings(cls, station: StationParams, refs: ControlRefs):
        return cls(
            v_dc=refs.v_dc_ref,
            current=station.P_ev_nom / (POWER_SCALE * station.v_c_nom),
            v_ac=station.v_c_nom,
            power=station.P_ev_nom,
            v_batt=refs.v_batt_ref,
            i_batt=refs.i_batt_ref,
        )


DUTY_LIMITS = (0.05, 0.95)


class Mode(str, enum.Enum):
    CCCV = "CCCV"
    CPCV = "CPCV"

    @classmethod
    def parse(cls, value) -> "Mode":
        return value if isinstance(value, cls) else cls(str(value).upper())


class Phase(str, enum.Enum):
    BULK = "BULK"
    CV = "CV"


@dataclass
class ChargingMode:
    mode: Mode
    phase: Phase = Phase.BULK

    def update(self, v_cell: float, v_th: float) -> bool:
        """Latch into CV once the cell voltage reaches the threshold; True on the switch."""
        if self.phase is Phase.BULK and v_cell >= v_th:
            self.phase = Phase.CV
            return True
        return False


def acdc_outer_loops(meas, refs: ControlRefs, pi_vdc, pi_q, dt: float, bases: ControlBases, gains: ControlGains):
    """DC-link and reactive-power loops; returns ``((i_d_ref, i_q_ref), (st_vdc, st_q))``.

    ``meas`` is ``(v_dc, Q_ev)``; ``pi_vdc`` and ``pi_q`` are ``PiState``.
    A DC-link voltage below reference raises the d-axis current reference.
    Q is absorbed reactive power, so a positive Q raises the q-axis
    current reference towards zero.
    """
    v_dc, Q_ev = meas
    out_d, st_vdc = pi_step(gains.vdc, pi_vdc, (refs.v_dc_ref - v_dc) / bases.v_dc, dt)
    out_q, st_q = pi_step(gains.q, pi_q, (refs.Q_ref - Q_ev) / bases.power, dt)
    return (bases.current * out_d, -bases.current * out_q), (st_vdc, st_q)


def acdc_current_loop(i_ref, meas_i, port_v, p: StationParams, pis, dt: float, bases: ControlBases, gains: ControlGains):
    """Inner current loop with dq decoupling; returns ``((e_d, e_q), (st_d, st_q))``."""
    i_d_ref, i_q_ref = i_ref
    i_d, i_q = meas_i
    v_cd, v_cq = port_v
    st_d, st_q = pis
    u_d, st_d = pi_step(gains.current, st_d, (i_d_ref - i_d) / bases.current, dt)
    u_q, st_q = pi_step(gains.current, st_q, (i_q_ref - i_q) / bases.current, dt)
    wL = p.omega * p.L_F
    e_d = v_cd + wL * i_q - bases.v_ac * u_d
    e_q = v_cq - wL * i_d - bases.v_ac * u_q
    return (e_d, e_q), (st_d, st_q)


def charge_mode_logic(mode: ChargingMode, v_cell: float, v_th: float, refs: ControlRefs, v_batt: float, cv_command: float = 1.0):
    """Battery power reference for the DC/DC loop.

    ``cv_command`` is the per-unit current command of the CV loop, used only
    once the session has latched into the CV phase.
    """
    mode.update(v_cell, v_th)
    if mode.phase is Phase.CV:
        return refs.v_batt_ref * refs.i_batt_ref * cv_command
    if mode.mode is Mode.CCCV:
        return v_batt * refs.i_batt_ref
    return refs.P_batt_ref


def dcdc_power_loop(P_ref: float, P_batt: float, pi: PiState, dt: float, bases: ControlBases, gains: ControlGains):
    """Duty cycle from the battery-power error; returns ``(delta, new_state)``."""
    st = pi if pi.limits is not None else replace(pi, limits=DUTY_LIMITS)
    return pi_step(gains.power, st, (P_ref - P_batt) / bases.power, dt)


@dataclass
class ControllerConfig:
    gains: ControlGains = field(default_factory=ControlGains)
    duty_limits: tuple[float, float] = DUTY_LIMITS
