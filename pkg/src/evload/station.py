"""dq-frame average model of the fast-charging station hardware.

Covers the ideal tap-changing transformer, the R_F-L_F filter, the AC/DC
converter (internal source e_d + j e_q and a lossless power coupler to the DC
link), the DC link capacitor and a buck-type DC/DC average model.

Power convention: dq quantities are per-phase RMS-magnitude phasors and the
station power is the three-phase total ``P = 3 (v_d i_d + v_q i_q)``,
``Q = 3 (v_q i_d - v_d i_q)`` (absorbed).  ``POWER_SCALE`` holds the factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, NumericalError, ValidationError

POWER_SCALE = 3.0

V_DC_MIN = 1.0  # V; below this the DC-link equation is not evaluated


@dataclass(frozen=True)
class StationParams:
    R_F: float = 3.2e-3
    L_F: float = 0.2e-3
    C_DC1: float = 1.0e-3
    L_DC: float = 0.2e-3
    C_DC2: float = 0.5e-3
    v_c_nom: float = 230.0
    P_ev_nom: float = 50_000.0
    omega: float = 2.0 * math.pi * 50.0
    tap: float = 1.0
    n_ev: int = 1

    def __post_init__(self):
        for name in ("R_F", "L_F", "C_DC1", "L_DC", "C_DC2", "v_c_nom", "P_ev_nom", "omega"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if not self.tap > 0:
            raise ValidationError("tap must be positive")
        if int(self.n_ev) != self.n_ev or self.n_ev < 1:
            raise ValidationError("n_ev must be an integer >= 1")

    @property
    def i_base(self) -> float:
        """Rated AC current magnitude (A) at rated voltage and power."""
        return self.P_ev_nom / (POWER_SCALE * self.v_c_nom)


@dataclass
class StationState:
    i_d: float = 0.0
    i_q: float = 0.0
    v_dc: float = 800.0
    i_L: float = 0.0
    v_dc2: float = 400.0
    e_d: float = 0.0
    e_q: float = 0.0
    delta: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValidationError("duty cycle must lie in [0, 1]")


@dataclass
class AcPort:
    v_cd: float
    v_cq: float = 0.0
    i_inj_d: float = 0.0
    i_inj_q: float = 0.0
    P_ev: float = 0.0
    Q_ev: float = 0.0


def ac_power(v_d, v_q, i_d, i_q):
    """Three-phase (P, Q) absorbed for dq voltage and current."""
    return POWER_SCALE * (v_d * i_d + v_q * i_q), POWER_SCALE * (v_q * i_d - v_d * i_q)


def port_from_state(s: StationState, v_cd: float, v_cq: float = 0.0) -> AcPort:
    P, Q = ac_power(v_cd, v_cq, s.i_d, s.i_q)
    return AcPort(v_cd, v_cq, s.i_d, s.i_q, P, Q)


def converter_power(s: StationState) -> float:
    """Power entering the AC/DC converter from the filter side."""
    return POWER_SCALE * (s.e_d * s.i_d + s.e_q * s.i_q)


def filter_loss(s: StationState, p: StationParams) -> float:
    return POWER_SCALE * p.R_F * (s.i_d**2 + s.i_q**2)


def filter_dynamics(s: StationState, port: AcPort, p: StationParams):
    """(d i_d/dt, d i_q/dt) of the R_F-L_F filter in the dq frame."""
    wL = p.omega * p.L_F
    did = (port.v_cd - p.R_F * s.i_d + wL * s.i_q - s.e_d) / p.L_F
    diq = (port.v_cq - p.R_F * s.i_q - wL * s.i_d - s.e_q) / p.L_F
    return did, diq


def dc_link_dynamics(s: StationState, p: StationParams, P_conv: float, i_into_dcdc: float | None = None):
    """d v_dc/dt; the AC/DC converter injects ``P_conv / v_dc`` into the link.

    ``i_into_dcdc`` defaults to the buck input current ``delta * i_L``.
    """
    if s.v_dc <= V_DC_MIN:
        raise NumericalError(f"DC-link voltage {s.v_dc!r} V too low for the power-coupler model")
    i_out = s.delta * s.i_L if i_into_dcdc is None else i_into_dcdc
    return (P_conv / s.v_dc - i_out) / p.C_DC1


def dcdc_average_dynamics(s: StationState, p: StationParams, i_batt: float):
    """(d i_L/dt, d v_dc2/dt) of the buck average model; the pack sits across C_DC2."""
    if not 0.0 <= s.delta <= 1.0:
        raise DomainError("duty cycle must lie in [0, 1]")
    di_L = (s.delta * s.v_dc - s.v_dc2) / p.L_DC
    dv2 = (s.i_L - i_batt) / p.C_DC2
    return di_L, dv2


def fleet_injection(single_ev_current, n_ev: int):
    """Grid-side current of ``n_ev`` identical EVs fed by one station model."""
    if int(n_ev) != n_ev or n_ev < 1:
        raise DomainError("n_ev must be an integer >= 1")
    i_d, i_q = single_ev_current
    return n_ev * i_d, n_ev * i_q


def set_tap(p: StationParams, new_tap: float) -> StationParams:
    if not new_tap > 0:
        raise DomainError("tap ratio must be positive")
    return replace(p, tap=float(new_tap))


def terminal_voltage(p: StationParams, v_grid_pu) -> np.ndarray | float:
    """Converter-side voltage magnitude for a grid-side magnitude in per unit.

    The transformer ratio maps 1 pu to ``v_c_nom``; ``tap`` scales it.
    """
    return p.tap * p.v_c_nom * v_grid_pu
