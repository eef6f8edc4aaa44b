"""Static sweep driver: station power over terminal voltage and initial SOC."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConvergenceError, DomainError


def default_sweep_grid():
    """13 voltage ratios over [0.85, 1.15] and soc0 = 0.1, 0.2, ..., 0.9."""
    return np.round(np.linspace(0.85, 1.15, 13), 10), np.round(np.arange(1, 10) / 10.0, 10)


@dataclass
class SweepDataset:
    v_ratio: np.ndarray
    soc0: np.ndarray
    p_norm: np.ndarray  # P_ev / P_ev_nom, NaN where the point failed
    failures: list = field(default_factory=list)

    def rows(self):
        ok = np.isfinite(self.p_norm)
        return list(zip(self.v_ratio[ok], self.soc0[ok], self.p_norm[ok]))

    def spread(self, v_ratio: float = 1.0) -> float:
        """max - min of normalized power over soc0 at one voltage ratio."""
        sel = np.isclose(self.v_ratio, v_ratio) & np.isfinite(self.p_norm)
        if not np.any(sel):
            raise DomainError(f"voltage ratio {v_ratio} not in the dataset")
        return float(np.ptp(self.p_norm[sel]))


def sweep_voltage_soc(ev, v_ratios, soc0s) -> SweepDataset:
    """Steady-state normalized power for every (v_ratio, soc0) pair.

    The voltage ratio is applied through the transformer tap, i.e. as the
    terminal voltage seen by the station.  Failed points are recorded and
    left as NaN.
    """
    v_ratios = np.asarray(v_ratios, dtype=float)
    soc0s = np.asarray(soc0s, dtype=float)
    if np.any(v_ratios < 0.85 - 1e-12) or np.any(v_ratios > 1.15 + 1e-12):
        raise DomainError("voltage ratios must lie within [0.85, 1.15]")
    if np.any(soc0s < 0.1 - 1e-12) or np.any(soc0s > 0.9 + 1e-12):
        raise DomainError("soc0 values must lie within [0.1, 0.9]")
    vv, ss = np.meshgrid(v_ratios, soc0s)
    vv, ss = vv.ravel(), ss.ravel()
    p = np.full(vv.size, np.nan)
    failures = []
    for k, (v, s) in enumerate(zip(vv, ss)):
        try:
            p[k] = ev.power_at(v, s)[0] / ev.station.P_ev_nom
        except (ConvergenceError, DomainError) as exc:
            failures.append((float(v), float(s), str(exc)))
    return SweepDataset(vv, ss, p, failures)


# ------------------------------------------------------------------ VFLM
def default_frequency_grid():
    """60 log-spaced frequencies from 0.01 Hz to 200 Hz."""
    return np.logspace(-2, np.log10(200.0), 60)


@dataclass
class VflmExtraction:
    models: dict  # order -> VflmParams
    reports: dict  # order -> FitReport
    response: object  # sampled G(jw)
    linear: object  # LinearResponse of the station
    record: object  # StepRecord used for the exponents and time-domain error


def extract_vflm(ev, soc0: float = 0.1, orders=(1, 2, 3, 4), freqs_hz=None, step: float = -0.03,
                 vm: float = 1.0) -> VflmExtraction:
    """Fit VFLMs of the requested orders to one station at ``soc0``.

    G(jw) comes from the linearized station; the exponents and the
    time-domain error come from a simulated tap step of size ``step``
    starting from terminal voltage ``vm``.
    """
    from ..vfit import extract_gs, fit_vflm
    from .simulate import station_step

    freqs = default_frequency_grid() if freqs_hz is None else np.asarray(freqs_hz, dtype=float)
    G, lin = extract_gs(ev, soc0, freqs, vm=vm)
    rec = station_step(ev, soc0, step=step, vm0=vm)
    models, reports = fit_vflm(G, rec.as_tuple(), orders)
    return VflmExtraction(models, reports, G, lin, rec)


# ------------------------------------------------------- overload (static)
@dataclass(frozen=True)
class OverloadRow:
    representation: str
    chemistry: str
    mode: str
    soc0: float
    line_current: float  # pu, monitored branch, from end
    losses_mw: float
    current_change: float  # relative to the constant-PQ base case
    loss_change: float
    converged: bool


def overload_static_study(case, lam: float = 0.2, chemistries=("LFP", "LMO", "NCA", "NMC"), modes=("CCCV", "CPCV"),
                          soc0s=(0.1, 0.3, 0.5, 0.7, 0.9), representations=("static", "detailed"),
                          branch=(1, 2)) -> list:
    """Power flows of the overloaded case for every fleet variant, relative to constant-PQ fleets."""
    from ..grid import FleetSpec, apply_overload, solve_power_flow

    def run(spec):
        c = apply_overload(case, lam, spec)
        pf = solve_power_flow(c)
        return pf.branch_current(c, *branch), pf.losses_mw, pf.converged

    I0, L0, ok0 = run(FleetSpec("pq"))
    rows = [OverloadRow("pq", "-", "-", float("nan"), I0, L0, 0.0, 0.0, ok0)]
    for rep in representations:
        for chem in chemistries:
            for mode in modes:
                for s in soc0s:
                    I, L, ok = run(FleetSpec(rep, chem, mode, s))
                    rows.append(OverloadRow(rep, chem, mode, float(s), I, L, I / I0 - 1.0, L / L0 - 1.0, ok))
    return rows
