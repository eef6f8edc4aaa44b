"""Overload stability sweep: power flow, linearization and eigenvalues per λ."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..control import ControlGains
from ..detailed import DetailedEV
from ..errors import ConvergenceError, DomainError, EvLoadError, ValidationError
from ..grid import FleetSpec, GridCase, Representation, apply_overload, solve_power_flow
from ..loadmodels import VflmParams
from ..vfit import VfConfig, extract_gs, fit_residues, vector_fit
from .network import NetworkDae
from .smallsignal import EigResult, eigen_analysis, linearize


@dataclass
class SweepResult:
    """σ_M over λ for one representation and one PI1 integral gain."""

    lambdas: np.ndarray
    sigma_M: np.ndarray  # NaN where the point failed
    representation: Representation
    ki_pi1: float
    eig: list = field(default_factory=list)  # EigResult or None per point
    failures: list = field(default_factory=list)  # (lambda, message)

    def __post_init__(self):
        if np.any(np.diff(self.lambdas) <= 0):
            raise ValidationError("λ values must be strictly increasing")

    def threshold(self) -> float | None:
        """First λ where σ_M turns non-negative, linearly interpolated; None if it never does."""
        s, lam = self.sigma_M, self.lambdas
        for k in range(1, s.size):
            if np.isfinite(s[k - 1]) and np.isfinite(s[k]) and s[k - 1] < 0 <= s[k]:
                return float(lam[k - 1] - s[k - 1] * (lam[k] - lam[k - 1]) / (s[k] - s[k - 1]))
        if s.size and np.isfinite(s[0]) and s[0] >= 0:
            return float(lam[0])
        return None

    def rows(self):
        return [(float(l), float(s)) for l, s in zip(self.lambdas, self.sigma_M)]


@lru_cache(maxsize=512)
def station_vflm(chemistry: str, mode: str, soc0: float, ki_pi1: float, order: int = 2, vm: float = 1.0):
    """Fitted VFLM of one station for the given PI1 gain, identified at terminal voltage ``vm`` (cached)."""
    ev = DetailedEV(chemistry, mode, gains=ControlGains().with_ki_pi1(ki_pi1))
    return linear_vflm(ev, soc0, order, vm)


def linear_vflm(ev: DetailedEV, soc0: float, order: int = 2, vm: float = 1.0, freqs_hz=None) -> VflmParams:
    """VFLM whose exponents are the exact small-signal ones of the linearized station.

    This skips the time-domain step record, which makes it cheap enough to
    identify one model per fleet and operating point.
    """
    from .studies import default_frequency_grid

    freqs = default_frequency_grid() if freqs_hz is None else freqs_hz
    G, lin = extract_gs(ev, soc0, freqs, vm=vm)
    tf, _ = vector_fit(G, VfConfig(order=order))
    tf = fit_residues(G, tf.poles, dc_gain=1.0)
    return VflmParams(lin.N_t, lin.N_s, tf, lin.P0, lin.v0)


def build_dae(case: GridCase, lam: float, spec: FleetSpec, ki_pi1: float, vflm=None,
              vflm_at_bus_voltage: bool = True, vflm_order: int = 2) -> NetworkDae:
    """Overloaded case at ``lam`` → power flow → initialized network DAE.

    VFLM fleets without explicit models get one identified at their own
    power-flow bus voltage (or at 1 pu when ``vflm_at_bus_voltage`` is off).
    """
    c = apply_overload(case, lam, spec)
    rep = Representation.parse(spec.representation)
    pf = solve_power_flow(c, ki_pi1=ki_pi1)
    if not pf.converged:
        raise ConvergenceError(f"power flow did not converge at λ = {lam}", iterations=pf.iterations, residual=pf.mismatch)
    if rep is Representation.VFLM and vflm is None:
        args = (str(spec.chemistry.value if hasattr(spec.chemistry, "value") else spec.chemistry),
                str(spec.mode.value if hasattr(spec.mode, "value") else spec.mode), float(spec.soc0), float(ki_pi1), vflm_order)
        if vflm_at_bus_voltage:
            idx = c.bus_index
            vflm = {a.bus: station_vflm(*args, vm=round(float(pf.vm[idx[a.bus]]), 6)) for a in c.fleets if a.n_ev}
        else:
            vflm = station_vflm(*args)
    return NetworkDae(c, pf, ki_pi1=ki_pi1, vflm=vflm)


def eigen_at(case: GridCase, lam: float, spec: FleetSpec, ki_pi1: float, vflm=None, **kw) -> EigResult:
    dae = build_dae(case, lam, spec, ki_pi1, vflm, **kw)
    return eigen_analysis(linearize(dae), dae.state_names())


def stability_sweep(case: GridCase, lambdas, spec: FleetSpec, ki_values=(1000.0,), vflm=None, **kw) -> dict:
    """σ_M(λ) per PI1 integral gain; returns ``{k_i: SweepResult}``.

    Points that fail are recorded and the sweep continues.  For constant-PQ
    fleets the station gains play no role, yet a result is still produced
    per ``k_i`` so that tables line up.  Extra keywords go to ``build_dae``.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas < 0):
        raise DomainError("λ must be non-negative")
    rep = Representation.parse(spec.representation)
    out = {}
    for ki in ki_values:
        sig = np.full(lambdas.size, np.nan)
        eigs, fails = [], []
        model = vflm.get(ki) if isinstance(vflm, dict) else vflm
        for k, lam in enumerate(lambdas):
            try:
                r = eigen_at(case, float(lam), spec, float(ki), model, **kw)
                sig[k] = r.sigma_M
                eigs.append(r)
            except (EvLoadError, np.linalg.LinAlgError) as exc:
                eigs.append(None)
                fails.append((float(lam), str(exc)))
        out[ki] = SweepResult(lambdas, sig, rep, float(ki), eigs, fails)
    return out
