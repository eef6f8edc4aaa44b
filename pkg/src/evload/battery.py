"""Li-ion cell and battery pack model.

The cell is an OCV source in series with a resistance; the pack is ``n_ser``
cells in series times ``n_par`` identical branches.  Charging current is
positive everywhere.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import lsq_linear

from ._data import data_path
from .errors import CaseFormatError, DomainError, SingularityError, ValidationError

# Reference vehicle: 75 kWh pack at an assumed 400 V nominal DC voltage.
V_EV_NOM = 400.0
E_EV_NOM = 75_000.0


class Chemistry(str, enum.Enum):
    LFP = "LFP"
    LMO = "LMO"
    NCA = "NCA"
    NMC = "NMC"

    @classmethod
    def parse(cls, value) -> "Chemistry":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise DomainError(f"unknown chemistry {value!r}; expected one of {[c.value for c in cls]}") from None


@dataclass(frozen=True)
class CellParams:
    v_cell_nom: float  # V
    Q_cell: float  # Ah
    R_cell: float  # ohm
    v_th: float  # V, CC->CV switching threshold

    def __post_init__(self):
        for name in ("v_cell_nom", "Q_cell", "R_cell", "v_th"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if not self.v_th > self.v_cell_nom:
            raise ValidationError("v_th must exceed v_cell_nom")


CELL_PARAMS = {
    Chemistry.LFP: CellParams(3.20, 2.6, 0.053, 3.488),
    Chemistry.LMO: CellParams(3.70, 2.6, 0.080, 4.188),
    Chemistry.NCA: CellParams(3.60, 3.2, 0.058, 4.188),
    Chemistry.NMC: CellParams(3.60, 2.0, 0.080, 4.183),
}


@dataclass(frozen=True)
class AnalyticalOcvParams:
    """Coefficients of v = E0 - K Q (1-soc)/soc + A exp((1-soc) Q)."""

    E0: float
    K: float
    A: float
    Q: float

    def __post_init__(self):
        if not (self.E0 > 0 and self.Q > 0 and self.A >= 0 and self.K >= 0):
            raise ValidationError("E0 and Q must be positive, K and A non-negative")


@dataclass(frozen=True, eq=False)
class OcvCurve:
    """Tabulated OCV-SOC knots with a shape-preserving (PCHIP) interpolant."""

    soc: np.ndarray
    v_ocv: np.ndarray
    chemistry: Chemistry | None = None
    source: str = ""
    analytical: AnalyticalOcvParams | None = None
    analytical_max_error: float | None = None
    _interp: PchipInterpolator = field(init=False, repr=False)

    def __post_init__(self):
        soc = np.asarray(self.soc, dtype=float)
        v = np.asarray(self.v_ocv, dtype=float)
        if soc.ndim != 1 or soc.shape != v.shape:
            raise ValidationError("soc and v_ocv must be 1-D arrays of equal length")
        if soc.size < 10:
            raise ValidationError("an OCV curve needs at least 10 knots")
        if np.any(np.diff(soc) <= 0):
            raise ValidationError("soc knots must be strictly increasing")
        if soc[0] != 0.0 or soc[-1] != 1.0:
            raise ValidationError("soc knots must cover [0, 1]")
        if np.any(np.diff(v) < 0):
            raise ValidationError("v_ocv must be non-decreasing in soc")
        object.__setattr__(self, "soc", soc)
        object.__setattr__(self, "v_ocv", v)
        object.__setattr__(self, "_interp", PchipInterpolator(soc, v, extrapolate=False))

    def __call__(self, soc):
        return ocv_lookup(self, soc)


def ocv_lookup(curve: OcvCurve, soc):
    """Open-circuit voltage at ``soc`` (scalar or array in [0, 1])."""
    s = np.asarray(soc, dtype=float)
    if np.any(~np.isfinite(s)) or np.any(s < 0.0) or np.any(s > 1.0):
        raise DomainError(f"soc must lie in [0, 1], got {soc!r}")
    out = curve._interp(s)
    return float(out) if out.ndim == 0 else out


def ocv_analytical(p: AnalyticalOcvParams, soc0):
    s = np.asarray(soc0, dtype=float)
    if np.any(s == 0.0):
        raise SingularityError("the K term of the analytical OCV diverges at soc0 = 0")
    if np.any(s < 0.0) or np.any(s > 1.0):
        raise DomainError("soc0 must lie in (0, 1]")
    v = p.E0 - p.K * (1.0 - s) / s * p.Q + p.A * np.exp((1.0 - s) * p.Q)
    return float(v) if v.ndim == 0 else v


def fit_analytical_ocv(curve: OcvCurve, Q: float, soc_range=(0.05, 1.0), n_points=400):
    """Least-squares (E0, K, A) for a fixed capacity ``Q``.

    The model is linear in the three coefficients, so the fit is a bounded
    linear least-squares problem (A, E0 kept positive).  Returns the
    parameters and the largest absolute deviation on the fit grid.
    """
    s = np.linspace(soc_range[0], soc_range[1], n_points)
    v = ocv_lookup(curve, s)
    basis = np.column_stack([np.ones_like(s), -Q * (1.0 - s) / s, np.exp((1.0 - s) * Q)])
    res = lsq_linear(basis, v, bounds=([1e-6, -np.inf, 1e-12], [np.inf, np.inf, np.inf]), method="bvls")
    E0, K, A = res.x
    params = AnalyticalOcvParams(float(E0), float(K), float(A), float(Q))
    max_err = float(np.max(np.abs(basis @ res.x - v)))
    return params, max_err


def cell_terminal_voltage(curve: OcvCurve, r_cell: float, soc, i_cell):
    """Cell voltage with the ohmic rise of a charging (positive) current."""
    return ocv_lookup(curve, soc) + r_cell * i_cell


@dataclass(frozen=True)
class PackConfig:
    n_ser: int
    n_par: int
    chemistry: Chemistry

    def __post_init__(self):
        if self.n_ser < 1 or self.n_par < 1:
            raise ValidationError("pack needs at least one cell in series and one branch")

    def capacity_ah(self, cell: CellParams) -> float:
        return self.n_par * cell.Q_cell

    def resistance(self, cell: CellParams) -> float:
        """Lumped pack resistance seen at the terminals."""
        return self.n_ser * cell.R_cell / self.n_par

    def nominal_energy_wh(self, cell: CellParams) -> float:
        return self.n_ser * cell.v_cell_nom * self.n_par * cell.Q_cell


def size_pack(chem: Chemistry, cell: CellParams, V_ev_nom: float = V_EV_NOM, E_ev_nom: float = E_EV_NOM) -> PackConfig:
    if not (V_ev_nom > 0 and E_ev_nom > 0):
        raise DomainError("pack voltage and energy must be positive")
    n_ser = int(round(V_ev_nom / cell.v_cell_nom))
    n_par = int(round(E_ev_nom / (V_ev_nom * cell.Q_cell)))
    return PackConfig(n_ser, n_par, Chemistry.parse(chem))


@dataclass(frozen=True)
class PackState:
    soc: float
    i_batt: float
    v_batt: float
    v_cell: float
    i_cell: float
    soc_clamped: bool = False


def pack_state(pack: PackConfig, cell: CellParams, curve: OcvCurve, soc: float, i_batt: float) -> PackState:
    soc_c, hit = clamp_soc(soc)
    i_cell = i_batt / pack.n_par
    v_cell = cell_terminal_voltage(curve, cell.R_cell, soc_c, i_cell)
    return PackState(soc_c, i_batt, pack.n_ser * v_cell, v_cell, i_cell, hit)


def soc_derivative(pack: PackConfig, cell: CellParams, i_batt):
    """Coulomb counting: d(soc)/dt in 1/s for pack current ``i_batt``."""
    return i_batt / (3600.0 * pack.n_par * cell.Q_cell)


def clamp_soc(soc):
    """Clamp to [0, 1]; the flag reports whether a bound was hit."""
    if soc < 0.0:
        return 0.0, True
    if soc > 1.0:
        return 1.0, True
    return float(soc), False


# ---------------------------------------------------------------- data files

_HEADER_RE = re.compile(r"^#\s*([A-Za-z0-9_]+)\s*:\s*(.*)$")


def read_ocv_file(path) -> OcvCurve:
    path = Path(path)
    meta = {}
    source_lines = []
    soc, volts = [], []
    seen_columns = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = _HEADER_RE.match(line)
                if m:
                    key = m.group(1).lower()
                    meta[key] = m.group(2).strip()
                    if key == "source":
                        source_lines.append(m.group(2).strip())
                elif source_lines:
                    source_lines.append(line.lstrip("#").strip())
                continue
            if not seen_columns:
                cols = [c.strip() for c in line.split(",")]
                if cols != ["soc", "v_ocv"]:
                    raise CaseFormatError("expected column header 'soc,v_ocv'", line=lineno, column=1, path=path)
                seen_columns = True
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise CaseFormatError("expected two comma-separated values", line=lineno, column=1, path=path)
            try:
                soc.append(float(parts[0]))
            except ValueError:
                raise CaseFormatError(f"bad soc value {parts[0]!r}", line=lineno, column=1, path=path) from None
            try:
                volts.append(float(parts[1]))
            except ValueError:
                raise CaseFormatError(f"bad v_ocv value {parts[1]!r}", line=lineno, column=len(parts[0]) + 2, path=path) from None
    if "chemistry" not in meta:
        raise CaseFormatError("missing '# chemistry:' header line", line=1, path=path)
    analytical, max_err = None, None
    if "analytical" in meta:
        fields = dict(kv.split("=") for kv in meta["analytical"].replace(",", " ").split())
        analytical = AnalyticalOcvParams(float(fields["E0"]), float(fields["K"]), float(fields["A"]), float(fields["Q"]))
        max_err = float(fields["max_err"])
    return OcvCurve(
        np.array(soc),
        np.array(volts),
        chemistry=Chemistry.parse(meta["chemistry"]),
        source=" ".join(source_lines),
        analytical=analytical,
        analytical_max_error=max_err,
    )


def write_ocv_file(curve: OcvCurve, path, version: int = 1) -> None:
    lines = [f"# chemistry: {curve.chemistry.value}"]
    words = curve.source.split()
    chunk = []
    first = True
    for w in words:
        chunk.append(w)
        if len(" ".join(chunk)) > 85:
            lines.append(("# source: " if first else "#   ") + " ".join(chunk))
            chunk, first = [], False
    if chunk:
        lines.append(("# source: " if first else "#   ") + " ".join(chunk))
    lines.append(f"# version: {version}")
    if curve.analytical is not None:
        a = curve.analytical
        lines.append(
            f"# analytical: E0={a.E0:.10g} K={a.K:.10g} A={a.A:.10g} Q={a.Q:.10g} max_err={curve.analytical_max_error:.6g}"
        )
    lines.append("soc,v_ocv")
    lines += [f"{s:.3f},{v:.3f}" for s, v in zip(curve.soc, curve.v_ocv)]
    Path(path).write_text("\n".join(lines) + "\n")


@lru_cache(maxsize=None)
def load_ocv_curve(chem) -> OcvCurve:
    chem = Chemistry.parse(chem)
    return read_ocv_file(data_path(f"ocv_{chem.value.lower()}.csv"))


def refresh_analytical_fits() -> None:
    """Refit the analytical OCV coefficients and rewrite them into the bundled tables."""
    for chem in Chemistry:
        path = data_path(f"ocv_{chem.value.lower()}.csv")
        curve = read_ocv_file(path)
        params, max_err = fit_analytical_ocv(curve, CELL_PARAMS[chem].Q_cell)
        fitted = OcvCurve(curve.soc, curve.v_ocv, chem, curve.source, params, max_err)
        write_ocv_file(fitted, path)
    load_ocv_curve.cache_clear()


def reference_pack(chem) -> tuple[PackConfig, CellParams, OcvCurve]:
    chem = Chemistry.parse(chem)
    cell = CELL_PARAMS[chem]
    return size_pack(chem, cell), cell, load_ocv_curve(chem)


def pack_one_c_current(pack: PackConfig, cell: CellParams) -> float:
    return pack.n_par * cell.Q_cell


__all__ = [
    "Chemistry",
    "CellParams",
    "CELL_PARAMS",
    "AnalyticalOcvParams",
    "OcvCurve",
    "PackConfig",
    "PackState",
    "ocv_lookup",
    "ocv_analytical",
    "fit_analytical_ocv",
    "cell_terminal_voltage",
    "size_pack",
    "soc_derivative",
    "clamp_soc",
    "pack_state",
    "read_ocv_file",
    "write_ocv_file",
    "load_ocv_curve",
    "reference_pack",
    "V_EV_NOM",
    "E_EV_NOM",
]
