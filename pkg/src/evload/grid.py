"""Network data, case files, EV fleet attachment and Newton-Raphson power flow.

Case files are plain text split into ``[section]`` blocks.  Each block is a
small CSV table whose first row names the columns (see the bundled
``ieee14.case``).  Recognised sections: ``system`` (key,value rows), ``bus``,
``branch``, ``generator``, ``load``, ``machine`` and ``avr``.  Optional
generator columns ``q_min_mvar``/``q_max_mvar`` switch on reactive-limit
enforcement for that generator.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from ._data import data_path
from .battery import Chemistry
from .control import Mode
from .errors import CaseFormatError, ConvergenceError, DomainError, NumericalError, ValidationError

# ------------------------------------------------------------------ types


class BusType(str, enum.Enum):
    SLACK = "slack"
    PV = "PV"
    PQ = "PQ"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        v = str(value).strip()
        for member in cls:
            if member.value.lower() == v.lower():
                return member
        raise ValueError(f"unknown bus type {value!r}")


@dataclass(frozen=True)
class Bus:
    id: int
    type: BusType
    v_nom_kv: float
    v_set: float = 1.0
    g_sh_mw: float = 0.0
    b_sh_mvar: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0
    tap: float = 1.0


@dataclass(frozen=True)
class Generator:
    bus: int
    p_mw: float
    q_min_mvar: float | None = None
    q_max_mvar: float | None = None


@dataclass(frozen=True)
class Load:
    bus: int
    p_mw: float
    q_mvar: float


@dataclass(frozen=True)
class Machine:
    bus: int
    s_mva: float
    h: float
    d: float
    ra: float
    xd: float
    xq: float
    xd1: float
    xq1: float
    td01: float
    tq01: float


@dataclass(frozen=True)
class Avr:
    bus: int
    ka: float
    ta: float


class Representation(str, enum.Enum):
    PQ = "pq"
    STATIC = "static"
    DETAILED = "detailed"
    VFLM = "vflm"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"const_pq": "pq", "static_model": "static"}
        v = str(value).strip().lower()
        return cls(aliases.get(v, v))


@dataclass(frozen=True)
class FleetAttachment:
    bus: int
    representation: Representation
    chemistry: Chemistry
    mode: Mode
    soc0: float
    n_ev: int
    lam: float
    p_nom_mw: float  # the load this fleet is scaled from

    def __post_init__(self):
        if self.n_ev < 0:
            raise ValidationError("n_ev must be non-negative")
        if not 0.0 < self.soc0 <= 1.0:
            raise ValidationError("soc0 must lie in (0, 1]")


@dataclass(frozen=True)
class FleetSpec:
    """Defaults used when fleets are generated from an overload factor."""

    representation: Representation = Representation.PQ
    chemistry: Chemistry = Chemistry.LFP
    mode: Mode = Mode.CPCV
    soc0: float = 0.1
    P_ev_nom: float = 50_000.0


@dataclass(frozen=True)
class GridCase:
    base_mva: float
    frequency_hz: float
    buses: tuple
    branches: tuple
    generators: tuple
    loads: tuple
    machines: tuple = ()
    avrs: tuple = ()
    fleets: tuple = ()
    name: str = ""

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate bus ids")
        n_slack = sum(b.type is BusType.SLACK for b in self.buses)
        if n_slack != 1:
            raise ValidationError(f"exactly one slack bus required, found {n_slack}")
        known = set(ids)
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise ValidationError(f"branch {br.from_bus}-{br.to_bus} references an unknown bus")
            if br.tap <= 0:
                raise ValidationError("branch tap must be positive")
        for item in (*self.generators, *self.loads, *self.machines, *self.avrs, *self.fleets):
            if item.bus not in known:
                raise ValidationError(f"{type(item).__name__} at unknown bus {item.bus}")
        for ld in self.loads:
            if ld.p_mw < 0:
                raise ValidationError("load P_nom must be non-negative")
        if not _connected(ids, self.branches):
            raise ValidationError("network graph is not connected")

    @property
    def bus_index(self) -> dict:
        return {b.id: k for k, b in enumerate(self.buses)}

    @property
    def slack(self) -> Bus:
        return next(b for b in self.buses if b.type is BusType.SLACK)


def _connected(ids, branches) -> bool:
    parent = {i: i for i in ids}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for br in branches:
        parent[find(br.from_bus)] = find(br.to_bus)
    return len({find(i) for i in ids}) <= 1


# ---------------------------------------------------------------- case I/O

_SECTIONS = {
    "bus": (Bus, {"id": "id", "type": "type", "v_nom_kv": "v_nom_kv", "v_set": "v_set", "g_sh_mw": "g_sh_mw", "b_sh_mvar": "b_sh_mvar"}),
    "branch": (Branch, {"from": "from_bus", "to": "to_bus", "r": "r", "x": "x", "b": "b", "tap": "tap"}),
    "generator": (Generator, {"bus": "bus", "p_mw": "p_mw", "q_min_mvar": "q_min_mvar", "q_max_mvar": "q_max_mvar"}),
    "load": (Load, {"bus": "bus", "p_mw": "p_mw", "q_mvar": "q_mvar"}),
    "machine": (Machine, {f.name: f.name for f in fields(Machine)}),
    "avr": (Avr, {f.name: f.name for f in fields(Avr)}),
}
_INT_FIELDS = {"id", "bus", "from_bus", "to_bus"}


def _convert(name, raw):
    if name == "type":
        return BusType.parse(raw)
    if name in _INT_FIELDS:
        return int(raw)
    return float(raw)


def parse_case(text: str, path=None) -> GridCase:
    sections: dict[str, list] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise CaseFormatError("unterminated section header", line=lineno, column=len(raw), path=path)
            current = line[1:-1].strip().lower()
            if current != "system" and current not in _SECTIONS:
                raise CaseFormatError(f"unknown section [{current}]", line=lineno, column=1, path=path)
            if current in sections:
                raise CaseFormatError(f"duplicate section [{current}]", line=lineno, column=1, path=path)
            sections[current] = []
            continue
        if current is None:
            raise CaseFormatError("data outside of any section", line=lineno, column=1, path=path)
        sections[current].append((lineno, raw))

    system = {"base_mva": 100.0, "frequency_hz": 60.0, "name": ""}
    for lineno, raw in sections.get("system", [])[1:]:
        cells = next(csv.reader([raw]))
        if len(cells) != 2:
            raise CaseFormatError("system rows need exactly key,value", line=lineno, column=1, path=path)
        key, value = (c.strip() for c in cells)
        if key not in system:
            raise CaseFormatError(f"unknown system key {key!r}", line=lineno, column=1, path=path)
        try:
            system[key] = value if key == "name" else float(value)
        except ValueError:
            raise CaseFormatError(f"bad number {value!r}", line=lineno, column=raw.index(",") + 2, path=path) from None

    tables = {}
    for name, (cls, colmap) in _SECTIONS.items():
        rows = sections.get(name)
        if rows is None:
            if name in ("bus", "branch"):
                raise CaseFormatError(f"missing section [{name}]", path=path)
            tables[name] = ()
            continue
        if not rows:
            raise CaseFormatError(f"section [{name}] has no header row", path=path)
        hline, hraw = rows[0]
        header = [h.strip() for h in next(csv.reader([hraw]))]
        for col, h in enumerate(header, start=1):
            if h not in colmap:
                raise CaseFormatError(f"unknown column {h!r} in [{name}]", line=hline, column=col, path=path)
        items = []
        for lineno, raw in rows[1:]:
            cells = next(csv.reader([raw]))
            if len(cells) != len(header):
                raise CaseFormatError(f"expected {len(header)} columns, got {len(cells)}", line=lineno, column=1, path=path)
            kwargs = {}
            offset = 0
            for col, (h, cell) in enumerate(zip(header, cells), start=1):
                cell = cell.strip()
                offset_col = raw.find(cell, offset) + 1 if cell else col
                offset = max(offset, offset_col)
                if cell == "":
                    continue
                try:
                    kwargs[colmap[h]] = _convert(colmap[h], cell)
                except ValueError:
                    raise CaseFormatError(f"bad value {cell!r} for {h}", line=lineno, column=offset_col, path=path) from None
            try:
                items.append(cls(**kwargs))
            except TypeError as exc:
                raise CaseFormatError(str(exc), line=lineno, column=1, path=path) from None
        tables[name] = tuple(items)
    return GridCase(
        base_mva=system["base_mva"],
        frequency_hz=system["frequency_hz"],
        buses=tables["bus"],
        branches=tables["branch"],
        generators=tables["generator"],
        loads=tables["load"],
        machines=tables["machine"],
        avrs=tables["avr"],
        name=str(system["name"]),
    )


def load_case(path=None) -> GridCase:
    """Read a case file; with no argument the bundled IEEE 14-bus case."""
    path = Path(path) if path is not None else data_path("ieee14.case")
    try:
        text = path.read_text()
    except OSError as exc:
        raise CaseFormatError(f"cannot read case file: {exc.strerror}", path=path) from None
    return parse_case(text, path)


def _fmt(v):
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def format_case(case: GridCase) -> str:
    out = io.StringIO()
    out.write("[system]\nkey,value\n")
    out.write(f"name,{case.name}\nbase_mva,{case.base_mva!r}\nfrequency_hz,{case.frequency_hz!r}\n")
    tables = {
        "bus": case.buses,
        "branch": case.branches,
        "generator": case.generators,
        "load": case.loads,
        "machine": case.machines,
        "avr": case.avrs,
    }
    for name, items in tables.items():
        if not items and name not in ("bus", "branch"):
            continue
        _, colmap = _SECTIONS[name]
        cols = list(colmap)
        if name == "generator" and all(g.q_min_mvar is None and g.q_max_mvar is None for g in items):
            cols = ["bus", "p_mw"]
        out.write(f"\n[{name}]\n{','.join(cols)}\n")
        for item in items:
            out.write(",".join(_fmt(getattr(item, colmap[c])) for c in cols) + "\n")
    return out.getvalue()


def write_case(case: GridCase, path) -> None:
    Path(path).write_text(format_case(case))


# ---------------------------------------------------------------- overload


def fleet_size(lam: float, p_nom_mw: float, P_ev_nom: float = 50_000.0) -> int:
    return int(round(lam * p_nom_mw * 1e6 / P_ev_nom))


def apply_overload(case: GridCase, lam: float, spec: FleetSpec = FleetSpec()) -> GridCase:
    """Attach one EV fleet per load and scale PV-bus generation by ``1 + lam``."""
    if lam < 0:
        raise DomainError("overload factor must be non-negative")
    if lam == 0:
        return replace(case, fleets=())
    fleets = tuple(
        FleetAttachment(
            bus=ld.bus,
            representation=Representation.parse(spec.representation),
            chemistry=Chemistry.parse(spec.chemistry),
            mode=Mode.parse(spec.mode),
            soc0=spec.soc0,
            n_ev=fleet_size(lam, ld.p_mw, spec.P_ev_nom),
            lam=lam,
            p_nom_mw=ld.p_mw,
        )
        for ld in case.loads
    )
    types = {b.id: b.type for b in case.buses}
    gens = tuple(replace(g, p_mw=g.p_mw * (1.0 + lam)) if types[g.bus] is BusType.PV else g for g in case.generators)
    return replace(case, generators=gens, fleets=fleets)


# ------------------------------------------------------------ fleet models


@lru_cache(maxsize=None)
def _detailed_ev(chemistry, mode, ki_pi1=None):
    from .control import ControlGains
    from .detailed import DetailedEV

    gains = ControlGains() if ki_pi1 is None else ControlGains().with_ki_pi1(ki_pi1)
    return DetailedEV(chemistry, mode, gains=gains)


@lru_cache(maxsize=None)
def static_model_for(chemistry, mode):
    """Static model fitted to the detailed station sweep (cached per chemistry and mode)."""
    from .analysis.studies import default_sweep_grid, sweep_voltage_soc
    from .vfit import fit_static

    chemistry, mode = Chemistry.parse(chemistry), Mode.parse(mode)
    ev = _detailed_ev(chemistry, mode)
    v_ratios, socs = default_sweep_grid()
    data = sweep_voltage_soc(ev, v_ratios, socs)
    kind = "ev_static" if mode is Mode.CCCV else "exp"
    rows = [(r * ev.station.v_c_nom, s, p * ev.station.P_ev_nom) for r, s, p in data.rows()]
    params, _ = fit_static(rows, kind, ev.station.P_ev_nom, ev.station.v_c_nom)
    return params


def single_ev_power(att: FleetAttachment, vm: float, ki_pi1=None) -> float:
    """Steady-state power (W) of one EV of the fleet at bus voltage ``vm`` (pu)."""
    from .loadmodels import EvStaticParams, ev_static_power, exp_power

    rep = att.representation
    if rep is Representation.PQ:
        return att.lam * att.p_nom_mw * 1e6 / max(att.n_ev, 1)
    if rep is Representation.STATIC:
        p = static_model_for(att.chemistry, att.mode)
        if isinstance(p, EvStaticParams):
            return ev_static_power(p, vm * p.v_c_nom, att.soc0)
        return exp_power(p, vm * p.v_nom)
    ev = _detailed_ev(att.chemistry, att.mode, ki_pi1)
    try:
        return ev.power_at(vm, att.soc0)[0]
    except (ConvergenceError, DomainError) as exc:
        raise ConvergenceError(f"station at bus {att.bus}: {exc}") from exc


def station_steady_state(att: FleetAttachment, v_bus: float, ki_pi1=None):
    """Fleet ``(P [W], Q [var])`` at bus voltage magnitude ``v_bus`` (pu); Q is zero."""
    if att.representation is Representation.PQ:
        return att.lam * att.p_nom_mw * 1e6, 0.0
    return att.n_ev * single_ev_power(att, v_bus, ki_pi1), 0.0


# ------------------------------------------------------------- power flow


@dataclass
class PowerFlowSolution:
    V: np.ndarray  # complex bus voltages, pu
    bus_ids: tuple
    branch_flows_from: np.ndarray  # complex, pu
    branch_flows_to: np.ndarray
    branch_current_from: np.ndarray  # magnitude, pu
    losses_mw: float
    slack_p_mw: float
    gen_p_mw: np.ndarray
    gen_q_mvar: np.ndarray
    load_p_mw: np.ndarray  # per bus, including fleets
    load_q_mvar: np.ndarray
    fleet_p_mw: np.ndarray  # per bus
    iterations: int
    converged: bool
    mismatch: float
    balance_residual_pu: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def vm(self):
        return np.abs(self.V)

    @property
    def va(self):
        return np.angle(self.V)

    def branch_current(self, case: GridCase, f: int, t: int) -> float:
        for k, br in enumerate(case.branches):
            if (br.from_bus, br.to_bus) == (f, t):
                return float(self.branch_current_from[k])
        raise DomainError(f"no branch {f}-{t}")


def admittance_matrix(case: GridCase):
    idx = case.bus_index
    n = len(case.buses)
    Y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        bc = 0.5j * br.b
        Y[f, f] += (ys + bc) / br.tap**2
        Y[t, t] += ys + bc
        Y[f, t] -= ys / br.tap
        Y[t, f] -= ys / br.tap
    for k, b in enumerate(case.buses):
        Y[k, k] += complex(b.g_sh_mw, b.b_sh_mvar) / case.base_mva
    return Y


def branch_matrices(case: GridCase):
    """(Yf, Yt) so that If = Yf V and It = Yt V for every branch."""
    idx = case.bus_index
    m, n = len(case.branches), len(case.buses)
    Yf = np.zeros((m, n), dtype=complex)
    Yt = np.zeros((m, n), dtype=complex)
    for k, br in enumerate(case.branches):
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        bc = 0.5j * br.b
        Yf[k, f] = (ys + bc) / br.tap**2
        Yf[k, t] = -ys / br.tap
        Yt[k, f] = -ys / br.tap
        Yt[k, t] = ys + bc
    return Yf, Yt


def bus_fleet_functions(case: GridCase, ki_pi1=None):
    """Per-bus callables ``vm -> P_fleet [pu]`` (several fleets on a bus are summed)."""
    idx = case.bus_index
    funcs: dict[int, list] = {}
    for att in case.fleets:
        if att.n_ev == 0 and att.representation is not Representation.PQ:
            continue
        funcs.setdefault(idx[att.bus], []).append(att)

    def make(atts):
        def p(vm):
            return sum(station_steady_state(a, vm, ki_pi1)[0] for a in atts) / (case.base_mva * 1e6)

        return p

    return {k: make(v) for k, v in funcs.items()}


def solve_power_flow(case: GridCase, tol: float = 1e-8, max_iter: int = 30, ki_pi1=None, v0=None) -> PowerFlowSolution:
    """Polar Newton-Raphson from a flat start (or ``v0``).

    Voltage-dependent fleet powers are evaluated at every iterate and their
    voltage derivative enters the Jacobian diagonal.  Raises
    ``ConvergenceError`` naming the worst bus when the mismatch stays above
    ``tol``.
    """
    idx = case.bus_index
    n = len(case.buses)
    base = case.base_mva
    Y = admittance_matrix(case)
    types = [b.type for b in case.buses]
    p_gen = np.zeros(n)
    for g in case.generators:
        p_gen[idx[g.bus]] += g.p_mw / base
    p_load = np.zeros(n)
    q_load = np.zeros(n)
    for ld in case.loads:
        p_load[idx[ld.bus]] += ld.p_mw / base
        q_load[idx[ld.bus]] += ld.q_mvar / base
    fleet_fns = bus_fleet_functions(case, ki_pi1)
    qlim = {}
    for g in case.generators:
        if g.q_min_mvar is not None or g.q_max_mvar is not None:
            lo = -math.inf if g.q_min_mvar is None else g.q_min_mvar / base
            hi = math.inf if g.q_max_mvar is None else g.q_max_mvar / base
            qlim[idx[g.bus]] = (lo, hi)

    vm = np.ones(n)
    va = np.zeros(n)
    for k, b in enumerate(case.buses):
        if b.type is not BusType.PQ:
            vm[k] = b.v_set
    if v0 is not None:
        vm, va = np.abs(v0).astype(float), np.angle(v0).astype(float)
    q_fixed = np.zeros(n)  # injected Q at buses switched to PQ by limits
    is_pq = np.array([t is BusType.PQ for t in types])
    is_slack = np.array([t is BusType.SLACK for t in types])
    notes = []

    def fleet_p(vm_):
        P = np.zeros(n)
        dP = np.zeros(n)
        for k, fn in fleet_fns.items():
            P[k] = fn(vm_[k])
            h = 1e-6
            dP[k] = (fn(vm_[k] + h) - fn(vm_[k] - h)) / (2 * h)
        return P, dP

    total_it = 0
    for _outer in range(len(qlim) + 1):
        pv_or_pq = ~is_slack
        for it in range(max_iter + 1):
            V = vm * np.exp(1j * va)
            S = V * np.conj(Y @ V)
            Pf, dPf = fleet_p(vm)
            dP = p_gen - p_load - Pf - S.real
            dQ = q_fixed - q_load - S.imag
            mis = np.concatenate([dP[pv_or_pq], dQ[is_pq]])
            worst = float(np.max(np.abs(mis))) if mis.size else 0.0
            if worst < tol:
                break
            if it == max_iter:
                bad = int(np.argmax(np.abs(np.concatenate([dP * pv_or_pq, dQ * is_pq])))) % n
                raise ConvergenceError(
                    f"power flow did not converge; worst mismatch {worst:.3e} pu at bus {case.buses[bad].id}",
                    iterations=total_it + it,
                    residual=worst,
                )
            # derivatives of S = V conj(YV)
            Ibus = Y @ V
            dS_dVa = 1j * np.diag(V) @ np.conj(np.diag(Ibus) - Y @ np.diag(V))
            dS_dVm = np.diag(V) @ np.conj(Y @ np.diag(np.exp(1j * va))) + np.diag(np.exp(1j * va)) @ np.diag(np.conj(Ibus))
            J11 = dS_dVa.real[np.ix_(pv_or_pq, pv_or_pq)]
            J12 = (dS_dVm.real + np.diag(dPf))[np.ix_(pv_or_pq, is_pq)]
            J21 = dS_dVa.imag[np.ix_(is_pq, pv_or_pq)]
            J22 = dS_dVm.imag[np.ix_(is_pq, is_pq)]
            J = np.block([[J11, J12], [J21, J22]])
            try:
                dx = np.linalg.solve(J, mis)
            except np.linalg.LinAlgError:
                raise NumericalError("singular power-flow Jacobian") from None
            na = int(pv_or_pq.sum())
            va[pv_or_pq] += dx[:na]
            vm[is_pq] += dx[na:]
            if np.any(vm <= 0):
                raise ConvergenceError("voltage magnitude collapsed during power flow", iterations=total_it + it)
        total_it += it
        # reactive limits
        V = vm * np.exp(1j * va)
        S = V * np.conj(Y @ V)
        q_gen = S.imag + q_load
        switched = False
        for k, (lo, hi) in qlim.items():
            if is_pq[k] or is_slack[k]:
                continue
            if q_gen[k] > hi + tol or q_gen[k] < lo - tol:
                q_fixed[k] = min(max(q_gen[k], lo), hi)
                is_pq[k] = True
                switched = True
                notes.append(f"bus {case.buses[k].id} switched to PQ at Q = {q_fixed[k] * base:.3f} MVAr")
        if not switched:
            break

    V = vm * np.exp(1j * va)
    S = V * np.conj(Y @ V)
    Pf, _ = fleet_p(vm)
    p_gen_out = np.where(is_slack, S.real + p_load + Pf, p_gen)
    q_gen_out = S.imag + q_load
    Yf, Yt = branch_matrices(case)
    If, It = Yf @ V, Yt @ V
    idx_f = [idx[br.from_bus] for br in case.branches]
    idx_t = [idx[br.to_bus] for br in case.branches]
    Sf = V[idx_f] * np.conj(If)
    St = V[idx_t] * np.conj(It)
    shunt_loss = sum(b.g_sh_mw / base * vm[k] ** 2 for k, b in enumerate(case.buses))
    losses = float(np.sum(Sf.real + St.real) + shunt_loss)
    balance = float(np.sum(p_gen_out) - np.sum(p_load + Pf) - losses)
    return PowerFlowSolution(
        V=V,
        bus_ids=tuple(b.id for b in case.buses),
        branch_flows_from=Sf,
        branch_flows_to=St,
        branch_current_from=np.abs(If),
        losses_mw=losses * base,
        slack_p_mw=float(p_gen_out[is_slack][0] * base),
        gen_p_mw=p_gen_out * base,
        gen_q_mvar=q_gen_out * base,
        load_p_mw=(p_load + Pf) * base,
        load_q_mvar=q_load * base,
        fleet_p_mw=Pf * base,
        iterations=total_it,
        converged=True,
        mismatch=worst,
        balance_residual_pu=balance,
        notes=notes,
    )


def write_power_flow_csv(case: GridCase, sol: PowerFlowSolution, outdir) -> dict:
    """Bus table, branch table and a one-row summary; returns the written paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {"bus": outdir / "powerflow_bus.csv", "branch": outdir / "powerflow_branch.csv", "summary": outdir / "powerflow_summary.csv"}
    with open(paths["bus"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bus", "vm_pu", "va_deg", "p_gen_mw", "q_gen_mvar", "p_load_mw", "q_load_mvar", "p_fleet_mw"])
        for k, bid in enumerate(sol.bus_ids):
            w.writerow([bid, f"{sol.vm[k]:.8f}", f"{math.degrees(sol.va[k]):.6f}", f"{sol.gen_p_mw[k]:.6f}", f"{sol.gen_q_mvar[k]:.6f}",
                        f"{sol.load_p_mw[k]:.6f}", f"{sol.load_q_mvar[k]:.6f}", f"{sol.fleet_p_mw[k]:.6f}"])
    with open(paths["branch"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from", "to", "p_from_mw", "q_from_mvar", "p_to_mw", "q_to_mvar", "i_from_pu"])
        for k, br in enumerate(case.branches):
            sf, st = sol.branch_flows_from[k] * case.base_mva, sol.branch_flows_to[k] * case.base_mva
            w.writerow([br.from_bus, br.to_bus, f"{sf.real:.6f}", f"{sf.imag:.6f}", f"{st.real:.6f}", f"{st.imag:.6f}", f"{sol.branch_current_from[k]:.8f}"])
    with open(paths["summary"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["losses_mw", "slack_p_mw", "iterations", "converged", "balance_residual_pu"])
        w.writerow([f"{sol.losses_mw:.6f}", f"{sol.slack_p_mw:.6f}", sol.iterations, sol.converged, f"{sol.balance_residual_pu:.3e}"])
    return paths
