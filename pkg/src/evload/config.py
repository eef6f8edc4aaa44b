"""Study configuration: YAML in, validated dataclasses out, and back.

Every key has a default, so an empty file is a valid study of the
unmodified IEEE14 case.  Unknown keys and wrongly typed values are rejected
with the dotted path of the offending entry.
"""

from __future__ import annotations

import hashlib
import json
import types
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import CaseFormatError, ValidationError

_LAMBDAS = [round(0.14 + 0.01 * k, 2) for k in range(17)]
_V_RATIOS = [round(0.85 + 0.025 * k, 3) for k in range(13)]
_SOC0S = [round(0.1 * k, 1) for k in range(1, 10)]


@dataclass
class FleetSection:
    representation: str = "pq"
    chemistry: str = "LFP"
    mode: str = "CPCV"
    soc0: float = 0.1
    P_ev_nom: float = 50_000.0
    lam: float = 0.0
    ki_pi1: list[float] = field(default_factory=lambda: [1000.0])


@dataclass
class SweepSection:
    lambdas: list[float] = field(default_factory=lambda: list(_LAMBDAS))
    v_ratios: list[float] = field(default_factory=lambda: list(_V_RATIOS))
    soc0s: list[float] = field(default_factory=lambda: list(_SOC0S))
    chemistries: list[str] = field(default_factory=lambda: ["LFP", "LMO", "NCA", "NMC"])
    modes: list[str] = field(default_factory=lambda: ["CCCV", "CPCV"])


@dataclass
class StationSection:
    """Station hardware, references and regulator gains (defaults are the benchmark values)."""

    R_F: float = 3.2e-3
    L_F: float = 0.2e-3
    C_DC1: float = 1.0e-3
    L_DC: float = 0.2e-3
    C_DC2: float = 0.5e-3
    v_c_nom: float = 230.0
    f_ac: float = 50.0
    v_dc_ref: float = 800.0
    Q_ref: float = 0.0
    P_batt_ref: float = 50_000.0
    pi1: list[float] = field(default_factory=lambda: [0.01, 1000.0])
    pi2: list[float] = field(default_factory=lambda: [0.0, 33.0])
    pi3: list[float] = field(default_factory=lambda: [0.142, 43.909])
    pi4: list[float] = field(default_factory=lambda: [0.001, 1.0])
    cv: list[float] = field(default_factory=lambda: [1.0, 50.0])


@dataclass
class PowerFlowSection:
    tol: float = 1e-10
    max_iter: int = 30
    compare_variants: bool = False


@dataclass
class TransientSection:
    lam: typing.Optional[float] = None
    t_end: float = 60.0
    h: float = 0.01
    tol: float = 1e-9
    load_bus: typing.Optional[int] = None
    size: float = 0.01
    duration: float = 0.1
    record_buses: list[int] = field(default_factory=lambda: [1])
    analyse_from: float = 20.0


@dataclass
class VflmSection:
    orders: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    order: int = 2
    step: float = -0.03
    f_min_hz: float = 0.01
    f_max_hz: float = 200.0
    n_freq: int = 60


@dataclass
class ChargeSection:
    soc0: float = 0.01
    t_max: typing.Optional[float] = None
    n_samples: int = 2000
    rtol: float = 1e-7


@dataclass
class StudyConfig:
    case: typing.Optional[str] = None
    output_dir: str = "results"
    fleet: FleetSection = field(default_factory=FleetSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    station: StationSection = field(default_factory=StationSection)
    powerflow: PowerFlowSection = field(default_factory=PowerFlowSection)
    transient: TransientSection = field(default_factory=TransientSection)
    vflm: VflmSection = field(default_factory=VflmSection)
    charge: ChargeSection = field(default_factory=ChargeSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """sha256 of the canonical JSON form; equal configs give equal digests."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def station_is_default(self) -> bool:
        return self.station == StationSection()


# ------------------------------------------------------------- conversion
def _coerce(value, tp, path: str):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path)
    if origin is list:
        if not isinstance(value, list):
            raise ValidationError(f"{path}: expected a list, got {type(value).__name__}")
        (inner,) = typing.get_args(tp)
        return [_coerce(v, inner, f"{path}[{k}]") for k, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ValidationError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, (str, int, float)) or isinstance(value, bool):
            raise ValidationError(f"{path}: expected a string, got {value!r}")
        return str(value)
    raise TypeError(f"unsupported field type {tp}")


def _build(cls, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValidationError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(map(str, data)) - names)
    if unknown:
        where = f" in {path}" if path else ""
        raise ValidationError(f"unknown key(s){where}: " + ", ".join(unknown))
    kwargs = {}
    for name, value in data.items():
        tp = hints[name]
        sub = f"{path}.{name}" if path else name
        kwargs[name] = _build(tp, value, sub) if isinstance(tp, type) and hasattr(tp, "__dataclass_fields__") else _coerce(value, tp, sub)
    return cls(**kwargs)


def _check(cfg: StudyConfig, base: Path | None) -> None:
    def sorted_nonempty(xs, path, strict=True):
        if not xs:
            raise ValidationError(f"{path}: must not be empty")
        bad = any(b <= a for a, b in zip(xs, xs[1:])) if strict else False
        if bad:
            raise ValidationError(f"{path}: values must be strictly increasing")

    f = cfg.fleet
    if f.lam < 0:
        raise ValidationError("fleet.lam: must be non-negative")
    if not 0 < f.soc0 < 1:
        raise ValidationError("fleet.soc0: must lie in (0, 1)")
    if not f.ki_pi1 or any(k <= 0 for k in f.ki_pi1):
        raise ValidationError("fleet.ki_pi1: needs at least one positive gain")
    sorted_nonempty(cfg.sweep.lambdas, "sweep.lambdas")
    if cfg.sweep.lambdas[0] < 0:
        raise ValidationError("sweep.lambdas: must be non-negative")
    sorted_nonempty(cfg.sweep.v_ratios, "sweep.v_ratios")
    sorted_nonempty(cfg.sweep.soc0s, "sweep.soc0s")
    for name in ("chemistries", "modes"):
        if not getattr(cfg.sweep, name):
            raise ValidationError(f"sweep.{name}: must not be empty")
    for name in ("pi1", "pi2", "pi3", "pi4", "cv"):
        g = getattr(cfg.station, name)
        if len(g) != 2 or min(g) < 0:
            raise ValidationError(f"station.{name}: expected [k_p, k_i] with non-negative entries")
    if cfg.transient.lam is not None and cfg.transient.lam < 0:
        raise ValidationError("transient.lam: must be non-negative")
    if not cfg.vflm.orders or min(cfg.vflm.orders) < 1 or cfg.vflm.order < 1:
        raise ValidationError("vflm: orders must be positive")
    if not 0 < cfg.vflm.f_min_hz < cfg.vflm.f_max_hz or cfg.vflm.n_freq < 2:
        raise ValidationError("vflm: frequency grid must be increasing with at least two points")
    if cfg.case is not None:
        p = Path(cfg.case)
        if not p.is_absolute() and base is not None:
            p = base / p
        if not p.exists():
            raise ValidationError(f"case: file {cfg.case} does not exist")
        cfg.case = str(p)


def config_from_dict(data: dict | None, base_dir=None) -> StudyConfig:
    """Validated config from a plain mapping; relative case paths resolve against ``base_dir``."""
    cfg = _build(StudyConfig, data, "")
    _check(cfg, Path(base_dir) if base_dir is not None else None)
    return cfg


def parse_config(path) -> StudyConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise CaseFormatError(str(getattr(exc, "problem", exc)), line=mark.line + 1 if mark else None,
                              column=mark.column + 1 if mark else None, path=path) from None
    return config_from_dict(data, path.parent)


def dump_config(cfg: StudyConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
