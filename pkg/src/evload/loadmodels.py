"""Static load models (ZIP, exponential, EV static) and the vector-fitted dynamic load model.

The dynamic model is

    P(t) = P0 * [ f1(v) + G(s) f2(v) ],   f1 = (v/v0)^N_t,   f2 = (v/v0)^N_s - (v/v0)^N_t

with ``G(s) = sum_n c_n / (s - a_n) (+ d)`` so that ``G(0) = 1`` gives the
settled response ``P0 (v/v0)^N_s`` and ``G(inf) = 0`` the instantaneous one.

Parameter files are JSON documents with a ``kind`` tag (``zip``, ``exp``,
``ev_static`` or ``vflm``) and a ``params`` map; VFLM poles and residues are
stored as ``[re, im]`` pairs.

Reactive power uses the same evaluators with a separate parameter set (for
example a ``ZipParams`` whose ``P_nom`` holds Q_nom).  EV stations run at
unity power factor, so their reactive models are identically zero.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import CaseFormatError, DomainError, SingularityError, ValidationError


# ------------------------------------------------------------------ static
@dataclass(frozen=True)
class ZipParams:
    P_nom: float
    v_nom: float
    k0: float
    k1: float
    k2: float

    def __post_init__(self):
        if not self.v_nom > 0:
            raise ValidationError("v_nom must be positive")


@dataclass(frozen=True)
class ExpParams:
    P_nom: float
    v_nom: float
    a_p: float
    b_p: float
    n_p: float

    def __post_init__(self):
        if not self.v_nom > 0:
            raise ValidationError("v_nom must be positive")


@dataclass(frozen=True)
class EvStaticParams:
    P_ev_nom: float
    v_c_nom: float
    b_p: float
    n_p: float
    c_p: float
    d_p: float
    e_p: float
    f_p: float

    def __post_init__(self):
        if not self.v_c_nom > 0:
            raise ValidationError("v_c_nom must be positive")
        if self.f_p < 0:
            raise ValidationError("f_p must be non-negative")

    @property
    def voltage_part(self):
        return self.b_p, self.n_p

    @property
    def soc_part(self):
        return self.c_p, self.d_p, self.e_p, self.f_p


def _ratio(v, v_nom):
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise DomainError("voltage must be non-negative")
    return v / v_nom


def _scalar(a):
    return float(a) if np.ndim(a) == 0 else a


def zip_power(p: ZipParams, v):
    r = _ratio(v, p.v_nom)
    return _scalar(p.P_nom * (p.k0 + p.k1 * r + p.k2 * r**2))


def exp_power(p: ExpParams, v):
    r = _ratio(v, p.v_nom)
    if p.n_p < 0 and np.any(r == 0):
        raise SingularityError("negative voltage exponent at zero voltage")
    return _scalar(p.P_nom * (p.a_p + p.b_p * r**p.n_p))


def ev_soc_term(c_p, d_p, e_p, f_p, soc0):
    s = np.asarray(soc0, dtype=float)
    if np.any(s == 0):
        raise SingularityError("the d_p term diverges at soc0 = 0")
    if np.any(s < 0) or np.any(s > 1):
        raise DomainError("soc0 must lie in (0, 1]")
    return c_p - d_p * (1.0 - s) / s + e_p * np.exp(-f_p * (1.0 - s))


def ev_static_power(p: EvStaticParams, v, soc0):
    r = _ratio(v, p.v_c_nom)
    if np.any(r == 0):
        raise SingularityError("voltage term undefined at zero voltage")
    return _scalar(p.P_ev_nom * (p.b_p * r**p.n_p + ev_soc_term(p.c_p, p.d_p, p.e_p, p.f_p, soc0)))


# ---------------------------------------------------------------- rational
@dataclass(frozen=True, eq=False)
class RationalTF:
    """Pole-residue form ``sum c_n/(s - a_n) + d`` with a real impulse response."""

    poles: np.ndarray
    residues: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.poles, dtype=complex))
        c = np.atleast_1d(np.asarray(self.residues, dtype=complex))
        if a.shape != c.shape or a.ndim != 1:
            raise ValidationError("poles and residues must be 1-D arrays of equal length")
        _check_conjugate_symmetry(a, c)
        object.__setattr__(self, "poles", a)
        object.__setattr__(self, "residues", c)
        object.__setattr__(self, "d", float(self.d))

    @property
    def order(self) -> int:
        return self.poles.size

    @property
    def is_stable(self) -> bool:
        return bool(np.all(self.poles.real < 0))

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        return np.sum(self.residues / (s[..., None] - self.poles), axis=-1) + self.d

    def dc_gain(self) -> float:
        return float(np.real(self(0.0)))

    def __eq__(self, other):
        if not isinstance(other, RationalTF):
            return NotImplemented
        return (
            np.array_equal(self.poles, other.poles)
            and np.array_equal(self.residues, other.residues)
            and self.d == other.d
        )


def _check_conjugate_symmetry(a, c, rtol=1e-9):
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    cscale = max(1e-300, float(np.max(np.abs(c)))) if c.size else 1.0
    used = np.zeros(a.size, dtype=bool)
    for k in range(a.size):
        if used[k]:
            continue
        if abs(a[k].imag) <= rtol * scale:
            if abs(c[k].imag) > 1e-7 * cscale:
                raise ValidationError("a real pole must carry a real residue")
            used[k] = True
            continue
        dist = np.abs(a - np.conj(a[k])) + np.where(used, np.inf, 0.0)
        dist[k] = np.inf
        j = int(np.argmin(dist))
        if dist[j] > 1e-7 * scale or abs(c[j] - np.conj(c[k])) > 1e-7 * cscale:
            raise ValidationError("complex poles and residues must come in conjugate pairs")
        used[k] = used[j] = True


def pole_groups(tf: RationalTF):
    """Yield ``(pole, residue, is_pair)`` once per real pole or conjugate pair (Im > 0 kept)."""
    scale = max(1.0, float(np.max(np.abs(tf.poles)))) if tf.order else 1.0
    for a, c in zip(tf.poles, tf.residues):
        if abs(a.imag) <= 1e-9 * scale:
            yield complex(a.real, 0.0), complex(c.real, 0.0), False
        elif a.imag > 0:
            yield a, c, True


@dataclass(frozen=True, eq=False)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    def freqresp(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        n = self.A.shape[0]
        out = np.empty(s.shape, dtype=complex)
        eye = np.eye(n)
        for k, sk in enumerate(s):
            out[k] = self.C @ np.linalg.solve(sk * eye - self.A, self.B) + self.D if n else self.D
        return out


def realize_tf(G: RationalTF) -> StateSpace:
    """Real block-diagonal realization: 1x1 blocks for real poles, 2x2 for pairs."""
    blocks_A, B, C = [], [], []
    for a, c, pair in pole_groups(G):
        if pair:
            blocks_A.append(np.array([[a.real, a.imag], [-a.imag, a.real]]))
            B += [1.0, 0.0]
            C += [2.0 * c.real, 2.0 * c.imag]
        else:
            blocks_A.append(np.array([[a.real]]))
            B.append(1.0)
            C.append(c.real)
    n = len(B)
    A = np.zeros((n, n))
    k = 0
    for blk in blocks_A:
        m = blk.shape[0]
        A[k : k + m, k : k + m] = blk
        k += m
    return StateSpace(A, np.array(B), np.array(C), G.d)


# -------------------------------------------------------------------- VFLM
@dataclass(frozen=True, eq=False)
class VflmParams:
    N_t: float
    N_s: float
    G: RationalTF
    P0: float
    v0: float

    def __post_init__(self):
        if not self.v0 > 0:
            raise ValidationError("v0 must be positive")
        if not self.G.is_stable:
            raise ValidationError("G(s) has a pole in the closed right half-plane")

    def f1(self, v):
        return (np.asarray(v, dtype=float) / self.v0) ** self.N_t

    def f2(self, v):
        r = np.asarray(v, dtype=float) / self.v0
        return r**self.N_s - r**self.N_t

    def scaled(self, factor: float) -> "VflmParams":
        return VflmParams(self.N_t, self.N_s, self.G, self.P0 * factor, self.v0)


def vflm_power(m: VflmParams, t, v):
    """Power response to a sampled voltage trajectory (linear interpolation between samples)."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValidationError("t and v must be 1-D arrays of equal length")
    if np.any(v <= 0):
        raise DomainError("voltage samples must be positive")
    u = m.f2(v)
    ss = realize_tf(m.G)
    if ss.A.shape[0] == 0 or t.size < 2:
        y = ss.D * u
    else:
        _, y, _ = signal.lsim((ss.A, ss.B[:, None], ss.C[None, :], np.array([[ss.D]])), u, t)
    return m.P0 * (m.f1(v) + y)


# ---------------------------------------------------------------- file I/O
_KINDS = {"zip": ZipParams, "exp": ExpParams, "ev_static": EvStaticParams}


def model_to_dict(model, meta: dict | None = None) -> dict:
    if isinstance(model, VflmParams):
        params = {
            "N_t": model.N_t,
            "N_s": model.N_s,
            "P0": model.P0,
            "v0": model.v0,
            "d": model.G.d,
            "poles": [[float(a.real), float(a.imag)] for a in model.G.poles],
            "residues": [[float(c.real), float(c.imag)] for c in model.G.residues],
        }
        kind = "vflm"
    else:
        kind = next((k for k, cls in _KINDS.items() if isinstance(model, cls)), None)
        if kind is None:
            raise ValidationError(f"unsupported model type {type(model).__name__}")
        params = asdict(model)
    out = {"kind": kind, "params": params}
    if meta:
        out["meta"] = dict(meta)
    return out


def model_from_dict(doc: dict, path=None):
    try:
        kind = doc["kind"]
        params = dict(doc["params"])
    except (KeyError, TypeError) as exc:
        raise CaseFormatError(f"missing field {exc}", path=path) from None
    if kind == "vflm":
        try:
            poles = [complex(re, im) for re, im in params.pop("poles")]
            residues = [complex(re, im) for re, im in params.pop("residues")]
            G = RationalTF(np.array(poles), np.array(residues), params.pop("d", 0.0))
            return VflmParams(G=G, **params)
        except (KeyError, TypeError, ValueError) as exc:
            raise CaseFormatError(f"bad vflm parameters: {exc}", path=path) from None
    cls = _KINDS.get(kind)
    if cls is None:
        raise CaseFormatError(f"unknown model kind {kind!r}", path=path)
    try:
        return cls(**params)
    except TypeError as exc:
        raise CaseFormatError(f"bad {kind} parameters: {exc}", path=path) from None


def write_model_file(model, path, meta: dict | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, meta), indent=2, sort_keys=True) + "\n")


def read_model_file(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CaseFormatError(exc.msg, line=exc.lineno, column=exc.colno, path=path) from None
    return model_from_dict(doc, path)

